//! Per-node execution of dynamic-preference Q-learning.
//!
//! Node `i` stores only the rows `Q^i_beta(j, a)` for its own outgoing links.
//! Forwarding a packet is a data message to the chosen neighbor; the receiver
//! answers with an acknowledgement carrying the delivery reward and its own
//! `max_a' Q_beta(j, a')` for every grid preference. A lost packet produces a
//! timeout instead, which the sender treats as the terminal state. The
//! destination's final self-delivery step is a purely local update.
//!
//! Agents never touch one another's tables; the episode runner moves values
//! between them only inside [`AckMessage`]s, and every message is recorded in
//! a [`MessageLog`] that is sufficient to replay all updates.

use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};
use crate::learner::{behavior_slot, interpolate, row_max, step_cap, td_step, LearningRate, QTableFamily, TableLayout};
use crate::mdp::{self, rewards_for, RewardPair, State, TransitionSample};
use crate::preference::{bracket, PreferenceGrid};
use crate::topology::{NodeId, Topology};

pub const DATA_PAYLOAD_BYTES: usize = 133;
pub const PACKET_OVERHEAD_BYTES: usize = 30;

#[derive(Clone, Debug, PartialEq)]
pub struct NodeAgent {
    id: NodeId,
    neighbors: Vec<NodeId>,
    /// Transmission energy of each outgoing link; known to the sender.
    link_energy: Vec<f64>,
    dests: Vec<NodeId>,
    dest_slot: Vec<Option<usize>>,
    /// `local_q[b][d * degree + slot]`.
    local_q: Vec<Vec<f64>>,
    visits: Vec<u64>,
}

impl NodeAgent {
    pub fn new(topology: &Topology, id: NodeId, grid_points: usize, dests: &[NodeId]) -> Result<Self> {
        if !topology.contains(id) {
            return Err(Error::UnknownNode(id));
        }
        let mut dest_slot = vec![None; topology.node_count()];
        let mut kept = Vec::new();
        for &d in dests {
            if !topology.contains(d) {
                return Err(Error::UnknownNode(d));
            }
            if dest_slot[d.0].is_none() {
                dest_slot[d.0] = Some(kept.len());
                kept.push(d);
            }
        }
        let links = topology.links(id);
        let len = kept.len() * links.len();
        Ok(NodeAgent {
            id,
            neighbors: links.iter().map(|l| l.to).collect(),
            link_energy: links.iter().map(|l| l.energy).collect(),
            dests: kept,
            dest_slot,
            local_q: vec![vec![0.0; len]; grid_points],
            visits: vec![0; len],
        })
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn neighbors(&self) -> &[NodeId] {
        &self.neighbors
    }

    pub fn dests(&self) -> &[NodeId] {
        &self.dests
    }

    /// `Q^i_beta(dest, action)` for grid point `beta_index`.
    pub fn value(&self, beta_index: usize, dest: NodeId, action: NodeId) -> Result<f64> {
        let base = self.row_start(dest)?;
        Ok(self.local_q[beta_index][base + self.slot(action)?])
    }

    fn row_start(&self, dest: NodeId) -> Result<usize> {
        let d = self.dest_slot.get(dest.0).copied().flatten().ok_or(Error::UntrackedDestination(dest))?;
        Ok(d * self.neighbors.len())
    }

    fn slot(&self, action: NodeId) -> Result<usize> {
        self.neighbors.iter().position(|&n| n == action).ok_or(Error::IllegalAction { node: self.id, action })
    }

    /// `max_a' Q^i_beta(dest, a')` for every grid preference.
    pub fn max_q(&self, dest: NodeId) -> Result<Vec<f64>> {
        let base = self.row_start(dest)?;
        let deg = self.neighbors.len();
        Ok(self.local_q.iter().map(|q| row_max(q[base..base + deg].iter().copied())).collect())
    }

    /// Acknowledgement for a data packet this node just received.
    pub fn acknowledge(&self, data: &DataMessage) -> Result<AckMessage> {
        Ok(AckMessage {
            from: self.id,
            to: data.from,
            dest: data.dest,
            delivered_reward: 0.0,
            max_q: self.max_q(data.dest)?,
        })
    }

    /// Local acknowledgement of the self-delivery step at the destination:
    /// delivery reward 1 and a terminal (all-zero) bootstrap.
    pub fn self_ack(&self, dest: NodeId) -> AckMessage {
        AckMessage { from: self.id, to: self.id, dest, delivered_reward: 1.0, max_q: vec![0.0; self.local_q.len()] }
    }

    /// Energy part of the reward for forwarding towards `dest` via `action`.
    pub fn local_rewards(&self, dest: NodeId, action: NodeId) -> Result<RewardPair> {
        Ok(rewards_for(self.id, dest, self.link_energy[self.slot(action)?]))
    }
}

pub fn build_agents(topology: &Topology, grid: &PreferenceGrid, dests: &[NodeId]) -> Result<Vec<NodeAgent>> {
    topology.nodes().map(|i| NodeAgent::new(topology, i, grid.len(), dests)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataMessage {
    pub dest: NodeId,
    pub from: NodeId,
    pub to: NodeId,
    pub payload_bytes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AckMessage {
    /// The receiver of the data packet being acknowledged.
    pub from: NodeId,
    pub to: NodeId,
    pub dest: NodeId,
    pub delivered_reward: f64,
    /// One entry per grid preference.
    pub max_q: Vec<f64>,
}

impl AckMessage {
    pub fn payload_bytes(&self) -> usize {
        PACKET_OVERHEAD_BYTES + 8 * self.max_q.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AckOutcome {
    Ack(AckMessage),
    /// The packet was lost; no acknowledgement will arrive.
    Timeout,
}

/// Epsilon-greedy next hop over the agent's interpolated local row for `dest`.
pub fn node_forward<R: Rng + ?Sized>(
    agent: &NodeAgent,
    dest: NodeId,
    beta: f64,
    grid: &PreferenceGrid,
    epsilon: f64,
    rng: &mut R,
) -> Result<NodeId> {
    let b = bracket(grid, beta)?;
    let base = agent.row_start(dest)?;
    let lower = &agent.local_q[b.lower_index][base..];
    let upper = &agent.local_q[b.upper_index][base..];
    let value = |s: usize| {
        if b.is_exact() {
            lower[s]
        } else {
            interpolate(lower[s], upper[s], b.rho)
        }
    };
    Ok(agent.neighbors[behavior_slot(&agent.neighbors, value, epsilon, rng)])
}

/// Distributed Q-update of `Q^i_beta(dest, action)` for every grid preference.
pub fn node_apply_ack(
    agent: &mut NodeAgent,
    dest: NodeId,
    action: NodeId,
    rewards: RewardPair,
    outcome: &AckOutcome,
    lr: &LearningRate,
    grid: &PreferenceGrid,
) -> Result<()> {
    let i = agent.row_start(dest)? + agent.slot(action)?;
    if let AckOutcome::Ack(ack) = outcome {
        if ack.max_q.len() != grid.len() {
            return Err(Error::Config(format!("ack carries {} values for a grid of {}", ack.max_q.len(), grid.len())));
        }
    }
    let alpha = lr.alpha(agent.visits[i]);
    for (b, &beta) in grid.values().iter().enumerate() {
        let (pdr, bootstrap) = match outcome {
            AckOutcome::Ack(ack) => (ack.delivered_reward, ack.max_q[b]),
            AckOutcome::Timeout => (0.0, 0.0),
        };
        let reward = RewardPair { energy: rewards.energy, pdr }.scalarized(beta);
        td_step(&mut agent.local_q[b][i], alpha, reward, bootstrap);
    }
    agent.visits[i] += 1;
    Ok(())
}

/// `8 * |B| * |S_local| * |A|` bytes of 64-bit Q-values.
pub fn local_memory_bytes(agent: &NodeAgent, grid: &PreferenceGrid) -> usize {
    memory_footprint_bytes(grid.len(), agent.dests.len(), agent.neighbors.len())
}

pub fn memory_footprint_bytes(grid_points: usize, local_states: usize, actions: usize) -> usize {
    8 * grid_points * local_states * actions
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MessageKind {
    Data,
    Ack,
    Timeout,
    /// Local self-delivery step at the destination; nothing is transmitted.
    Deliver,
}

impl MessageKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MessageKind::Data => "data",
            MessageKind::Ack => "ack",
            MessageKind::Timeout => "timeout",
            MessageKind::Deliver => "deliver",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MessageRecord {
    pub episode: usize,
    pub hop: usize,
    pub kind: MessageKind,
    pub from: NodeId,
    pub to: NodeId,
    pub dest: NodeId,
    pub payload_bytes: usize,
    /// Values carried by an ack (delivery reward first, then max-Q per
    /// preference); empty for other kinds.
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MessageLog {
    pub records: Vec<MessageRecord>,
}

impl MessageLog {
    pub fn count(&self, kind: MessageKind) -> usize {
        self.records.iter().filter(|r| r.kind == kind).count()
    }

    /// `episode,hop,kind,from,to,dest,payload_bytes` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["episode", "hop", "kind", "from", "to", "dest", "payload_bytes"])?;
        for r in &self.records {
            w.serialize((r.episode, r.hop, r.kind.as_str(), r.from.0, r.to.0, r.dest.0, r.payload_bytes))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistributedEpisode {
    pub trajectory: Vec<TransitionSample>,
    pub delivered: bool,
    pub steps: usize,
    pub capped: bool,
    /// Transmission energy of each forwarding hop, in hop order.
    pub hop_energy: Vec<f64>,
}

/// Routes one packet with every decision and update made by the agents
/// themselves. The physical channel is the same [`mdp::step`] the
/// centralized learner uses, so equal seeds give equal trajectories.
#[allow(clippy::too_many_arguments)]
pub fn run_distributed_episode<R: Rng + ?Sized>(
    agents: &mut [NodeAgent],
    topology: &Topology,
    grid: &PreferenceGrid,
    beta_m: f64,
    source: NodeId,
    dest: NodeId,
    epsilon: f64,
    lr: &LearningRate,
    rng: &mut R,
    mut log: Option<&mut MessageLog>,
    episode: usize,
) -> Result<DistributedEpisode> {
    if agents.len() != topology.node_count() {
        return Err(Error::Config("one agent per node is required".into()));
    }
    for n in [source, dest] {
        if !topology.contains(n) {
            return Err(Error::UnknownNode(n));
        }
    }
    let cap = step_cap(topology);
    let mut trajectory = Vec::new();
    let mut hop_energy = Vec::new();
    let mut delivered = false;
    let mut capped = false;
    let mut current = source;
    loop {
        let hop = trajectory.len();
        if hop == cap {
            capped = true;
            break;
        }
        let state = State::pair(current, dest);
        let action = node_forward(&agents[current.0], dest, beta_m, grid, epsilon, rng)?;
        let sample = mdp::step(topology, state, action, rng)?;
        let rewards = agents[current.0].local_rewards(dest, action)?;
        let mut record = |kind, from: NodeId, to: NodeId, payload_bytes, values: Vec<f64>| {
            if let Some(log) = log.as_deref_mut() {
                log.records.push(MessageRecord { episode, hop, kind, from, to, dest, payload_bytes, values });
            }
        };

        let outcome = if current == dest {
            delivered = true;
            record(MessageKind::Deliver, current, action, 0, Vec::new());
            AckOutcome::Ack(agents[current.0].self_ack(dest))
        } else {
            let data = DataMessage {
                dest,
                from: current,
                to: action,
                payload_bytes: DATA_PAYLOAD_BYTES + PACKET_OVERHEAD_BYTES,
            };
            hop_energy.push(-rewards.energy);
            record(MessageKind::Data, data.from, data.to, data.payload_bytes, Vec::new());
            match sample.next_state {
                State::Terminal => {
                    record(MessageKind::Timeout, data.to, data.from, 0, Vec::new());
                    AckOutcome::Timeout
                }
                State::Pair { .. } => {
                    let ack = agents[action.0].acknowledge(&data)?;
                    let mut values = vec![ack.delivered_reward];
                    values.extend_from_slice(&ack.max_q);
                    record(MessageKind::Ack, ack.from, ack.to, ack.payload_bytes(), values);
                    AckOutcome::Ack(ack)
                }
            }
        };
        node_apply_ack(&mut agents[current.0], dest, action, rewards, &outcome, lr, grid)?;
        trajectory.push(sample);
        match sample.next_state {
            State::Terminal => break,
            State::Pair { current: next, .. } => current = next,
        }
    }
    let steps = trajectory.len();
    Ok(DistributedEpisode { trajectory, delivered, steps, capped, hop_energy })
}

/// Collects the agents' local rows into a centralized family over the
/// agents' destination set.
pub fn assemble_family(agents: &[NodeAgent], topology: &Topology, grid: &PreferenceGrid) -> Result<QTableFamily> {
    let dests = agents.first().map(|a| a.dests.clone()).unwrap_or_default();
    let layout = TableLayout::new(topology, &dests)?;
    let mut family = QTableFamily::new(grid.clone(), layout.clone());
    for agent in agents {
        let deg = agent.neighbors.len();
        for (d, &dest) in agent.dests.iter().enumerate() {
            let row = layout.row(agent.id, dest)?;
            for (b, table) in family.tables_mut().iter_mut().enumerate() {
                table.values_mut()[row.clone()].copy_from_slice(&agent.local_q[b][d * deg..(d + 1) * deg]);
                table.visits_mut()[row.clone()].copy_from_slice(&agent.visits[d * deg..(d + 1) * deg]);
            }
        }
    }
    Ok(family)
}

/// Rebuilds every agent from scratch using only the message log and each
/// node's own link energies. Equality with the live agents shows that no
/// cross-node value reached an update except through a logged ack.
pub fn replay_log(
    topology: &Topology,
    grid: &PreferenceGrid,
    dests: &[NodeId],
    lr: &LearningRate,
    log: &MessageLog,
) -> Result<Vec<NodeAgent>> {
    let mut agents = build_agents(topology, grid, dests)?;
    let mut pending: Option<&MessageRecord> = None;
    for r in &log.records {
        match r.kind {
            MessageKind::Data => {
                if pending.is_some() {
                    return Err(Error::Parse(format!("data at hop {} before the previous hop resolved", r.hop)));
                }
                pending = Some(r);
            }
            MessageKind::Ack | MessageKind::Timeout => {
                let data = pending
                    .take()
                    .ok_or_else(|| Error::Parse(format!("{} without data at hop {}", r.kind.as_str(), r.hop)))?;
                if r.from != data.to || r.to != data.from || r.dest != data.dest {
                    return Err(Error::Parse(format!("reply at hop {} does not match its data message", r.hop)));
                }
                let sender = &mut agents[data.from.0];
                let rewards = sender.local_rewards(data.dest, data.to)?;
                let outcome = if r.kind == MessageKind::Timeout {
                    AckOutcome::Timeout
                } else {
                    AckOutcome::Ack(AckMessage {
                        from: r.from,
                        to: r.to,
                        dest: r.dest,
                        delivered_reward: r.values[0],
                        max_q: r.values[1..].to_vec(),
                    })
                };
                node_apply_ack(sender, data.dest, data.to, rewards, &outcome, lr, grid)?;
            }
            MessageKind::Deliver => {
                let agent = &mut agents[r.from.0];
                let rewards = agent.local_rewards(r.dest, r.to)?;
                let ack = agent.self_ack(r.dest);
                node_apply_ack(agent, r.dest, r.to, rewards, &AckOutcome::Ack(ack), lr, grid)?;
            }
        }
    }
    if pending.is_some() {
        return Err(Error::Parse("log ends with an unanswered data message".into()));
    }
    Ok(agents)
}
