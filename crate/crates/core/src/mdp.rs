//! Stochastic-shortest-path routing MDP.
//!
//! A state is the pair (packet location, destination) or the absorbing
//! terminal state. Taking action `a` from `(i, j)` with `i != j` transmits
//! to neighbor `a`: the link loses the packet with probability `P(i, a)`,
//! and if it survives and `a` is an unreliable node, `a` drops it with
//! probability `p_drop(a)`. From `(j, j)` every action leads to the terminal
//! state; that final self-delivery step is what earns the delivery reward.

use rand::Rng;

use crate::error::{Error, Result};
use crate::topology::{NodeId, Topology};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum State {
    Pair { current: NodeId, dest: NodeId },
    Terminal,
}

impl State {
    pub fn pair(current: NodeId, dest: NodeId) -> Self {
        State::Pair { current, dest }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, State::Terminal)
    }

    pub fn at_destination(&self) -> bool {
        matches!(self, State::Pair { current, dest } if current == dest)
    }
}

/// Per-step energy and delivery rewards.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardPair {
    /// `-E(i, a)` away from the destination, 0 at it.
    pub energy: f64,
    /// 1 at the destination, 0 elsewhere.
    pub pdr: f64,
}

impl RewardPair {
    /// `beta * energy + (1 - beta) * pdr`. The caller guarantees `beta` is in `[0, 1]`.
    #[inline]
    pub fn scalarized(&self, beta: f64) -> f64 {
        beta * self.energy + (1.0 - beta) * self.pdr
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionSample {
    pub state: State,
    pub action: NodeId,
    pub rewards: RewardPair,
    pub next_state: State,
}

pub fn check_beta(beta: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&beta) {
        Ok(beta)
    } else {
        Err(Error::PreferenceOutOfRange(beta))
    }
}

pub fn scalarize(rewards: RewardPair, beta: f64) -> Result<f64> {
    Ok(rewards.scalarized(check_beta(beta)?))
}

/// Admissible next hops from `state`, in stored neighbor order.
pub fn actions(topology: &Topology, state: State) -> Result<Vec<NodeId>> {
    match state {
        State::Terminal => Err(Error::TerminalState),
        State::Pair { current, dest } => {
            check_pair(topology, current, dest)?;
            Ok(topology.neighbors(current).collect())
        }
    }
}

pub fn reward_pair(topology: &Topology, state: State, action: NodeId) -> Result<RewardPair> {
    let (current, dest) = match state {
        State::Terminal => return Err(Error::TerminalState),
        State::Pair { current, dest } => (current, dest),
    };
    check_pair(topology, current, dest)?;
    let link = topology.link(current, action).ok_or(Error::IllegalAction { node: current, action })?;
    Ok(rewards_for(current, dest, link.energy))
}

#[inline]
pub(crate) fn rewards_for(current: NodeId, dest: NodeId, energy: f64) -> RewardPair {
    if current == dest {
        RewardPair { energy: 0.0, pdr: 1.0 }
    } else {
        RewardPair { energy: -energy, pdr: 0.0 }
    }
}

/// Samples one transition. Rewards are earned when the action is taken,
/// whether or not the packet then survives.
pub fn step<R: Rng + ?Sized>(
    topology: &Topology,
    state: State,
    action: NodeId,
    rng: &mut R,
) -> Result<TransitionSample> {
    let rewards = reward_pair(topology, state, action)?;
    let State::Pair { current, dest } = state else {
        return Err(Error::TerminalState);
    };
    let next_state = if current == dest {
        State::Terminal
    } else {
        let loss = topology.link(current, action).map_or(0.0, |l| l.loss);
        if survives(topology, loss, action, rng) {
            State::pair(action, dest)
        } else {
            State::Terminal
        }
    };
    Ok(TransitionSample { state, action, rewards, next_state })
}

/// Edge loss first, then the receiving node's drop. A draw is consumed only
/// for a mechanism with positive probability.
fn survives<R: Rng + ?Sized>(topology: &Topology, loss: f64, receiver: NodeId, rng: &mut R) -> bool {
    if loss > 0.0 && rng.gen::<f64>() < loss {
        return false;
    }
    let p_drop = topology.drop_prob(receiver);
    !(p_drop > 0.0 && rng.gen::<f64>() < p_drop)
}

/// Probability that a transmission from `current` to `action` lands and is
/// not dropped by the receiver.
pub fn continuation_prob(topology: &Topology, current: NodeId, slot: usize) -> f64 {
    let link = &topology.links(current)[slot];
    (1.0 - link.loss) * (1.0 - topology.drop_prob(link.to))
}

fn check_pair(topology: &Topology, current: NodeId, dest: NodeId) -> Result<()> {
    for n in [current, dest] {
        if !topology.contains(n) {
            return Err(Error::UnknownNode(n));
        }
    }
    Ok(())
}
