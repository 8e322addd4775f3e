//! Dynamic-preference Q-learning.
//!
//! One Q-table per grid preference is updated from every transition sample,
//! whatever policy generated it (Q-learning is off-policy). Behaviour uses the
//! greedy interpolation policy: the table for a requested preference is the
//! convex combination of the two grid tables around it.

use std::io::Write;
use std::ops::Range;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{self, State, TransitionSample};
use crate::preference::{bracket, Bracket, PreferenceGrid};
use crate::topology::{Link, NodeId, Topology};

/// Which (state, action) pairs a table stores: every link of every node, for
/// each tracked destination.
#[derive(Debug, PartialEq, Eq)]
pub struct TableLayout {
    dests: Vec<NodeId>,
    dest_slot: Vec<Option<usize>>,
    offsets: Vec<usize>,
    edge_count: usize,
}

impl TableLayout {
    pub fn new(topology: &Topology, dests: &[NodeId]) -> Result<Arc<Self>> {
        let n = topology.node_count();
        let mut dest_slot = vec![None; n];
        let mut kept = Vec::with_capacity(dests.len());
        for &d in dests {
            if !topology.contains(d) {
                return Err(Error::UnknownNode(d));
            }
            if dest_slot[d.0].is_none() {
                dest_slot[d.0] = Some(kept.len());
                kept.push(d);
            }
        }
        if kept.is_empty() {
            return Err(Error::Config("a Q-table needs at least one destination".into()));
        }
        let offsets =
            (0..=n).map(|i| if i < n { topology.edge_offset(NodeId(i)) } else { topology.edge_count() }).collect();
        Ok(Arc::new(TableLayout { dests: kept, dest_slot, offsets, edge_count: topology.edge_count() }))
    }

    pub fn all_destinations(topology: &Topology) -> Arc<Self> {
        let dests: Vec<_> = topology.nodes().collect();
        Self::new(topology, &dests).expect("every node is a valid destination")
    }

    pub fn sink_only(topology: &Topology) -> Arc<Self> {
        Self::new(topology, &[topology.sink()]).expect("the sink is a valid destination")
    }

    pub fn dests(&self) -> &[NodeId] {
        &self.dests
    }

    pub fn tracks(&self, dest: NodeId) -> bool {
        self.dest_slot.get(dest.0).copied().flatten().is_some()
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of stored entries.
    pub fn len(&self) -> usize {
        self.dests.len() * self.edge_count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index range of the action values of state `(current, dest)`.
    pub fn row(&self, current: NodeId, dest: NodeId) -> Result<Range<usize>> {
        let d = self.dest_slot.get(dest.0).copied().flatten().ok_or(Error::UntrackedDestination(dest))?;
        if current.0 >= self.node_count() {
            return Err(Error::UnknownNode(current));
        }
        let base = d * self.edge_count;
        Ok(base + self.offsets[current.0]..base + self.offsets[current.0 + 1])
    }
}

/// Tabular action values plus per-entry visit counts. The terminal state is
/// never stored; it is worth 0.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    layout: Arc<TableLayout>,
    values: Vec<f64>,
    visits: Vec<u64>,
}

impl QTable {
    pub fn zeros(layout: Arc<TableLayout>) -> Self {
        let len = layout.len();
        QTable { layout, values: vec![0.0; len], visits: vec![0; len] }
    }

    pub fn layout(&self) -> &Arc<TableLayout> {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub(crate) fn visits_mut(&mut self) -> &mut [u64] {
        &mut self.visits
    }

    pub fn visits(&self) -> &[u64] {
        &self.visits
    }

    pub fn row(&self, current: NodeId, dest: NodeId) -> Result<&[f64]> {
        Ok(&self.values[self.layout.row(current, dest)?])
    }

    pub fn get(&self, topology: &Topology, state: State, action: NodeId) -> Result<f64> {
        Ok(self.values[entry_index(&self.layout, topology, state, action)?])
    }

    pub fn set(&mut self, topology: &Topology, state: State, action: NodeId, value: f64) -> Result<()> {
        let i = entry_index(&self.layout, topology, state, action)?;
        self.values[i] = value;
        Ok(())
    }

    /// `max_a Q(s, a)`, with the terminal state worth 0.
    pub fn state_value(&self, state: State) -> Result<f64> {
        match state {
            State::Terminal => Ok(0.0),
            State::Pair { current, dest } => Ok(row_max(self.row(current, dest)?.iter().copied())),
        }
    }

    pub fn reset(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
        self.visits.iter_mut().for_each(|v| *v = 0);
    }

    /// `max |self - other|` over all entries. Both tables must share a layout.
    pub fn sup_distance(&self, other: &QTable) -> f64 {
        assert_eq!(self.layout, other.layout, "tables have different layouts");
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

fn entry_index(layout: &TableLayout, topology: &Topology, state: State, action: NodeId) -> Result<usize> {
    let State::Pair { current, dest } = state else {
        return Err(Error::TerminalState);
    };
    let slot = topology.slot(current, action).ok_or(Error::IllegalAction { node: current, action })?;
    Ok(layout.row(current, dest)?.start + slot)
}

#[inline]
pub(crate) fn row_max(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::NEG_INFINITY, f64::max)
}

#[inline]
pub(crate) fn interpolate(lower: f64, upper: f64, rho: f64) -> f64 {
    (1.0 - rho) * lower + rho * upper
}

/// `q <- q + alpha * (reward + bootstrap - q)`.
#[inline]
pub(crate) fn td_step(q: &mut f64, alpha: f64, reward: f64, bootstrap: f64) {
    *q += alpha * (reward + bootstrap - *q);
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LearningRate {
    Constant {
        alpha: f64,
    },
    /// `c / (1 + visits)^omega`, with `visits` counted before the update.
    VisitDecay {
        c: f64,
        omega: f64,
    },
}

impl LearningRate {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LearningRate::Constant { alpha } if alpha > 0.0 && alpha <= 1.0 => Ok(()),
            LearningRate::VisitDecay { c, omega } if c > 0.0 && c <= 1.0 && omega > 0.5 && omega <= 1.0 => Ok(()),
            other => Err(Error::Config(format!("invalid learning rate {other:?}"))),
        }
    }

    #[inline]
    pub fn alpha(&self, visits: u64) -> f64 {
        match *self {
            LearningRate::Constant { alpha } => alpha,
            LearningRate::VisitDecay { c, omega } => c / (1.0 + visits as f64).powf(omega),
        }
    }
}

/// Single-preference Q-learning update of `table` from `sample`.
pub fn td_update(
    table: &mut QTable,
    topology: &Topology,
    sample: &TransitionSample,
    beta: f64,
    lr: &LearningRate,
) -> Result<()> {
    let i = entry_index(&table.layout, topology, sample.state, sample.action)?;
    let bootstrap = table.state_value(sample.next_state)?;
    let alpha = lr.alpha(table.visits[i]);
    td_step(&mut table.values[i], alpha, sample.rewards.scalarized(beta), bootstrap);
    table.visits[i] += 1;
    Ok(())
}

/// One Q-table per grid preference, in ascending preference order.
#[derive(Clone, Debug, PartialEq)]
pub struct QTableFamily {
    grid: PreferenceGrid,
    tables: Vec<QTable>,
}

impl QTableFamily {
    pub fn new(grid: PreferenceGrid, layout: Arc<TableLayout>) -> Self {
        let tables = (0..grid.len()).map(|_| QTable::zeros(layout.clone())).collect();
        QTableFamily { grid, tables }
    }

    pub fn from_tables(grid: PreferenceGrid, tables: Vec<QTable>) -> Result<Self> {
        if tables.len() != grid.len() {
            return Err(Error::InvalidGrid(format!("{} tables for a grid of {} points", tables.len(), grid.len())));
        }
        if tables.windows(2).any(|w| w[0].layout != w[1].layout) {
            return Err(Error::InvalidGrid("tables do not share a layout".into()));
        }
        Ok(QTableFamily { grid, tables })
    }

    pub fn grid(&self) -> &PreferenceGrid {
        &self.grid
    }

    pub fn tables(&self) -> &[QTable] {
        &self.tables
    }

    pub fn tables_mut(&mut self) -> &mut [QTable] {
        &mut self.tables
    }

    pub fn layout(&self) -> &Arc<TableLayout> {
        self.tables[0].layout()
    }

    /// Table used by the greedy interpolation policy at `beta`.
    pub fn gip_table(&self, beta: f64) -> Result<QTableView<'_>> {
        Ok(self.view(&bracket(&self.grid, beta)?))
    }

    pub fn view(&self, bracket: &Bracket) -> QTableView<'_> {
        if bracket.is_exact() {
            QTableView::Exact(&self.tables[bracket.lower_index])
        } else {
            QTableView::Interpolated {
                lower: &self.tables[bracket.lower_index],
                upper: &self.tables[bracket.upper_index],
                rho: bracket.rho,
            }
        }
    }
}

/// Updates every table of the family from one sample, in ascending
/// preference order.
pub fn dpq_update(
    family: &mut QTableFamily,
    topology: &Topology,
    sample: &TransitionSample,
    lr: &LearningRate,
) -> Result<()> {
    let QTableFamily { grid, tables } = family;
    for (table, &beta) in tables.iter_mut().zip(grid.values()) {
        td_update(table, topology, sample, beta, lr)?;
    }
    Ok(())
}

/// A stored table, or the lazy convex combination of two.
#[derive(Clone, Copy, Debug)]
pub enum QTableView<'a> {
    Exact(&'a QTable),
    Interpolated { lower: &'a QTable, upper: &'a QTable, rho: f64 },
}

impl QTableView<'_> {
    pub fn layout(&self) -> &Arc<TableLayout> {
        match self {
            QTableView::Exact(t) => t.layout(),
            QTableView::Interpolated { lower, .. } => lower.layout(),
        }
    }

    #[inline]
    pub fn value_at(&self, index: usize) -> f64 {
        match self {
            QTableView::Exact(t) => t.values[index],
            QTableView::Interpolated { lower, upper, rho } => {
                interpolate(lower.values[index], upper.values[index], *rho)
            }
        }
    }

    pub fn get(&self, topology: &Topology, state: State, action: NodeId) -> Result<f64> {
        Ok(self.value_at(entry_index(self.layout(), topology, state, action)?))
    }

    pub fn materialize(&self) -> QTable {
        match self {
            QTableView::Exact(t) => (*t).clone(),
            QTableView::Interpolated { lower, .. } => {
                let mut out = QTable::zeros(lower.layout.clone());
                for (i, v) in out.values.iter_mut().enumerate() {
                    *v = self.value_at(i);
                }
                out
            }
        }
    }
}

/// Anything naming the node a slot forwards to.
pub(crate) trait HopTarget {
    fn target(&self) -> NodeId;
}

impl HopTarget for Link {
    fn target(&self) -> NodeId {
        self.to
    }
}

impl HopTarget for NodeId {
    fn target(&self) -> NodeId {
        *self
    }
}

/// Argmax slot; ties go to the lowest neighbor id.
pub(crate) fn greedy_slot<T: HopTarget>(links: &[T], value: impl Fn(usize) -> f64) -> usize {
    let mut best = 0;
    let mut best_value = value(0);
    for slot in 1..links.len() {
        let v = value(slot);
        if v > best_value || (v == best_value && links[slot].target() < links[best].target()) {
            best = slot;
            best_value = v;
        }
    }
    best
}

/// Epsilon-greedy slot. Consumes no randomness when `epsilon == 0`, and skips
/// the coin flip when `epsilon == 1`.
pub(crate) fn behavior_slot<T: HopTarget, R: Rng + ?Sized>(
    links: &[T],
    value: impl Fn(usize) -> f64,
    epsilon: f64,
    rng: &mut R,
) -> usize {
    if epsilon >= 1.0 || (epsilon > 0.0 && rng.gen::<f64>() < epsilon) {
        rng.gen_range(0..links.len())
    } else {
        greedy_slot(links, value)
    }
}

fn pair_row(view: &QTableView<'_>, state: State) -> Result<(NodeId, Range<usize>)> {
    let State::Pair { current, dest } = state else {
        return Err(Error::TerminalState);
    };
    Ok((current, view.layout().row(current, dest)?))
}

pub fn greedy_action(view: &QTableView<'_>, topology: &Topology, state: State) -> Result<NodeId> {
    let (current, row) = pair_row(view, state)?;
    let links = topology.links(current);
    Ok(links[greedy_slot(links, |s| view.value_at(row.start + s))].to)
}

pub fn behavior_action<R: Rng + ?Sized>(
    view: &QTableView<'_>,
    topology: &Topology,
    state: State,
    epsilon: f64,
    rng: &mut R,
) -> Result<NodeId> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Config(format!("epsilon {epsilon} is outside [0, 1]")));
    }
    let (current, row) = pair_row(view, state)?;
    let links = topology.links(current);
    Ok(links[behavior_slot(links, |s| view.value_at(row.start + s), epsilon, rng)].to)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExplorationSchedule {
    /// Pure exploration for the first `episodes`, greedy afterwards.
    Sequential { episodes: usize },
    /// Linear interpolation from `begin` to `end` over `horizon` episodes.
    EpsilonLinear { begin: f64, end: f64, horizon: usize },
}

impl ExplorationSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ExplorationSchedule::Sequential { .. } => Ok(()),
            ExplorationSchedule::EpsilonLinear { begin, end, .. } => {
                if (0.0..=1.0).contains(&begin) && (0.0..=1.0).contains(&end) {
                    Ok(())
                } else {
                    Err(Error::Config(format!("epsilon bounds {begin}, {end} must lie in [0, 1]")))
                }
            }
        }
    }
}

pub fn epsilon_at(schedule: &ExplorationSchedule, episode_index: usize) -> f64 {
    match *schedule {
        ExplorationSchedule::Sequential { episodes } => {
            if episode_index < episodes {
                1.0
            } else {
                0.0
            }
        }
        ExplorationSchedule::EpsilonLinear { begin, end, horizon } => {
            let frac = if horizon == 0 { 1.0 } else { (episode_index as f64 / horizon as f64).min(1.0) };
            begin + (end - begin) * frac
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PolicyMode {
    Behavior { epsilon: f64 },
    Greedy,
}

impl PolicyMode {
    pub fn epsilon(&self) -> f64 {
        match *self {
            PolicyMode::Behavior { epsilon } => epsilon,
            PolicyMode::Greedy => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub trajectory: Vec<TransitionSample>,
    /// The destination state was reached and its self-delivery step taken.
    pub delivered: bool,
    /// Actions taken, including the self-delivery step.
    pub steps: usize,
    /// The episode hit the step cap before reaching the terminal state.
    pub capped: bool,
}

/// Per-episode action budget.
pub fn step_cap(topology: &Topology) -> usize {
    4 * topology.node_count()
}

/// Anything that picks next hops and learns from the resulting samples.
pub trait RoutingAgent {
    fn choose<R: Rng + ?Sized>(
        &self,
        topology: &Topology,
        current: NodeId,
        dest: NodeId,
        rng: &mut R,
    ) -> Result<NodeId>;

    fn learn(&mut self, topology: &Topology, sample: &TransitionSample) -> Result<()>;
}

/// Routes one packet from `source` to `dest`, letting `agent` learn from
/// every sample.
pub fn roll_out<A: RoutingAgent, R: Rng + ?Sized>(
    topology: &Topology,
    agent: &mut A,
    source: NodeId,
    dest: NodeId,
    rng: &mut R,
) -> Result<Episode> {
    for n in [source, dest] {
        if !topology.contains(n) {
            return Err(Error::UnknownNode(n));
        }
    }
    let cap = step_cap(topology);
    let mut trajectory = Vec::new();
    let mut delivered = false;
    let mut capped = false;
    let mut state = State::pair(source, dest);
    while let State::Pair { current, .. } = state {
        if trajectory.len() == cap {
            capped = true;
            break;
        }
        let action = agent.choose(topology, current, dest, rng)?;
        let sample = mdp::step(topology, state, action, rng)?;
        agent.learn(topology, &sample)?;
        delivered |= sample.state.at_destination();
        state = sample.next_state;
        trajectory.push(sample);
    }
    let steps = trajectory.len();
    Ok(Episode { trajectory, delivered, steps, capped })
}

struct DpqEpisode<'a> {
    family: &'a mut QTableFamily,
    bracket: Bracket,
    epsilon: f64,
    lr: &'a LearningRate,
}

impl RoutingAgent for DpqEpisode<'_> {
    fn choose<R: Rng + ?Sized>(
        &self,
        topology: &Topology,
        current: NodeId,
        dest: NodeId,
        rng: &mut R,
    ) -> Result<NodeId> {
        let view = self.family.view(&self.bracket);
        behavior_action(&view, topology, State::pair(current, dest), self.epsilon, rng)
    }

    fn learn(&mut self, topology: &Topology, sample: &TransitionSample) -> Result<()> {
        dpq_update(self.family, topology, sample, self.lr)
    }
}

/// One episode of dynamic-preference Q-learning: act with the interpolation
/// policy at `beta_m` (epsilon-greedy in behaviour mode) and update every
/// grid table from every sample.
#[allow(clippy::too_many_arguments)]
pub fn run_episode<R: Rng + ?Sized>(
    topology: &Topology,
    family: &mut QTableFamily,
    beta_m: f64,
    mode: PolicyMode,
    source: NodeId,
    dest: NodeId,
    lr: &LearningRate,
    rng: &mut R,
) -> Result<Episode> {
    let bracket = bracket(family.grid(), beta_m)?;
    let mut agent = DpqEpisode { family, bracket, epsilon: mode.epsilon(), lr };
    roll_out(topology, &mut agent, source, dest, rng)
}

/// Writes `current,dest,action,beta,value` rows for every stored entry.
pub fn write_snapshot<W: Write>(family: &QTableFamily, topology: &Topology, out: W) -> Result<()> {
    let pairs: Vec<_> = family.grid().values().iter().copied().zip(family.tables()).collect();
    write_rows(&pairs, topology, out)
}

/// Snapshot of a single table learned for `beta`.
pub fn write_table_snapshot<W: Write>(table: &QTable, beta: f64, topology: &Topology, out: W) -> Result<()> {
    write_rows(&[(beta, table)], topology, out)
}

fn write_rows<W: Write>(tables: &[(f64, &QTable)], topology: &Topology, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["current", "dest", "action", "beta", "value"])?;
    let Some((_, first)) = tables.first() else {
        w.flush()?;
        return Ok(());
    };
    let layout = first.layout();
    for &dest in layout.dests() {
        for current in topology.nodes() {
            let row = layout.row(current, dest)?;
            for (slot, link) in topology.links(current).iter().enumerate() {
                for (beta, table) in tables {
                    w.serialize((current.0, dest.0, link.to.0, beta, table.values[row.start + slot]))?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}
