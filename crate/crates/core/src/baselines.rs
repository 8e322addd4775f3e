//! Comparison routers: a restart-on-preference-change learner (SMORLR), a
//! single fixed-preference Q-learner and a loss-unaware shortest-path router.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{
    behavior_action, epsilon_at, td_update, ExplorationSchedule, LearningRate, QTable, QTableView, RoutingAgent,
    TableLayout,
};
use crate::mdp::{check_beta, State, TransitionSample};
use crate::topology::{NodeId, Topology};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathMetric {
    #[default]
    Hops,
    Energy,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BaselineKind {
    Smorlr,
    StaticQ { fixed_beta: f64 },
    ShortestPath { metric: PathMetric },
}

impl BaselineKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BaselineKind::StaticQ { fixed_beta } => check_beta(fixed_beta).map(drop),
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            BaselineKind::Smorlr => "SMORLR".into(),
            BaselineKind::StaticQ { fixed_beta } => format!("StaticQ({fixed_beta})"),
            BaselineKind::ShortestPath { metric: PathMetric::Hops } => "ShortestPath(hops)".into(),
            BaselineKind::ShortestPath { metric: PathMetric::Energy } => "ShortestPath(energy)".into(),
        }
    }
}

/// Single-table learner that starts over whenever the preference changes:
/// epsilon restarts at 1 and decays linearly, and the table is zeroed
/// unless `keep_table` is set.
#[derive(Clone, Debug, PartialEq)]
pub struct Smorlr {
    pub table: QTable,
    pub beta: f64,
    /// Episode at which the current exploration ramp started.
    pub restart_episode: usize,
    pub epsilon_horizon: usize,
    pub keep_table: bool,
}

impl Smorlr {
    pub fn new(layout: Arc<TableLayout>, beta: f64, epsilon_horizon: usize, keep_table: bool) -> Result<Self> {
        Ok(Smorlr {
            table: QTable::zeros(layout),
            beta: check_beta(beta)?,
            restart_episode: 0,
            epsilon_horizon,
            keep_table,
        })
    }

    pub fn epsilon(&self, episode: usize) -> f64 {
        let ramp = ExplorationSchedule::EpsilonLinear { begin: 1.0, end: 0.0, horizon: self.epsilon_horizon };
        epsilon_at(&ramp, episode.saturating_sub(self.restart_episode))
    }
}

/// Applies a preference update arriving at `episode`. No-op when the
/// preference is unchanged.
pub fn smorlr_on_preference_change(state: &mut Smorlr, new_beta: f64, episode: usize) -> Result<()> {
    check_beta(new_beta)?;
    if new_beta == state.beta {
        return Ok(());
    }
    state.beta = new_beta;
    state.restart_episode = episode;
    if !state.keep_table {
        state.table.reset();
    }
    Ok(())
}

/// Epsilon-greedy Q-learning of one table for a fixed preference. Also the
/// per-episode driver for [`Smorlr`].
pub struct SingleTableEpisode<'a> {
    pub table: &'a mut QTable,
    pub beta: f64,
    pub epsilon: f64,
    pub lr: &'a LearningRate,
}

impl RoutingAgent for SingleTableEpisode<'_> {
    fn choose<R: Rng + ?Sized>(
        &self,
        topology: &Topology,
        current: NodeId,
        dest: NodeId,
        rng: &mut R,
    ) -> Result<NodeId> {
        let view = QTableView::Exact(self.table);
        behavior_action(&view, topology, State::pair(current, dest), self.epsilon, rng)
    }

    fn learn(&mut self, topology: &Topology, sample: &TransitionSample) -> Result<()> {
        td_update(self.table, topology, sample, self.beta, self.lr)
    }
}

/// Next hop of every node towards `dest`; the entry for `dest` itself is its
/// lowest-id neighbor (any action there ends the episode).
pub fn shortest_path_route(topology: &Topology, dest: NodeId, metric: PathMetric) -> Result<Vec<NodeId>> {
    if !topology.contains(dest) {
        return Err(Error::UnknownNode(dest));
    }
    let dist = reverse_dijkstra(topology, dest, metric);
    topology
        .nodes()
        .map(|i| {
            let links = topology.links(i);
            if i == dest {
                return Ok(links.iter().map(|l| l.to).min().expect("every node has a link"));
            }
            let cost = |k: usize| edge_cost(links[k].energy, metric) + dist[links[k].to.0];
            let best = (0..links.len()).map(cost).fold(f64::INFINITY, f64::min);
            if !best.is_finite() {
                return Err(Error::InvalidTopology {
                    field: "edges",
                    reason: format!("{dest} is unreachable from {i}"),
                });
            }
            let tol = 1e-12 * best.abs().max(1.0);
            Ok(links
                .iter()
                .enumerate()
                .filter(|&(k, _)| cost(k) <= best + tol)
                .map(|(_, l)| l.to)
                .min()
                .expect("at least one minimizer"))
        })
        .collect()
}

/// The node sequence from `source` to `dest` under [`shortest_path_route`].
pub fn shortest_path(topology: &Topology, source: NodeId, dest: NodeId, metric: PathMetric) -> Result<Vec<NodeId>> {
    let route = shortest_path_route(topology, dest, metric)?;
    if !topology.contains(source) {
        return Err(Error::UnknownNode(source));
    }
    let mut path = vec![source];
    let mut at = source;
    while at != dest {
        at = route[at.0];
        path.push(at);
        if path.len() > topology.node_count() {
            return Err(Error::ImproperPolicy("shortest-path route loops".into()));
        }
    }
    Ok(path)
}

fn edge_cost(energy: f64, metric: PathMetric) -> f64 {
    match metric {
        PathMetric::Hops => 1.0,
        PathMetric::Energy => energy,
    }
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Cost-to-`dest` of every node.
fn reverse_dijkstra(topology: &Topology, dest: NodeId, metric: PathMetric) -> Vec<f64> {
    let n = topology.node_count();
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (from, to, _, energy) in topology.edges() {
        incoming[to.0].push((from.0, edge_cost(energy, metric)));
    }
    let mut dist = vec![f64::INFINITY; n];
    dist[dest.0] = 0.0;
    let mut heap = BinaryHeap::from([Entry(0.0, dest.0)]);
    while let Some(Entry(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, c) in &incoming[u] {
            if d + c < dist[v] {
                dist[v] = d + c;
                heap.push(Entry(dist[v], v));
            }
        }
    }
    dist
}

/// Fixed next-hop router; learns nothing and draws no randomness.
pub struct ShortestPathAgent {
    pub dest: NodeId,
    pub route: Vec<NodeId>,
}

impl ShortestPathAgent {
    pub fn new(topology: &Topology, dest: NodeId, metric: PathMetric) -> Result<Self> {
        Ok(ShortestPathAgent { dest, route: shortest_path_route(topology, dest, metric)? })
    }
}

impl RoutingAgent for ShortestPathAgent {
    fn choose<R: Rng + ?Sized>(&self, _: &Topology, current: NodeId, dest: NodeId, _: &mut R) -> Result<NodeId> {
        if dest != self.dest {
            return Err(Error::UntrackedDestination(dest));
        }
        Ok(self.route[current.0])
    }

    fn learn(&mut self, _: &Topology, _: &TransitionSample) -> Result<()> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{grid_topology, line_topology, Corner};

    fn n(i: usize) -> NodeId {
        NodeId(i)
    }

    #[test]
    fn routes() {
        let line = line_topology(3, 0.0, 1.0).unwrap();
        assert_eq!(shortest_path_route(&line, n(2), PathMetric::Hops).unwrap()[0], n(1));
        let g = grid_topology(2, 2, 0.0, 1.0, Corner::BottomRight, &[]).unwrap();
        assert_eq!(shortest_path(&g, n(0), n(3), PathMetric::Hops).unwrap(), vec![n(0), n(1), n(3)]);
    }

    #[test]
    fn energy_metric_takes_cheap_detour() {
        // 0 -> 2 costs 10 directly, 0 -> 1 -> 2 costs 2.
        let edges = [(n(0), n(2), 0.0, 10.0), (n(0), n(1), 0.0, 1.0), (n(1), n(2), 0.0, 1.0), (n(2), n(0), 0.0, 1.0)];
        let t = Topology::new(3, &edges, n(2), &[]).unwrap();
        assert_eq!(shortest_path(&t, n(0), n(2), PathMetric::Energy).unwrap(), vec![n(0), n(1), n(2)]);
        assert_eq!(shortest_path(&t, n(0), n(2), PathMetric::Hops).unwrap(), vec![n(0), n(2)]);
    }

    #[test]
    fn smorlr_reset() {
        let t = line_topology(3, 0.0, 1.0).unwrap();
        let mut s = Smorlr::new(TableLayout::sink_only(&t), 0.5, 1000, false).unwrap();
        s.table.values_mut()[0] = 3.0;
        assert_eq!(s.epsilon(500), 0.5);
        let before = s.clone();
        smorlr_on_preference_change(&mut s, 0.5, 700).unwrap();
        assert_eq!(s, before);
        smorlr_on_preference_change(&mut s, 0.1, 1000).unwrap();
        assert_eq!(s.epsilon(1000), 1.0);
        assert!(s.table.values().iter().all(|&v| v == 0.0));

        let mut k = Smorlr::new(TableLayout::sink_only(&t), 0.5, 1000, true).unwrap();
        k.table.values_mut()[0] = 3.0;
        smorlr_on_preference_change(&mut k, 0.9, 10).unwrap();
        assert_eq!(k.table.values()[0], 3.0);
        assert_eq!(k.epsilon(10), 1.0);
    }
}
