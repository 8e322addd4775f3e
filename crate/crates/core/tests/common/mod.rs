//! Independent reference computations shared by the integration tests.

#![allow(dead_code)]

use std::collections::VecDeque;

use dpq_routing::learner::QTable;
use dpq_routing::mdp::State;
use dpq_routing::topology::{grid_center, grid_topology, line_topology, Corner, NodeId, Topology};

pub fn n(i: usize) -> NodeId {
    NodeId(i)
}

/// Hop counts to `dest` by breadth-first search over reversed edges.
pub fn bfs_hops(t: &Topology, dest: NodeId) -> Vec<Option<usize>> {
    let mut incoming = vec![Vec::new(); t.node_count()];
    for (i, j, _, _) in t.edges() {
        incoming[j.0].push(i.0);
    }
    let mut dist = vec![None; t.node_count()];
    dist[dest.0] = Some(0);
    let mut queue = VecDeque::from([dest.0]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u].expect("queued nodes have a distance");
        for &v in &incoming[u] {
            if dist[v].is_none() {
                dist[v] = Some(d + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Every simple path from `source` to `dest`, by exhaustive search.
pub fn simple_paths(t: &Topology, source: NodeId, dest: NodeId) -> Vec<Vec<NodeId>> {
    fn go(t: &Topology, path: &mut Vec<NodeId>, dest: NodeId, out: &mut Vec<Vec<NodeId>>) {
        let at = *path.last().unwrap();
        if at == dest {
            out.push(path.clone());
            return;
        }
        for next in t.neighbors(at).collect::<Vec<_>>() {
            if !path.contains(&next) {
                path.push(next);
                go(t, path, dest, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(t, &mut vec![source], dest, &mut out);
    out
}

/// `Q*_beta` for one destination by in-place Bellman sweeps from zero,
/// indexed `[node][slot]`.
pub fn reference_q(t: &Topology, dest: NodeId, beta: f64, tol: f64) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = t.nodes().map(|i| vec![0.0; t.degree(i)]).collect();
    loop {
        let mut delta: f64 = 0.0;
        for i in 0..t.node_count() {
            for (k, link) in t.links(n(i)).iter().enumerate() {
                let new = if i == dest.0 {
                    1.0 - beta
                } else {
                    let survive = (1.0 - link.loss) * (1.0 - t.drop_prob(link.to));
                    let v = q[link.to.0].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    -beta * link.energy + survive * v
                };
                delta = delta.max((new - q[i][k]).abs());
                q[i][k] = new;
            }
        }
        if delta < tol {
            return q;
        }
    }
}

/// Sup-norm distance between the `dest` rows of `table` and `reference`.
pub fn distance_to_reference(table: &QTable, t: &Topology, dest: NodeId, reference: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in t.nodes() {
        for (k, link) in t.links(i).iter().enumerate() {
            let v = table.get(t, State::pair(i, dest), link.to).unwrap();
            worst = worst.max((v - reference[i.0][k]).abs());
        }
    }
    worst
}

/// Instances of the theory checks: plain lines, and grids with their
/// default centre node at drop probability 0.5, each at three loss levels.
pub fn theory_instances() -> Vec<(String, Topology)> {
    let mut out = Vec::new();
    for p in [0.0, 0.1, 0.3] {
        for len in [3, 5] {
            out.push((format!("line{len}-p{p}"), line_topology(len, p, 0.007).unwrap()));
        }
        for side in [3, 4] {
            let centre = [(grid_center(side, side), 0.5)];
            let t = grid_topology(side, side, p, 0.007, Corner::BottomRight, &centre).unwrap();
            out.push((format!("grid{side}x{side}-p{p}"), t));
        }
    }
    out
}
