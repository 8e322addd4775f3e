//! Routing network: directed links with loss probability and transmission
//! energy, a distinguished sink, and unreliable relay nodes.

use std::collections::VecDeque;
use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense node index in `[0, N)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(i)
    }
}

/// Outgoing directed link `(from, to)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Link {
    pub to: NodeId,
    /// Probability that a transmission over this link is lost.
    pub loss: f64,
    /// Energy (mJ) spent by the sender to transmit over this link.
    pub energy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Corner {
    TopLeft,
    TopRight,
    BottomLeft,
    #[default]
    BottomRight,
}

/// Immutable routing graph.
///
/// Links are stored per sender in insertion order; that order is the action
/// order used everywhere else. A flat edge index (`edge_index`) addresses
/// link `slot` of node `i` as `offsets[i] + slot`.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    links: Vec<Vec<Link>>,
    offsets: Vec<usize>,
    sink: NodeId,
    drop_prob: Vec<Option<f64>>,
}

impl Topology {
    /// Builds and validates a topology from an edge list `(from, to, loss, energy)`.
    pub fn new(
        node_count: usize,
        edges: &[(NodeId, NodeId, f64, f64)],
        sink: NodeId,
        unreliable: &[(NodeId, f64)],
    ) -> Result<Self> {
        if node_count < 2 {
            return Err(invalid("nodes", format!("need at least 2 nodes, got {node_count}")));
        }
        if sink.0 >= node_count {
            return Err(invalid("sink", format!("{sink} is not a node")));
        }
        let mut links: Vec<Vec<Link>> = vec![Vec::new(); node_count];
        for &(from, to, loss, energy) in edges {
            if from.0 >= node_count || to.0 >= node_count {
                return Err(invalid("edges", format!("edge ({from}, {to}) references a missing node")));
            }
            if from == to {
                return Err(invalid("edges", format!("self-loop at node {from}")));
            }
            if !(0.0..1.0).contains(&loss) {
                return Err(invalid("loss", format!("loss {loss} on ({from}, {to}) is outside [0, 1)")));
            }
            if !(energy >= 0.0 && energy.is_finite()) {
                return Err(invalid("energy", format!("energy {energy} on ({from}, {to}) must be finite and >= 0")));
            }
            if links[from.0].iter().any(|l| l.to == to) {
                return Err(invalid("edges", format!("duplicate edge ({from}, {to})")));
            }
            links[from.0].push(Link { to, loss, energy });
        }
        let mut drop_prob = vec![None; node_count];
        for &(node, p) in unreliable {
            if node.0 >= node_count {
                return Err(invalid("unreliable", format!("{node} is not a node")));
            }
            if node == sink {
                return Err(invalid("unreliable", format!("the sink {node} cannot be unreliable")));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid("unreliable", format!("p_drop {p} at node {node} is outside [0, 1]")));
            }
            if drop_prob[node.0].replace(p).is_some() {
                return Err(invalid("unreliable", format!("node {node} listed twice")));
            }
        }
        let mut offsets = Vec::with_capacity(node_count + 1);
        let mut acc = 0;
        for l in &links {
            offsets.push(acc);
            acc += l.len();
        }
        offsets.push(acc);

        let topology = Topology { links, offsets, sink, drop_prob };
        let dist = topology.hop_distances_to(sink);
        if let Some(i) = dist.iter().position(|d| d.is_none()) {
            return Err(invalid("edges", format!("sink {sink} is unreachable from node {i}")));
        }
        Ok(topology)
    }

    pub fn node_count(&self) -> usize {
        self.links.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.links.len()).map(NodeId)
    }

    pub fn sink(&self) -> NodeId {
        self.sink
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node.0 < self.links.len()
    }

    /// Outgoing links of `node` in stored order.
    pub fn links(&self, node: NodeId) -> &[Link] {
        &self.links[node.0]
    }

    pub fn neighbors(&self, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.links[node.0].iter().map(|l| l.to)
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.links[node.0].len()
    }

    /// Position of `to` in the link list of `from`.
    pub fn slot(&self, from: NodeId, to: NodeId) -> Option<usize> {
        self.links.get(from.0)?.iter().position(|l| l.to == to)
    }

    pub fn link(&self, from: NodeId, to: NodeId) -> Option<&Link> {
        self.links.get(from.0)?.iter().find(|l| l.to == to)
    }

    pub fn edge_count(&self) -> usize {
        self.offsets[self.links.len()]
    }

    /// Flat index of link `slot` of `node`.
    pub fn edge_index(&self, node: NodeId, slot: usize) -> usize {
        self.offsets[node.0] + slot
    }

    pub fn edge_offset(&self, node: NodeId) -> usize {
        self.offsets[node.0]
    }

    /// Drop probability of an unreliable node; 0 for reliable nodes.
    pub fn drop_prob(&self, node: NodeId) -> f64 {
        self.drop_prob[node.0].unwrap_or(0.0)
    }

    pub fn unreliable(&self) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.drop_prob.iter().enumerate().filter_map(|(i, p)| p.map(|p| (NodeId(i), p)))
    }

    pub fn max_energy(&self) -> f64 {
        self.links.iter().flatten().map(|l| l.energy).fold(0.0, f64::max)
    }

    /// All directed edges `(from, to, loss, energy)` in stored order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, f64, f64)> + '_ {
        self.links.iter().enumerate().flat_map(|(i, ls)| ls.iter().map(move |l| (NodeId(i), l.to, l.loss, l.energy)))
    }

    /// Hop distance from every node to `dest`, ignoring losses. `None` when
    /// `dest` cannot be reached.
    pub fn hop_distances_to(&self, dest: NodeId) -> Vec<Option<usize>> {
        let n = self.node_count();
        let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, ls) in self.links.iter().enumerate() {
            for l in ls {
                reverse[l.to.0].push(i);
            }
        }
        let mut dist = vec![None; n];
        dist[dest.0] = Some(0);
        let mut queue = VecDeque::from([dest.0]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap_or(0);
            for &v in &reverse[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Serializes to the topology text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "nodes = {}", self.node_count());
        let _ = writeln!(out, "sink = {}", self.sink);
        out.push_str("edges = [\n");
        for (i, j, loss, energy) in self.edges() {
            let _ = writeln!(out, "  [{i}, {j}, {loss:?}, {energy:?}],");
        }
        out.push_str("]\n");
        out.push_str("unreliable = [\n");
        for (i, p) in self.unreliable() {
            let _ = writeln!(out, "  [{i}, {p:?}],");
        }
        out.push_str("]\n");
        out
    }

    /// Parses the topology text format written by [`Topology::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let file: TopologyFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let edges: Vec<_> = file
            .edges
            .iter()
            .map(|&(i, j, loss, energy)| (NodeId(i), NodeId(j), loss.value(), energy.value()))
            .collect();
        let unreliable: Vec<_> = file.unreliable.iter().map(|&(i, p)| (NodeId(i), p.value())).collect();
        Topology::new(file.nodes, &edges, NodeId(file.sink), &unreliable)
    }
}

#[derive(Deserialize)]
struct TopologyFile {
    nodes: usize,
    sink: usize,
    edges: Vec<(usize, usize, Decimal, Decimal)>,
    #[serde(default)]
    unreliable: Vec<(usize, Decimal)>,
}

/// Accepts both `1` and `1.0` where a real is expected.
#[derive(Clone, Copy, Deserialize)]
#[serde(untagged)]
enum Decimal {
    Int(i64),
    Float(f64),
}

impl Decimal {
    fn value(self) -> f64 {
        match self {
            Decimal::Int(i) => i as f64,
            Decimal::Float(f) => f,
        }
    }
}

fn invalid(field: &'static str, reason: String) -> Error {
    Error::InvalidTopology { field, reason }
}

/// 4-connected `rows x cols` grid with uniform loss and hop energy.
///
/// Node `(r, c)` has index `r * cols + c`; neighbor order is ascending
/// (up, left, right, down).
pub fn grid_topology(
    rows: usize,
    cols: usize,
    loss: f64,
    energy_per_hop: f64,
    sink_corner: Corner,
    unreliable: &[(NodeId, f64)],
) -> Result<Topology> {
    if rows < 2 {
        return Err(invalid("rows", format!("need at least 2 rows, got {rows}")));
    }
    if cols < 2 {
        return Err(invalid("cols", format!("need at least 2 columns, got {cols}")));
    }
    let mut edges = Vec::with_capacity(4 * rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let i = NodeId(r * cols + c);
            let mut push = |j: usize| edges.push((i, NodeId(j), loss, energy_per_hop));
            if r > 0 {
                push((r - 1) * cols + c);
            }
            if c > 0 {
                push(r * cols + c - 1);
            }
            if c + 1 < cols {
                push(r * cols + c + 1);
            }
            if r + 1 < rows {
                push((r + 1) * cols + c);
            }
        }
    }
    let sink = match sink_corner {
        Corner::TopLeft => 0,
        Corner::TopRight => cols - 1,
        Corner::BottomLeft => (rows - 1) * cols,
        Corner::BottomRight => rows * cols - 1,
    };
    Topology::new(rows * cols, &edges, NodeId(sink), unreliable)
}

/// Index of the grid's centre node (rounded towards the top-left).
pub fn grid_center(rows: usize, cols: usize) -> NodeId {
    NodeId(((rows - 1) / 2) * cols + (cols - 1) / 2)
}

/// Path graph `0 - 1 - ... - (n-1)` with the sink at `n - 1`.
pub fn line_topology(n: usize, loss: f64, energy_per_hop: f64) -> Result<Topology> {
    if n < 2 {
        return Err(invalid("nodes", format!("a line needs at least 2 nodes, got {n}")));
    }
    let mut edges = Vec::with_capacity(2 * (n - 1));
    for i in 0..n {
        if i > 0 {
            edges.push((NodeId(i), NodeId(i - 1), loss, energy_per_hop));
        }
        if i + 1 < n {
            edges.push((NodeId(i), NodeId(i + 1), loss, energy_per_hop));
        }
    }
    Topology::new(n, &edges, NodeId(n - 1), &[])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_by_ten_grid_shape() {
        let t = grid_topology(10, 10, 0.0, 0.007, Corner::BottomRight, &[]).unwrap();
        assert_eq!(t.node_count(), 100);
        assert_eq!(t.sink(), NodeId(99));
        assert_eq!(t.degree(NodeId(55)), 4);
        assert_eq!(t.edge_count(), 2 * (10 * 9 + 10 * 9));
    }

    #[test]
    fn smallest_grid_corners_have_two_neighbors() {
        let t = grid_topology(2, 2, 0.0, 1.0, Corner::BottomRight, &[]).unwrap();
        assert_eq!(t.node_count(), 4);
        for i in t.nodes() {
            assert_eq!(t.degree(i), 2);
        }
    }

    #[test]
    fn unreliable_node_recorded() {
        let t = grid_topology(3, 3, 0.1, 1.0, Corner::BottomRight, &[(NodeId(0), 0.5)]).unwrap();
        assert_eq!(t.drop_prob(NodeId(0)), 0.5);
        assert_eq!(t.drop_prob(NodeId(1)), 0.0);
        assert!(t.hop_distances_to(t.sink()).iter().all(|d| d.is_some()));
    }

    #[test]
    fn line_edges_and_sink() {
        let t = line_topology(3, 0.0, 1.0).unwrap();
        let edges: Vec<_> = t.edges().map(|(i, j, _, _)| (i.0, j.0)).collect();
        assert_eq!(edges, vec![(0, 1), (1, 0), (1, 2), (2, 1)]);
        assert_eq!(t.sink(), NodeId(2));

        let t = line_topology(2, 0.5, 2.0).unwrap();
        assert_eq!(t.link(NodeId(0), NodeId(1)).unwrap().loss, 0.5);
        assert_eq!(t.link(NodeId(1), NodeId(0)).unwrap().energy, 2.0);
    }

    #[test]
    fn construction_errors_name_the_field() {
        let err = grid_topology(1, 5, 0.0, 1.0, Corner::BottomRight, &[]).unwrap_err();
        assert!(matches!(err, Error::InvalidTopology { field: "rows", .. }));
        let err = grid_topology(3, 3, 1.0, 1.0, Corner::BottomRight, &[]).unwrap_err();
        assert!(matches!(err, Error::InvalidTopology { field: "loss", .. }));
        let err = grid_topology(3, 3, 0.0, -1.0, Corner::BottomRight, &[]).unwrap_err();
        assert!(matches!(err, Error::InvalidTopology { field: "energy", .. }));
        let err = grid_topology(3, 3, 0.0, 1.0, Corner::BottomRight, &[(NodeId(8), 0.5)]).unwrap_err();
        assert!(matches!(err, Error::InvalidTopology { field: "unreliable", .. }));
        let err = grid_topology(3, 3, 0.0, 1.0, Corner::BottomRight, &[(NodeId(9), 0.5)]).unwrap_err();
        assert!(matches!(err, Error::InvalidTopology { field: "unreliable", .. }));
        assert!(line_topology(1, 0.0, 1.0).is_err());
    }

    #[test]
    fn rejects_unreachable_sink_and_bad_edges() {
        // 0 -> 1 only; node 2 is isolated.
        let edges = [(NodeId(0), NodeId(1), 0.0, 1.0)];
        assert!(Topology::new(3, &edges, NodeId(1), &[]).is_err());
        let dup = [(NodeId(0), NodeId(1), 0.0, 1.0), (NodeId(0), NodeId(1), 0.0, 1.0)];
        assert!(Topology::new(2, &dup, NodeId(1), &[]).is_err());
        let self_loop = [(NodeId(0), NodeId(0), 0.0, 1.0)];
        assert!(Topology::new(2, &self_loop, NodeId(1), &[]).is_err());
    }

    #[test]
    fn text_accepts_integer_values() {
        let text = "nodes = 2\nsink = 1\nedges = [[0, 1, 0, 2], [1, 0, 0.5, 2.0]]\n";
        let t = Topology::from_text(text).unwrap();
        assert_eq!(t.link(NodeId(0), NodeId(1)).unwrap().energy, 2.0);
        assert_eq!(t.unreliable().count(), 0);
    }

    #[test]
    fn grid_center_index() {
        assert_eq!(grid_center(3, 3), NodeId(4));
        assert_eq!(grid_center(10, 10), NodeId(44));
    }
}
