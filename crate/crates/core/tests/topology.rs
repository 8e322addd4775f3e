mod common;

use common::{bfs_hops, n};
use dpq_routing::topology::{grid_topology, line_topology, Corner, NodeId, Topology};
use proptest::prelude::*;

#[test]
fn unreliable_corner_keeps_sink_reachable() {
    let t = grid_topology(3, 3, 0.1, 1.0, Corner::BottomRight, &[(n(0), 0.5)]).unwrap();
    assert_eq!(t.drop_prob(n(0)), 0.5);
    assert!(bfs_hops(&t, t.sink()).iter().all(Option::is_some));
}

#[test]
fn line_reaches_sink_within_four_hops() {
    let t = line_topology(5, 0.1, 1.0).unwrap();
    let hops = bfs_hops(&t, t.sink());
    assert!(hops.iter().all(|h| h.is_some_and(|h| h <= 4)));
    assert_eq!(hops[0], Some(4));
}

#[test]
fn two_node_line_is_one_bidirectional_link() {
    let t = line_topology(2, 0.5, 2.0).unwrap();
    let edges: Vec<_> = t.edges().collect();
    assert_eq!(edges, vec![(n(0), n(1), 0.5, 2.0), (n(1), n(0), 0.5, 2.0)]);
}

#[test]
fn library_hop_distances_match_bfs() {
    let t = grid_topology(6, 4, 0.0, 1.0, Corner::TopLeft, &[]).unwrap();
    assert_eq!(t.hop_distances_to(t.sink()), bfs_hops(&t, t.sink()));
}

fn arb_grid() -> impl Strategy<Value = Topology> {
    (2usize..7, 2usize..7, 0.0..0.9f64, 0.001..5.0f64, 0usize..4, prop::option::of(0.0..1.0f64)).prop_map(
        |(rows, cols, loss, energy, corner, drop)| {
            let corner = [Corner::TopLeft, Corner::TopRight, Corner::BottomLeft, Corner::BottomRight][corner];
            let unreliable: Vec<(NodeId, f64)> = drop.map(|p| vec![(n(rows * cols / 2), p)]).unwrap_or_default();
            let unreliable: Vec<_> = unreliable
                .into_iter()
                .filter(|&(i, _)| {
                    let sink = match corner {
                        Corner::TopLeft => 0,
                        Corner::TopRight => cols - 1,
                        Corner::BottomLeft => (rows - 1) * cols,
                        Corner::BottomRight => rows * cols - 1,
                    };
                    i.0 != sink
                })
                .collect();
            grid_topology(rows, cols, loss, energy, corner, &unreliable).unwrap()
        },
    )
}

proptest! {
    #[test]
    fn text_round_trip(t in arb_grid()) {
        let back = Topology::from_text(&t.to_text()).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn grid_edge_count(rows in 2usize..12, cols in 2usize..12) {
        let t = grid_topology(rows, cols, 0.0, 1.0, Corner::BottomRight, &[]).unwrap();
        prop_assert_eq!(t.edge_count(), 2 * (rows * (cols - 1) + cols * (rows - 1)));
        prop_assert_eq!(t.edges().count(), t.edge_count());
    }

    #[test]
    fn grid_edges_are_symmetric(t in arb_grid()) {
        for (i, j, loss, energy) in t.edges() {
            let back = t.link(j, i).expect("reverse link");
            prop_assert_eq!((back.loss, back.energy), (loss, energy));
        }
    }
}
