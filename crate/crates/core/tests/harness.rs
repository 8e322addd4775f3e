mod common;

use std::path::Path;

use common::{bfs_hops, n, simple_paths};
use dpq_routing::baselines::{shortest_path, PathMetric};
use dpq_routing::harness::{
    cumulative_series, run_experiment, sensitivity, write_cumulative_csv, write_episodes_csv, AgentConfig,
    BaselineConfig, ExperimentConfig,
};
use dpq_routing::topology::{grid_topology, Corner, Topology};
use proptest::prelude::*;

fn lossy_grid(episodes: usize) -> ExperimentConfig {
    let text = format!("episodes = {episodes}\n[topology]\nkind = \"grid\"\nrows = 6\ncols = 6\nloss = 0.05\n");
    ExperimentConfig::from_toml(&text, Path::new(".")).unwrap()
}

fn csv_bytes(config: &ExperimentConfig, seed: u64) -> (Vec<u8>, Vec<u8>) {
    let run = run_experiment(config, seed).unwrap();
    let mut episodes = Vec::new();
    write_episodes_csv(&run.records, &mut episodes).unwrap();
    let mut cumulative = Vec::new();
    write_cumulative_csv(&cumulative_series(&run.records), &mut cumulative).unwrap();
    (episodes, cumulative)
}

#[test]
fn same_config_and_seed_give_identical_csv() {
    let mut config = lossy_grid(2000);
    for agent in [
        AgentConfig::dpq(),
        AgentConfig::baseline(BaselineConfig::smorlr()),
        AgentConfig::baseline(BaselineConfig::static_q(0.9)),
    ] {
        config.agent = agent;
        assert_eq!(csv_bytes(&config, 17), csv_bytes(&config, 17));
    }
    assert_ne!(csv_bytes(&config, 17).0, csv_bytes(&config, 18).0);
}

#[test]
fn zero_episodes_give_no_records() {
    let run = run_experiment(&lossy_grid(0), 1).unwrap();
    assert!(run.records.is_empty());
    assert!(cumulative_series(&run.records).is_empty());
}

#[test]
fn energy_ledger_and_reward_decomposition() {
    let config = lossy_grid(3000);
    let run = run_experiment(&config, 3).unwrap();
    let e = config.energy;
    let n_nodes = config.topology().unwrap().node_count() as f64;
    let mut hops = 0;
    let mut steps = 0;
    for r in &run.records {
        hops += r.forwarding_hops;
        steps += r.steps;
        let expected = e.e_tx * r.forwarding_hops as f64 + e.e_idle * n_nodes * r.steps as f64;
        assert_eq!(r.energy_mj, expected);
        assert!((r.hop_energy - e.e_tx * r.forwarding_hops as f64).abs() < 1e-12);
        let decomposed = r.beta * -r.hop_energy + (1.0 - r.beta) * f64::from(u8::from(r.delivered));
        assert!((r.overall_reward - decomposed).abs() < 1e-12, "episode {}", r.episode);
    }
    let total = cumulative_series(&run.records).last().unwrap().cum_energy;
    let ledger = e.e_tx * hops as f64 + e.e_idle * n_nodes * steps as f64;
    // Summation order differs between the two sides.
    assert!((total - ledger).abs() <= 1e-9 * ledger);
}

#[test]
fn cumulative_series_matches_recomputed_prefix_sums() {
    let run = run_experiment(&lossy_grid(10_000), 4).unwrap();
    let series = cumulative_series(&run.records);
    let (mut reward, mut energy, mut delivered) = (0.0, 0.0, 0usize);
    for (k, row) in series.iter().enumerate() {
        reward = run.records[..=k].iter().map(|r| r.overall_reward).sum::<f64>();
        energy += run.records[k].energy_mj;
        delivered += usize::from(run.records[k].delivered);
        assert_eq!(row.episode, k);
        assert!((row.cum_reward - reward).abs() <= 1e-9 * (1.0 + reward.abs()));
        assert!((row.cum_energy - energy).abs() <= 1e-9 * (1.0 + energy));
        assert_eq!(row.cum_delivered, delivered);
    }
    assert_eq!(series.len(), 10_000);
    assert!(reward != 0.0);
}

#[test]
fn window_larger_than_run_is_one_window() {
    let run = run_experiment(&lossy_grid(30), 5).unwrap();
    let row = sensitivity("DPQ", &run.records, 50).unwrap();
    let mean = run.records.iter().map(|r| r.overall_reward).sum::<f64>() / 30.0;
    assert!((row.reward_mean - mean).abs() < 1e-12);
    assert_eq!((row.reward_std, row.pdr_std, row.energy_std), (0.0, 0.0, 0.0));
}

#[test]
fn two_by_two_route_uses_lower_intermediate() {
    let t = grid_topology(2, 2, 0.0, 1.0, Corner::BottomRight, &[]).unwrap();
    let paths = simple_paths(&t, n(0), n(3));
    let best = paths.iter().map(Vec::len).min().unwrap();
    let shortest: Vec<_> = paths.iter().filter(|p| p.len() == best).collect();
    assert_eq!(shortest.len(), 2);
    let lowest = shortest.iter().min_by_key(|p| p[1]).unwrap();
    assert_eq!(&shortest_path(&t, n(0), n(3), PathMetric::Hops).unwrap(), *lowest);
}

#[test]
fn energy_route_is_cheapest_simple_path() {
    let edges = [
        (n(0), n(3), 0.0, 10.0),
        (n(0), n(1), 0.0, 2.0),
        (n(1), n(2), 0.0, 2.0),
        (n(2), n(3), 0.0, 2.0),
        (n(1), n(0), 0.0, 2.0),
        (n(2), n(1), 0.0, 2.0),
        (n(3), n(2), 0.0, 2.0),
    ];
    let t = Topology::new(4, &edges, n(3), &[]).unwrap();
    let cost = |p: &[_]| -> f64 { p.windows(2).map(|w: &[_]| t.link(w[0], w[1]).unwrap().energy).sum() };
    let cheapest = simple_paths(&t, n(0), n(3)).into_iter().min_by(|a, b| cost(a).total_cmp(&cost(b))).unwrap();
    assert_eq!(shortest_path(&t, n(0), n(3), PathMetric::Energy).unwrap(), cheapest);
    assert_eq!(shortest_path(&t, n(0), n(3), PathMetric::Hops).unwrap(), vec![n(0), n(3)]);
}

proptest! {
    #[test]
    fn hop_routes_have_bfs_length(rows in 2usize..8, cols in 2usize..8, source in 0usize..64) {
        let t = grid_topology(rows, cols, 0.0, 1.0, Corner::BottomRight, &[]).unwrap();
        let source = n(source % t.node_count());
        let path = shortest_path(&t, source, t.sink(), PathMetric::Hops).unwrap();
        prop_assert_eq!(Some(path.len() - 1), bfs_hops(&t, t.sink())[source.0]);
    }

    #[test]
    fn prefix_sums_are_additive(rewards in prop::collection::vec(-1.0..1.0f64, 1..200)) {
        let config = lossy_grid(rewards.len());
        let mut records = run_experiment(&config, 0).unwrap().records;
        for (r, &x) in records.iter_mut().zip(&rewards) {
            r.overall_reward = x;
        }
        let series = cumulative_series(&records);
        let mut acc = 0.0;
        for (row, &x) in series.iter().zip(&rewards) {
            acc += x;
            prop_assert!((row.cum_reward - acc).abs() < 1e-12);
        }
    }
}
