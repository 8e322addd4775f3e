mod common;

use common::n;
use dpq_routing::distributed::{
    assemble_family, build_agents, node_forward, replay_log, run_distributed_episode, MessageKind, MessageLog,
};
use dpq_routing::harness::{run_experiment, AgentKind, ExperimentConfig, FinalTables};
use dpq_routing::learner::{greedy_action, run_episode, LearningRate, PolicyMode, QTableFamily, TableLayout};
use dpq_routing::mdp::State;
use dpq_routing::preference::PreferenceGrid;
use dpq_routing::topology::line_topology;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn line_agents_match_centralized_learner_for_every_destination() {
    let t = line_topology(3, 0.0, 1.0).unwrap();
    let grid = PreferenceGrid::fine();
    let dests: Vec<_> = t.nodes().collect();
    let lr = LearningRate::Constant { alpha: 0.9 };
    let mut family = QTableFamily::new(grid.clone(), TableLayout::new(&t, &dests).unwrap());
    let mut agents = build_agents(&t, &grid, &dests).unwrap();
    let mut log = MessageLog::default();
    let mut picks = ChaCha8Rng::seed_from_u64(1);
    let mut central = ChaCha8Rng::seed_from_u64(2);
    let mut local = ChaCha8Rng::seed_from_u64(2);
    for m in 0..1000 {
        let source = n(picks.gen_range(0..3));
        let dest = n(picks.gen_range(0..3));
        let beta: f64 = picks.gen();
        let epsilon = if m < 300 { 1.0 } else { 0.1 };
        let mode = PolicyMode::Behavior { epsilon };
        let a = run_episode(&t, &mut family, beta, mode, source, dest, &lr, &mut central).unwrap();
        let b = run_distributed_episode(
            &mut agents,
            &t,
            &grid,
            beta,
            source,
            dest,
            epsilon,
            &lr,
            &mut local,
            Some(&mut log),
            m,
        )
        .unwrap();
        assert_eq!(a.trajectory, b.trajectory, "episode {m}");
        assert_eq!(family, assemble_family(&agents, &t, &grid).unwrap(), "episode {m}");
    }
    let replayed = replay_log(&t, &grid, &dests, &lr, &log).unwrap();
    assert_eq!(replayed, agents);
}

fn desk_grid(kind: AgentKind) -> ExperimentConfig {
    let text = "episodes = 1000\n[topology]\nkind = \"grid\"\nrows = 10\ncols = 10\nloss = 0.05\n";
    let mut c = ExperimentConfig::from_toml(text, std::path::Path::new(".")).unwrap();
    c.agent.kind = kind;
    c.agent.log_messages = true;
    c.exploration = dpq_routing::learner::ExplorationSchedule::Sequential { episodes: 300 };
    c
}

#[test]
fn grid_agents_match_centralized_learner_and_log_replays() {
    let central = run_experiment(&desk_grid(AgentKind::Dpq), 9).unwrap();
    let config = desk_grid(AgentKind::DpqDistributed);
    let local = run_experiment(&config, 9).unwrap();
    assert_eq!(central.records, local.records);
    let (FinalTables::Family(a), FinalTables::Family(b)) = (&central.tables, &local.tables) else {
        panic!("expected table families");
    };
    assert_eq!(a, b);

    let t = config.topology().unwrap();
    let grid = config.grid().unwrap();
    let log = local.messages.as_ref().expect("message log");
    let replayed = replay_log(&t, &grid, &[t.sink()], &config.learning_rate, log).unwrap();
    assert_eq!(&assemble_family(&replayed, &t, &grid).unwrap(), b);

    let hops: usize = local.records.iter().map(|r| r.forwarding_hops).sum();
    assert_eq!(log.count(MessageKind::Data), hops);
    assert_eq!(log.count(MessageKind::Ack) + log.count(MessageKind::Timeout), hops);
    assert_eq!(log.count(MessageKind::Deliver), local.summary.delivered);
    for r in log.records.iter().filter(|r| r.kind == MessageKind::Ack) {
        assert_eq!(r.values.len(), 1 + grid.len());
        assert_eq!(r.payload_bytes, 30 + 8 * grid.len());
    }
}

#[test]
fn greedy_local_choice_matches_centralized_greedy() {
    let config = desk_grid(AgentKind::Dpq);
    let t = config.topology().unwrap();
    let grid = PreferenceGrid::fine();
    let sink = t.sink();
    let lr = LearningRate::Constant { alpha: 0.9 };
    let mut agents = build_agents(&t, &grid, &[sink]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for m in 0..1000 {
        let source = n(rng.gen_range(0..99));
        let epsilon = if m < 500 { 1.0 } else { 0.0 };
        run_distributed_episode(&mut agents, &t, &grid, 0.5, source, sink, epsilon, &lr, &mut rng, None, m).unwrap();
    }
    let family = assemble_family(&agents, &t, &grid).unwrap();
    for beta in [0.0, 0.25, 0.5, 0.93, 1.0] {
        let view = family.gip_table(beta).unwrap();
        for i in t.nodes() {
            let expected = greedy_action(&view, &t, State::pair(i, sink)).unwrap();
            assert_eq!(node_forward(&agents[i.0], sink, beta, &grid, 0.0, &mut rng).unwrap(), expected);
        }
    }
}
