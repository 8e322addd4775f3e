//! Experiment configuration, the episode loop, energy accounting and CSV
//! output.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    smorlr_on_preference_change, BaselineKind, PathMetric, ShortestPathAgent, SingleTableEpisode, Smorlr,
};
use crate::distributed::{assemble_family, build_agents, run_distributed_episode, MessageLog, NodeAgent};
use crate::error::{Error, Result};
use crate::learner::{
    epsilon_at, roll_out, run_episode, write_snapshot, write_table_snapshot, ExplorationSchedule, LearningRate,
    PolicyMode, QTable, QTableFamily, TableLayout,
};
use crate::mdp::TransitionSample;
use crate::oracle::SuiteSpec;
use crate::preference::{default_periodic_values, schedule_beta, PreferenceGrid, PreferenceSchedule};
use crate::topology::{grid_center, grid_topology, line_topology, Corner, NodeId, Topology};

pub const DEFAULT_HOP_ENERGY: f64 = 0.007;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyModel {
    /// mJ per forwarding hop.
    pub e_tx: f64,
    /// mJ per node per time-step.
    pub e_idle: f64,
    /// mJ per node at start.
    pub initial_energy: f64,
    /// Recorded for completeness; the accounting does not use it.
    pub e_awake: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel { e_tx: DEFAULT_HOP_ENERGY, e_idle: 5e-7, initial_energy: 25.0, e_awake: 5e-4 }
    }
}

impl EnergyModel {
    pub fn validate(&self) -> Result<()> {
        let all = [self.e_tx, self.e_idle, self.initial_energy, self.e_awake];
        if all.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(Error::Config(format!("energy model values must be finite and non-negative: {self:?}")))
        }
    }

    /// `e_tx * hops + e_idle * N * steps`.
    pub fn episode_energy(&self, forwarding_hops: usize, steps: usize, node_count: usize) -> f64 {
        self.e_tx * forwarding_hops as f64 + self.e_idle * (node_count * steps) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TopologyConfig {
    Grid {
        rows: usize,
        cols: usize,
        #[serde(default)]
        loss: f64,
        #[serde(default = "default_hop_energy")]
        energy_per_hop: f64,
        #[serde(default)]
        sink_corner: Corner,
        /// `[node, p_drop]` pairs; defaults to the centre node at 0.5.
        #[serde(default)]
        unreliable: Option<Vec<(usize, f64)>>,
    },
    Line {
        nodes: usize,
        #[serde(default)]
        loss: f64,
        #[serde(default = "default_hop_energy")]
        energy_per_hop: f64,
    },
    /// Topology text file, relative to the config file's directory.
    File { path: PathBuf },
}

fn default_hop_energy() -> f64 {
    DEFAULT_HOP_ENERGY
}

impl TopologyConfig {
    pub fn build(&self, base_dir: &Path) -> Result<Topology> {
        match self {
            TopologyConfig::Grid { rows, cols, loss, energy_per_hop, sink_corner, unreliable } => {
                let unreliable: Vec<(NodeId, f64)> = match unreliable {
                    Some(list) => list.iter().map(|&(i, p)| (NodeId(i), p)).collect(),
                    None if *rows >= 2 && *cols >= 2 => vec![(grid_center(*rows, *cols), 0.5)],
                    None => Vec::new(),
                };
                grid_topology(*rows, *cols, *loss, *energy_per_hop, *sink_corner, &unreliable)
            }
            TopologyConfig::Line { nodes, loss, energy_per_hop } => line_topology(*nodes, *loss, *energy_per_hop),
            TopologyConfig::File { path } => Topology::from_text(&fs::read_to_string(base_dir.join(path))?),
        }
    }

    pub fn label(&self) -> String {
        match self {
            TopologyConfig::Grid { rows, cols, loss, .. } => format!("grid{rows}x{cols}-p{loss}"),
            TopologyConfig::Line { nodes, loss, .. } => format!("line{nodes}-p{loss}"),
            TopologyConfig::File { path } => path.display().to_string(),
        }
    }
}

/// `"coarse"`, `"fine"` or an explicit list of points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Named(String),
    Points(Vec<f64>),
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Named("fine".into())
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<PreferenceGrid> {
        match self {
            GridSpec::Named(name) if name == "coarse" => Ok(PreferenceGrid::coarse()),
            GridSpec::Named(name) if name == "fine" => Ok(PreferenceGrid::fine()),
            GridSpec::Named(name) => Err(Error::Config(format!("unknown grid `{name}` (coarse, fine or a list)"))),
            GridSpec::Points(points) => PreferenceGrid::new(points.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScheduleConfig {
    Constant {
        value: f64,
    },
    PeriodicStep {
        #[serde(default = "default_periodic_values")]
        values: Vec<f64>,
        #[serde(default = "default_period")]
        period: usize,
    },
    /// A fresh uniform draw per episode; over the grid points when `over_grid`.
    Random {
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        over_grid: bool,
    },
}

fn default_period() -> usize {
    1000
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig::PeriodicStep { values: default_periodic_values(), period: default_period() }
    }
}

impl ScheduleConfig {
    pub fn build(&self, grid: &PreferenceGrid, run_seed: u64) -> Result<PreferenceSchedule> {
        let schedule = match self {
            ScheduleConfig::Constant { value } => PreferenceSchedule::Constant(*value),
            ScheduleConfig::PeriodicStep { values, period } => {
                PreferenceSchedule::PeriodicStep { values: values.clone(), period: *period }
            }
            ScheduleConfig::Random { seed, over_grid } => PreferenceSchedule::PerEpisodeRandom {
                seed: seed.unwrap_or(run_seed),
                over: over_grid.then(|| grid.values().to_vec()),
            },
        };
        schedule.validate()?;
        Ok(schedule)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreferenceConfig {
    pub grid: GridSpec,
    pub schedule: ScheduleConfig,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    #[default]
    Dpq,
    DpqDistributed,
    Baseline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    /// `smorlr`, `static-q` or `shortest-path`.
    pub kind: String,
    #[serde(default)]
    pub fixed_beta: Option<f64>,
    #[serde(default)]
    pub metric: Option<PathMetric>,
    #[serde(default)]
    pub smorlr_keep_table: bool,
    #[serde(default = "default_epsilon_horizon")]
    pub epsilon_horizon: usize,
}

fn default_epsilon_horizon() -> usize {
    1000
}

impl BaselineConfig {
    pub fn kind(&self) -> Result<BaselineKind> {
        let kind = match self.kind.as_str() {
            "smorlr" => BaselineKind::Smorlr,
            "static-q" => BaselineKind::StaticQ {
                fixed_beta: self
                    .fixed_beta
                    .ok_or_else(|| Error::Config("static-q baseline needs `fixed_beta`".into()))?,
            },
            "shortest-path" => BaselineKind::ShortestPath { metric: self.metric.unwrap_or_default() },
            other => return Err(Error::Config(format!("unknown baseline `{other}`"))),
        };
        kind.validate()?;
        Ok(kind)
    }

    pub fn smorlr() -> Self {
        Self::named("smorlr")
    }

    pub fn static_q(beta: f64) -> Self {
        BaselineConfig { fixed_beta: Some(beta), ..Self::named("static-q") }
    }

    pub fn shortest_path(metric: PathMetric) -> Self {
        BaselineConfig { metric: Some(metric), ..Self::named("shortest-path") }
    }

    fn named(kind: &str) -> Self {
        BaselineConfig {
            kind: kind.into(),
            fixed_beta: None,
            metric: None,
            smorlr_keep_table: false,
            epsilon_horizon: default_epsilon_horizon(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub kind: AgentKind,
    pub baseline: Option<BaselineConfig>,
    /// Keep the distributed agents' message log.
    pub log_messages: bool,
}

impl AgentConfig {
    pub fn dpq() -> Self {
        AgentConfig::default()
    }

    pub fn baseline(b: BaselineConfig) -> Self {
        AgentConfig { kind: AgentKind::Baseline, baseline: Some(b), log_messages: false }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, &self.baseline) {
            (AgentKind::Baseline, Some(b)) => b.kind().map(drop),
            (AgentKind::Baseline, None) => Err(Error::Config("agent kind `baseline` needs a `baseline` table".into())),
            _ => Ok(()),
        }
    }

    pub fn label(&self, grid: &PreferenceGrid) -> String {
        match (self.kind, &self.baseline) {
            (AgentKind::Baseline, Some(b)) => b.kind().map(|k| k.label()).unwrap_or_else(|_| b.kind.clone()),
            (AgentKind::DpqDistributed, _) => format!("DPQ-distributed-{}", grid.len()),
            _ => format!("DPQ-{}", grid.len()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub tol: f64,
    /// Preferences whose pairs are checked for Lipschitz continuity.
    pub betas: Vec<f64>,
    pub grids: Vec<GridSpec>,
    /// Off-grid preferences for the interpolation bound.
    pub targets: Vec<f64>,
    pub slack: f64,
    /// Offset added to interpolated tables; for fault injection only.
    pub inject_offset: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            tol: crate::oracle::THEORY_TOL,
            betas: PreferenceGrid::fine().values().to_vec(),
            grids: vec![GridSpec::Named("coarse".into()), GridSpec::Named("fine".into())],
            targets: (0..10).map(|k| (2 * k + 1) as f64 / 20.0).collect(),
            slack: 1e-8,
            inject_offset: 0.0,
        }
    }
}

impl OracleConfig {
    pub fn suite(&self, label: String) -> Result<SuiteSpec> {
        Ok(SuiteSpec {
            label,
            betas: self.betas.clone(),
            grids: self.grids.iter().map(GridSpec::build).collect::<Result<_>>()?,
            targets: self.targets.clone(),
            tol: self.tol,
            slack: self.slack,
            inject_offset: self.inject_offset,
        })
    }
}

/// One compared router in a sensitivity sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub label: String,
    #[serde(default)]
    pub agent: AgentConfig,
    /// Overrides the experiment's grid.
    #[serde(default)]
    pub grid: Option<GridSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityConfig {
    pub windows: Vec<usize>,
    /// Leading episodes left out of the statistics.
    pub skip: usize,
    pub methods: Vec<MethodConfig>,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        let method = |label: &str, agent, grid: Option<&str>| MethodConfig {
            label: label.into(),
            agent,
            grid: grid.map(|g| GridSpec::Named(g.into())),
        };
        SensitivityConfig {
            windows: vec![50, 200, 500],
            skip: 0,
            methods: vec![
                method("DPQ-coarse", AgentConfig::dpq(), Some("coarse")),
                method("DPQ-fine", AgentConfig::dpq(), Some("fine")),
                method("SMORLR", AgentConfig::baseline(BaselineConfig::smorlr()), None),
                method("StaticQ(0.9)", AgentConfig::baseline(BaselineConfig::static_q(0.9)), None),
                method("ShortestPath", AgentConfig::baseline(BaselineConfig::shortest_path(PathMetric::Hops)), None),
            ],
        }
    }
}

fn default_exploration() -> ExplorationSchedule {
    ExplorationSchedule::Sequential { episodes: 1000 }
}

fn default_learning_rate() -> LearningRate {
    LearningRate::Constant { alpha: 0.9 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Falls back to the command line or `DPQ_SEED` when absent.
    #[serde(default)]
    pub seed: Option<u64>,
    pub episodes: usize,
    pub topology: TopologyConfig,
    #[serde(default)]
    pub preference: PreferenceConfig,
    #[serde(default = "default_exploration")]
    pub exploration: ExplorationSchedule,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: LearningRate,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub energy: EnergyModel,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub sensitivity: SensitivityConfig,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.base_dir = base_dir.to_path_buf();
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.exploration.validate()?;
        self.learning_rate.validate()?;
        self.agent.validate()?;
        self.energy.validate()?;
        self.preference.schedule.build(&self.grid()?, 0)?;
        for m in &self.sensitivity.methods {
            m.agent.validate()?;
            if let Some(g) = &m.grid {
                g.build()?;
            }
        }
        if self.sensitivity.windows.contains(&0) {
            return Err(Error::Config("sensitivity windows must be positive".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<PreferenceGrid> {
        self.preference.grid.build()
    }

    pub fn topology(&self) -> Result<Topology> {
        self.topology.build(&self.base_dir)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub episode: usize,
    pub beta: f64,
    /// Sum of scalarized rewards over the episode.
    pub overall_reward: f64,
    pub delivered: bool,
    pub energy_mj: f64,
    pub steps: usize,
    pub forwarding_hops: usize,
    /// Sum of link energies in reward units (positive).
    pub hop_energy: f64,
    pub capped: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunSummary {
    pub episodes: usize,
    pub delivered: usize,
    pub capped: usize,
    /// Episodes that ended with at least one node at zero energy.
    pub depleted_episodes: usize,
    pub first_depletion: Option<usize>,
    pub depleted_nodes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FinalTables {
    Family(QTableFamily),
    Single { beta: f64, table: QTable },
    None,
}

impl FinalTables {
    pub fn write_snapshot<W: Write>(&self, topology: &Topology, out: W) -> Result<()> {
        match self {
            FinalTables::Family(f) => write_snapshot(f, topology, out),
            FinalTables::Single { beta, table } => write_table_snapshot(table, *beta, topology, out),
            FinalTables::None => Err(Error::Config("this agent keeps no Q-table".into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub records: Vec<MetricsRecord>,
    pub summary: RunSummary,
    pub tables: FinalTables,
    pub messages: Option<MessageLog>,
}

enum AgentState {
    Dpq(QTableFamily),
    Distributed { agents: Vec<NodeAgent>, grid: PreferenceGrid, log: Option<MessageLog> },
    Smorlr(Smorlr),
    StaticQ { table: QTable, beta: f64 },
    ShortestPath(ShortestPathAgent),
}

/// Per-run random streams: source draws are separate from behaviour and
/// channel draws so every method sees the same sources for a seed.
pub fn run_rngs(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut sources = ChaCha8Rng::seed_from_u64(seed);
    sources.set_stream(1);
    let mut behaviour = ChaCha8Rng::seed_from_u64(seed);
    behaviour.set_stream(2);
    (sources, behaviour)
}

/// Runs `config.episodes` episodes towards the sink, each from a source
/// drawn uniformly among the other nodes.
pub fn run_experiment(config: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    config.validate()?;
    let topology = config.topology()?;
    let grid = config.grid()?;
    let schedule = config.preference.schedule.build(&grid, seed)?;
    let lr = config.learning_rate;
    let sink = topology.sink();
    let sources: Vec<NodeId> = topology.nodes().filter(|&i| i != sink).collect();
    let layout = TableLayout::sink_only(&topology);
    let (mut source_rng, mut rng) = run_rngs(seed);
    let n = topology.node_count();

    let mut agent = match (config.agent.kind, &config.agent.baseline) {
        (AgentKind::Dpq, _) => AgentState::Dpq(QTableFamily::new(grid.clone(), layout)),
        (AgentKind::DpqDistributed, _) => AgentState::Distributed {
            agents: build_agents(&topology, &grid, &[sink])?,
            grid: grid.clone(),
            log: config.agent.log_messages.then(MessageLog::default),
        },
        (AgentKind::Baseline, Some(b)) => match b.kind()? {
            BaselineKind::Smorlr => AgentState::Smorlr(Smorlr::new(
                layout,
                schedule_beta(&schedule, 0),
                b.epsilon_horizon,
                b.smorlr_keep_table,
            )?),
            BaselineKind::StaticQ { fixed_beta } => {
                AgentState::StaticQ { table: QTable::zeros(layout), beta: fixed_beta }
            }
            BaselineKind::ShortestPath { metric } => {
                AgentState::ShortestPath(ShortestPathAgent::new(&topology, sink, metric)?)
            }
        },
        (AgentKind::Baseline, None) => unreachable!("validated above"),
    };

    let mut records = Vec::with_capacity(config.episodes);
    let mut summary = RunSummary { episodes: config.episodes, ..RunSummary::default() };
    let mut tx_spent = vec![0.0; n];
    let mut idle_spent = 0.0;
    let energy = config.energy;

    for m in 0..config.episodes {
        let source = sources[source_rng.gen_range(0..sources.len())];
        let beta = schedule_beta(&schedule, m);
        let epsilon = epsilon_at(&config.exploration, m);
        let (trajectory, delivered, capped) = match &mut agent {
            AgentState::Dpq(family) => {
                let mode = PolicyMode::Behavior { epsilon };
                let e = run_episode(&topology, family, beta, mode, source, sink, &lr, &mut rng)?;
                (e.trajectory, e.delivered, e.capped)
            }
            AgentState::Distributed { agents, grid, log } => {
                let e = run_distributed_episode(
                    agents,
                    &topology,
                    grid,
                    beta,
                    source,
                    sink,
                    epsilon,
                    &lr,
                    &mut rng,
                    log.as_mut(),
                    m,
                )?;
                (e.trajectory, e.delivered, e.capped)
            }
            AgentState::Smorlr(state) => {
                smorlr_on_preference_change(state, beta, m)?;
                let epsilon = state.epsilon(m);
                let mut ep = SingleTableEpisode { table: &mut state.table, beta, epsilon, lr: &lr };
                let e = roll_out(&topology, &mut ep, source, sink, &mut rng)?;
                (e.trajectory, e.delivered, e.capped)
            }
            AgentState::StaticQ { table, beta: fixed } => {
                let mut ep = SingleTableEpisode { table, beta: *fixed, epsilon, lr: &lr };
                let e = roll_out(&topology, &mut ep, source, sink, &mut rng)?;
                (e.trajectory, e.delivered, e.capped)
            }
            AgentState::ShortestPath(router) => {
                let e = roll_out(&topology, router, source, sink, &mut rng)?;
                (e.trajectory, e.delivered, e.capped)
            }
        };

        let record = episode_record(m, beta, &trajectory, delivered, capped, &energy, n);
        for s in trajectory.iter().filter(|s| !s.state.at_destination()) {
            if let crate::mdp::State::Pair { current, .. } = s.state {
                tx_spent[current.0] += energy.e_tx;
            }
        }
        idle_spent += energy.e_idle * record.steps as f64;
        let depleted = tx_spent.iter().filter(|&&tx| energy.initial_energy - tx - idle_spent <= 0.0).count();
        if depleted > 0 {
            summary.depleted_episodes += 1;
            summary.first_depletion.get_or_insert(m);
        }
        summary.depleted_nodes = depleted;
        summary.delivered += usize::from(record.delivered);
        summary.capped += usize::from(record.capped);
        records.push(record);
    }

    let (tables, messages) = match agent {
        AgentState::Dpq(family) => (FinalTables::Family(family), None),
        AgentState::Distributed { agents, grid, log } => {
            (FinalTables::Family(assemble_family(&agents, &topology, &grid)?), log)
        }
        AgentState::Smorlr(s) => (FinalTables::Single { beta: s.beta, table: s.table }, None),
        AgentState::StaticQ { table, beta } => (FinalTables::Single { beta, table }, None),
        AgentState::ShortestPath(_) => (FinalTables::None, None),
    };
    Ok(RunOutput { records, summary, tables, messages })
}

/// Metrics of one finished episode.
pub fn episode_record(
    episode: usize,
    beta: f64,
    trajectory: &[TransitionSample],
    delivered: bool,
    capped: bool,
    energy: &EnergyModel,
    node_count: usize,
) -> MetricsRecord {
    let overall_reward = trajectory.iter().map(|s| s.rewards.scalarized(beta)).sum();
    let forwarding_hops = trajectory.iter().filter(|s| !s.state.at_destination()).count();
    let hop_energy = -trajectory.iter().map(|s| s.rewards.energy).sum::<f64>();
    let steps = trajectory.len();
    MetricsRecord {
        episode,
        beta,
        overall_reward,
        delivered,
        energy_mj: energy.episode_energy(forwarding_hops, steps, node_count),
        steps,
        forwarding_hops,
        hop_energy,
        capped,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CumulativeRow {
    pub episode: usize,
    pub cum_reward: f64,
    pub cum_energy: f64,
    pub cum_delivered: usize,
}

pub fn cumulative_series(records: &[MetricsRecord]) -> Vec<CumulativeRow> {
    let mut reward = 0.0;
    let mut energy = 0.0;
    let mut delivered = 0;
    records
        .iter()
        .map(|r| {
            reward += r.overall_reward;
            energy += r.energy_mj;
            delivered += usize::from(r.delivered);
            CumulativeRow { episode: r.episode, cum_reward: reward, cum_energy: energy, cum_delivered: delivered }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityRow {
    pub method: String,
    pub window: usize,
    pub reward_mean: f64,
    pub reward_std: f64,
    pub pdr_mean: f64,
    pub pdr_std: f64,
    pub energy_mean: f64,
    pub energy_std: f64,
}

/// Mean and population std across consecutive full windows of per-window
/// averages. Fewer records than `window` gives one window with std 0.
pub fn sensitivity(method: &str, records: &[MetricsRecord], window: usize) -> Result<SensitivityRow> {
    if window == 0 {
        return Err(Error::Config("window must be positive".into()));
    }
    if records.is_empty() {
        return Err(Error::Config("no records to aggregate".into()));
    }
    let chunks: Vec<&[MetricsRecord]> =
        if records.len() < window { vec![records] } else { records.chunks_exact(window).collect() };
    let per_window = |f: &dyn Fn(&MetricsRecord) -> f64| -> Vec<f64> {
        chunks.iter().map(|c| c.iter().map(f).sum::<f64>() / c.len() as f64).collect()
    };
    let (reward_mean, reward_std) = mean_std(&per_window(&|r| r.overall_reward));
    let (pdr_mean, pdr_std) = mean_std(&per_window(&|r| f64::from(u8::from(r.delivered))));
    let (energy_mean, energy_std) = mean_std(&per_window(&|r| r.energy_mj));
    Ok(SensitivityRow {
        method: method.into(),
        window,
        reward_mean,
        reward_std,
        pdr_mean,
        pdr_std,
        energy_mean,
        energy_std,
    })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs every configured method and aggregates each over every window.
pub fn run_sensitivity(config: &ExperimentConfig, seed: u64, windows: &[usize]) -> Result<Vec<SensitivityRow>> {
    let mut rows = Vec::new();
    for method in &config.sensitivity.methods {
        let mut c = config.clone();
        c.agent = method.agent.clone();
        if let Some(g) = &method.grid {
            c.preference.grid = g.clone();
        }
        let out = run_experiment(&c, seed)?;
        let kept = out.records.get(config.sensitivity.skip..).unwrap_or(&[]);
        for &w in windows {
            rows.push(sensitivity(&method.label, kept, w)?);
        }
    }
    Ok(rows)
}

pub fn write_episodes_csv<W: Write>(records: &[MetricsRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["episode", "beta", "reward", "delivered", "energy_mJ", "steps"])?;
    for r in records {
        w.serialize((r.episode, r.beta, r.overall_reward, u8::from(r.delivered), r.energy_mj, r.steps))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cumulative_csv<W: Write>(rows: &[CumulativeRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["episode", "cum_reward", "cum_energy", "cum_delivered"])?;
    for r in rows {
        w.serialize((r.episode, r.cum_reward, r.cum_energy, r.cum_delivered))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sensitivity_csv<W: Write>(rows: &[SensitivityRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "method",
        "window",
        "reward_mean",
        "reward_std",
        "pdr_mean",
        "pdr_std",
        "energy_mean",
        "energy_std",
    ])?;
    for r in rows {
        w.serialize((
            &r.method,
            r.window,
            r.reward_mean,
            r.reward_std,
            r.pdr_mean,
            r.pdr_std,
            r.energy_mean,
            r.energy_std,
        ))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| Error::Config(format!("`{}` is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut out = BufWriter::new(fs::File::create(&tmp)?);
        write(&mut out)?;
        out.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}
