//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage, configuration or I/O errors, and 2
//! when a theory check fails.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::harness::{
    cumulative_series, run_experiment, run_sensitivity, write_atomic, write_cumulative_csv, write_episodes_csv,
    write_sensitivity_csv, ExperimentConfig, RunOutput,
};
use crate::oracle::{theory_suite, write_theory_csv};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_THEORY_VIOLATION: i32 = 2;
pub const SEED_ENV: &str = "DPQ_SEED";

#[derive(Debug, Parser)]
#[command(name = "dpq", version, about = "Dynamic-preference Q-learning routing experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train and evaluate one configured agent.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check the Lipschitz and interpolation bounds with exact solutions.
    OracleCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Window statistics for every configured method.
    Sensitivity {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        windows: Option<Vec<usize>>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train, then write the final Q-table snapshot.
    DumpQ {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run several configs side by side, one subdirectory each.
    Compare {
        #[arg(long = "config", required = true, num_args = 1..)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    TheoryViolation,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(Outcome::Success) => EXIT_OK,
        Ok(Outcome::TheoryViolation) => EXIT_THEORY_VIOLATION,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

pub fn execute(command: &Command) -> Result<Outcome> {
    match command {
        Command::Run { config, out, seed } => {
            let config = ExperimentConfig::from_path(config)?;
            let seed = resolve_seed(*seed, &config)?;
            write_run(&run_experiment(&config, seed)?, out)?;
            Ok(Outcome::Success)
        }
        Command::OracleCheck { config, out } => {
            let config = ExperimentConfig::from_path(config)?;
            let topology = config.topology()?;
            let rows = theory_suite(&topology, &config.oracle.suite(config.topology.label())?)?;
            write_atomic(&out.join("theory.csv"), |w| write_theory_csv(&rows, w))?;
            if rows.iter().any(|r| r.holds == Some(false)) {
                let failed = rows.iter().filter(|r| r.holds == Some(false)).count();
                eprintln!("theory check failed on {failed} row(s); see theory.csv");
                Ok(Outcome::TheoryViolation)
            } else {
                Ok(Outcome::Success)
            }
        }
        Command::Sensitivity { config, windows, out, seed } => {
            let config = ExperimentConfig::from_path(config)?;
            let seed = resolve_seed(*seed, &config)?;
            let windows = windows.clone().unwrap_or_else(|| config.sensitivity.windows.clone());
            if windows.is_empty() || windows.contains(&0) {
                return Err(Error::Config("windows must be positive integers".into()));
            }
            let rows = run_sensitivity(&config, seed, &windows)?;
            write_atomic(&out.join("sensitivity.csv"), |w| write_sensitivity_csv(&rows, w))?;
            Ok(Outcome::Success)
        }
        Command::DumpQ { config, out, seed } => {
            let config = ExperimentConfig::from_path(config)?;
            let seed = resolve_seed(*seed, &config)?;
            let topology = config.topology()?;
            let run = run_experiment(&config, seed)?;
            write_atomic(out, |w| run.tables.write_snapshot(&topology, w))?;
            Ok(Outcome::Success)
        }
        Command::Compare { configs, out, seed } => {
            compare(configs, out, *seed)?;
            Ok(Outcome::Success)
        }
    }
}

/// Command line, then the config file, then `DPQ_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, config: &ExperimentConfig) -> Result<u64> {
    if let Some(s) = flag.or(config.seed) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| Error::Config(format!("{SEED_ENV}=`{v}` is not an integer"))),
        Err(_) => Ok(0),
    }
}

fn write_run(run: &RunOutput, out: &Path) -> Result<()> {
    write_atomic(&out.join("episodes.csv"), |w| write_episodes_csv(&run.records, w))?;
    let cumulative = cumulative_series(&run.records);
    write_atomic(&out.join("cumulative.csv"), |w| write_cumulative_csv(&cumulative, w))?;
    let s = &run.summary;
    write_atomic(&out.join("summary.csv"), |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["episodes", "delivered", "capped", "depleted_episodes", "first_depletion", "depleted_nodes"])?;
        let first = s.first_depletion.map_or(String::new(), |e| e.to_string());
        c.serialize((s.episodes, s.delivered, s.capped, s.depleted_episodes, first, s.depleted_nodes))?;
        c.flush()?;
        Ok(())
    })?;
    if let Some(log) = &run.messages {
        write_atomic(&out.join("messages.csv"), |w| log.write_csv(w))?;
    }
    Ok(())
}

fn compare(configs: &[PathBuf], out: &Path, seed: Option<u64>) -> Result<()> {
    let loaded = configs.iter().map(|p| ExperimentConfig::from_path(p).map(|c| (p, c))).collect::<Result<Vec<_>>>()?;
    let mut names: Vec<String> = Vec::new();
    for (k, (path, _)) in loaded.iter().enumerate() {
        let stem = path.file_stem().map_or_else(|| "config".into(), |s| s.to_string_lossy().into_owned());
        let name = if names.contains(&stem) { format!("{k}-{stem}") } else { stem };
        names.push(name);
    }
    let results: Vec<Result<(u64, RunOutput)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = loaded
            .iter()
            .map(|(_, config)| {
                scope.spawn(move || {
                    let seed = resolve_seed(seed, config)?;
                    Ok((seed, run_experiment(config, seed)?))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("run thread panicked")).collect()
    });

    let mut summary = Vec::new();
    for ((name, (_, config)), result) in names.iter().zip(&loaded).zip(results) {
        let (seed, run) = result?;
        write_run(&run, &out.join(name))?;
        let grid = config.grid()?;
        let last = cumulative_series(&run.records).pop();
        summary.push((
            name.clone(),
            config.agent.label(&grid),
            seed,
            run.records.len(),
            last.as_ref().map_or(0.0, |r| r.cum_reward),
            last.as_ref().map_or(0.0, |r| r.cum_energy),
            last.as_ref().map_or(0, |r| r.cum_delivered),
        ));
    }
    write_atomic(&out.join("compare.csv"), |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["config", "method", "seed", "episodes", "cum_reward", "cum_energy", "cum_delivered"])?;
        for row in &summary {
            c.serialize(row)?;
        }
        c.flush()?;
        Ok(())
    })
}
