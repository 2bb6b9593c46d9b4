//! Command-line front end: trace replay and named experiment suites.
//!
//! Exit status: 0 when every check passes, 1 when a check fails, 2 for
//! usage, configuration or input errors.

pub mod config;
pub mod experiments;
pub mod report;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::cache::{parse_trace, run_trace};
pub use config::{ConfigFile, LevelConfig, Params};
pub use experiments::{run_experiment, RunContext, EXPERIMENTS};
pub use report::{Check, Report, Row};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    EmulationBound,
    MergesortConflict,
    FunnelScaling,
    TransposeCost,
    Occupancy,
    ConflictBound,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::EmulationBound => "emulation-bound",
            Experiment::MergesortConflict => "mergesort-conflict",
            Experiment::FunnelScaling => "funnel-scaling",
            Experiment::TransposeCost => "transpose-cost",
            Experiment::Occupancy => "occupancy",
            Experiment::ConflictBound => "conflict-bound",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "cachelab",
    version,
    about = "Cache-model simulator and experiment runner"
)]
pub struct Cli {
    /// TOML config with [params] and [[level]] tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed (overrides the config file and CACHELAB_SEED).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Seeds or Monte Carlo trials, depending on the experiment.
    #[arg(long, global = true)]
    pub trials: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Add wall-clock seconds to the report.
    #[arg(long, global = true)]
    pub timing: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replay an `R <addr>` / `W <addr>` trace through the configured hierarchy.
    SimulateTrace { trace: PathBuf },
    /// Run a named experiment suite.
    RunExperiment {
        #[arg(value_enum)]
        name: Experiment,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn simulate_trace(cfg: &ConfigFile, trace: &PathBuf, seed: u64) -> Result<Report, Failure> {
    let spec = cfg.hierarchy()?.ok_or_else(|| {
        Failure::Usage("simulate-trace needs [[level]] tables in --config".into())
    })?;
    let text = std::fs::read_to_string(trace)
        .map_err(|e| Failure::Usage(format!("reading {}: {e}", trace.display())))?;
    let events = parse_trace(&text)?;
    let stats = run_trace(&spec, events.iter().copied());
    let mut report = Report::new(
        "simulate-trace",
        json!({"trace": trace.display().to_string(), "levels": spec.levels(), "events": events.len()}),
    );
    for (i, l) in stats.levels.iter().enumerate() {
        report.rows.push(
            Row::new(format!("level-{}", i + 1), seed)
                .with("accesses", l.accesses)
                .with("hits", l.hits)
                .with("misses", l.misses)
                .with("compulsory", l.compulsory)
                .with("capacity", l.capacity)
                .with("conflict", l.conflict),
        );
    }
    report.rows.push(
        Row::new("total", seed)
            .with("references", stats.references)
            .with("ops", stats.ops)
            .with("latency", stats.latency)
            .with("cost", stats.cost()),
    );
    Ok(report)
}

fn execute(cli: &Cli, env_seed: Option<&str>, stderr: &mut dyn Write) -> Result<bool, Failure> {
    let cfg = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let seed = config::resolve_seed(cli.seed, cfg.seed, env_seed)?;
    let format = match (cli.format, cfg.format.as_deref()) {
        (Some(f), _) => f,
        (None, None) => Format::Csv,
        (None, Some(s)) => Format::from_str(s, true)
            .map_err(|_| Failure::Usage(format!("unknown format {s:?}")))?,
    };
    let started = Instant::now();
    let mut report = match &cli.command {
        Command::SimulateTrace { trace } => simulate_trace(&cfg, trace, seed)?,
        Command::RunExperiment { name } => {
            let ctx = RunContext {
                seed,
                trials: cli.trials.or(cfg.trials),
                params: cfg.params.clone(),
                hierarchy: cfg.hierarchy()?,
            };
            run_experiment(name.name(), &ctx)?
        }
    };
    if cli.timing {
        report.wall_clock_s = Some(started.elapsed().as_secs_f64());
    }
    let text = match format {
        Format::Csv => report.to_csv(),
        Format::Json => report.to_json(),
    };
    match cli.out.clone().or(cfg.out.map(PathBuf::from)) {
        Some(path) => std::fs::write(&path, text)
            .map_err(|e| Failure::Usage(format!("writing {}: {e}", path.display())))?,
        None => print!("{text}"),
    }
    for c in &report.checks {
        let _ = writeln!(
            stderr,
            "{} {}{}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            if c.detail.is_empty() {
                String::new()
            } else {
                format!(": {}", c.detail)
            }
        );
    }
    Ok(report.passed())
}

/// Parses `args` and runs; returns the process exit code.
pub fn run<I, T>(args: I, env_seed: Option<&str>, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli, env_seed, stderr) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            2
        }
    }
}

pub fn main() -> i32 {
    let env = std::env::var(config::SEED_ENV).ok();
    run(std::env::args_os(), env.as_deref(), &mut std::io::stderr())
}
