//! Command-line driver: reads a JSON run configuration, runs one
//! computation and writes a JSON report (plus CSV for tabular results).
//!
//! A report carries its resolved configuration under `config`, so feeding
//! a report back with `--config` repeats the run.

pub mod commands;
pub mod config;
pub mod error;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use config::RunConfig;
pub use error::{exit, CliError};

/// Environment variable holding the log filter.
pub const LOG_ENV: &str = "ANDERSON_DOS_LOG";

#[derive(Debug, Parser)]
#[command(name = "anderson-dos", version, about = "Certified random-walk expansion for the Anderson model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration, or a previous report.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for `<command>.json` and `<command>.csv`; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Monte Carlo seed, overriding `box.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Density of states on a grid.
    Dos,
    /// One averaged resolvent element.
    Resolvent,
    /// Two-point correlation kernel.
    Correlation,
    /// Expansion against the finite-box Monte Carlo oracle.
    Validate,
    /// Walk counts and listings.
    Paths,
    /// Moment table at one energy.
    Moments,
    /// Convergence ratio and analyticity regimes.
    Regime,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Dos => "dos",
            Command::Resolvent => "resolvent",
            Command::Correlation => "correlation",
            Command::Validate => "validate",
            Command::Paths => "paths",
            Command::Moments => "moments",
            Command::Regime => "regime",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub seed: Option<u64>,
    pub config: RunConfig,
    pub outputs: Value,
    pub timings: Timings,
}

/// Loads the configuration and applies command-line overrides.
pub fn resolve_config(path: &Path, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let mut config = config::load(path)?;
    if let Some(seed) = seed {
        if let Some(b) = config.box_.as_mut() {
            b.seed = Some(seed);
        }
    }
    Ok(config)
}

/// Runs `command` and returns its report, its CSV and, for `validate`, the
/// verdict.
pub fn run_command(
    command: Command,
    config: RunConfig,
) -> Result<(RunReport, Option<String>, Option<bool>), CliError> {
    let started = Instant::now();
    let outcome = commands::execute(command, &config)?;
    let report = RunReport {
        tool: "anderson-dos".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command,
        seed: config.box_.as_ref().and_then(|b| b.seed),
        config,
        outputs: outcome.outputs,
        timings: Timings {
            total_seconds: started.elapsed().as_secs_f64(),
        },
    };
    Ok((report, outcome.csv, outcome.verdict))
}

fn emit(
    command: Command,
    out: Option<&Path>,
    report: &RunReport,
    csv: Option<&str>,
) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    match out {
        None => println!("{json}"),
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(format!("{}.json", command.name())), json + "\n")?;
            if let Some(csv) = csv {
                std::fs::write(dir.join(format!("{}.csv", command.name())), csv)?;
            }
        }
    }
    Ok(())
}

fn run_inner(cli: &Cli) -> Result<(), CliError> {
    let path = cli.config.as_deref().ok_or_else(|| CliError::Config {
        field: None,
        message: "--config <path> is required".into(),
    })?;
    let config = resolve_config(path, cli.seed)?;
    let work = || run_command(cli.command, config);
    let (report, csv, verdict) = match cli.workers {
        None => work()?,
        Some(0) => {
            return Err(CliError::Config {
                field: None,
                message: "--workers must be at least 1".into(),
            })
        }
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config {
                field: None,
                message: format!("cannot start {n} workers: {e}"),
            })?
            .install(work)?,
    };
    emit(cli.command, cli.out.as_deref(), &report, csv.as_deref())?;
    if verdict == Some(false) {
        return Err(CliError::ValidationFailed(
            "expansion and Monte Carlo disagree beyond tail + 3 stderr".into(),
        ));
    }
    Ok(())
}

/// Runs the CLI and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match run_inner(cli) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("anderson-dos {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}

/// A report with its `timings` removed, for comparing runs.
pub fn without_timings(mut report: Value) -> Value {
    if let Value::Object(map) = &mut report {
        map.remove("timings");
    }
    report
}
