//! `rokf` command-line driver.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::config::{parse_tol, RunConfig, Tolerances};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Output(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Output(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Output(m) => write!(f, "cannot write output: {m}"),
        }
    }
}

impl From<rokf::Error> for CliError {
    fn from(e: rokf::Error) -> Self {
        use rokf::Error::*;
        match e {
            InvalidParameter(_) | Dimension(_) | IncompatibleMeshes { .. } => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "rokf",
    version,
    about = "Reduced-order Kalman filtering: schedules, benchmarks and error bounds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; defaults to the built-in wave benchmark.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Base seed; trajectory `i` uses `seed + i`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Override a tolerance (lyapunov, dare, discrepancy, l0); repeatable.
    #[arg(long = "tol", global = true, value_name = "NAME=VALUE", value_parser = parse_tol)]
    tol: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Full and reduced gain schedules with per-step traces.
    Offline,
    /// One simulated trajectory.
    Simulate,
    /// Monte Carlo error table for the full, reduced and naive filters.
    Table1,
    /// Stationary discrepancy over a family of coarse meshes.
    Sweep,
    /// A-priori and a-posteriori error bounds.
    Bounds,
    /// Monte Carlo error of the approximate stationary filter.
    Stationary,
}

fn run(cli: Cli) -> Result<String, CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for (name, value) in cli.tol {
        config.tolerances.insert(name, value);
    }
    let tolerances = Tolerances::from_map(&config.tolerances)?;
    config.params.validate()?;
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Config("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::Output(format!("{}: {e}", cli.out.display())))?;
    let ctx = Context {
        seed: cli.seed.unwrap_or(config.seed),
        config,
        tolerances,
        out: cli.out,
    };
    match cli.command {
        Command::Offline => commands::offline(&ctx),
        Command::Simulate => commands::simulate_cmd(&ctx),
        Command::Table1 => commands::table1(&ctx),
        Command::Sweep => commands::sweep(&ctx),
        Command::Bounds => commands::bounds(&ctx),
        Command::Stationary => commands::stationary(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("rokf: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
