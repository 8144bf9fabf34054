//! Command-line front end: `aci simulate | analyze | validate | run`.
//!
//! Exit codes: 0 success, 1 a validation check failed, 2 usage, configuration
//! or numerical error.

mod commands;
mod config;
mod io;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{cmd_analyze, cmd_run, cmd_simulate, cmd_validate, load_trajectory, AnalysisSummary, TRAJECTORY_CSV};
pub use config::{
    AnalysisConfig, AssimilationConfig, EnsoConfig, ModelConfig, ModelName, OutputConfig, PredatorPreyConfig, RunConfig,
    SimulationConfig,
};
pub use io::{num, read_trajectory};

use crate::error::Result;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "aci", version, about = "Assimilative causal inference for conditional Gaussian systems")]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed (overrides `simulation.seed` and `validation.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, env = "ACI_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the configured model and write the trajectory.
    Simulate,
    /// Filter, smooth and compute ACI/CIR for a saved trajectory.
    Analyze {
        /// Trajectory CSV; `<out>/trajectory.csv` when omitted.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Run the validation suite.
    Validate,
    /// Simulate, then analyze.
    Run,
    /// Print the effective configuration as TOML.
    Config,
}

fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.simulation.seed = seed;
        cfg.validation.seed = seed;
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<i32> {
    let cfg = effective_config(cli)?;
    match &cli.command {
        Command::Simulate => {
            let (_, tr) = cmd_simulate(&cfg)?;
            eprintln!("wrote {} steps to {}", tr.steps(), cfg.output.dir.display());
        }
        Command::Analyze { trajectory } => {
            let path = trajectory.clone().unwrap_or_else(|| cfg.output.dir.join(TRAJECTORY_CSV));
            let (model, tr) = load_trajectory(&cfg, &path)?;
            let s = cmd_analyze(&cfg, &model, &tr)?;
            eprintln!("max ACI {:.6e}, mean objective CIR {:.6e}", s.max_aci, s.mean_objective_cir);
        }
        Command::Run => {
            let s = cmd_run(&cfg)?;
            eprintln!("max ACI {:.6e}, mean objective CIR {:.6e}", s.max_aci, s.mean_objective_cir);
        }
        Command::Validate => {
            let reports = cmd_validate(&cfg)?;
            for r in &reports {
                eprintln!("{:<36} {:?} measured {:.3e} tolerance {:.3e}", r.check_name, r.status, r.measured, r.tolerance);
            }
            if reports.iter().any(|r| !r.passed()) {
                return Ok(EXIT_CHECK_FAILED);
            }
        }
        Command::Config => print!("{}", cfg.to_toml()?),
    }
    Ok(EXIT_OK)
}

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let go = || match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    };
    match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(go),
            Err(e) => {
                eprintln!("error: thread pool: {e}");
                EXIT_ERROR
            }
        },
        None => go(),
    }
}
