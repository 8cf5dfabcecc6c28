//! `gpam`: command-line driver for the Laplace-asymptotics pipeline.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical fault, 1 other.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigError, RunConfig};

#[derive(Parser)]
#[command(name = "gpam", version, about = "Small-noise Laplace asymptotics for the 2D generalized PAM")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// override a configuration key, e.g. `--set grid.n=64`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// worker threads
    #[arg(long)]
    jobs: Option<usize>,
    /// output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// root seed, overriding `noise.seed`
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// One shifted solve with exported trajectories
    Simulate(Common),
    /// Minimise the rate functional
    Minimize(Common),
    /// Estimate the expansion coefficients
    Expand(Common),
    /// Direct, shifted and expansion values of J(ε)
    Compare(Common),
    /// Tail diagnostics for the model norm and the quadratic form
    Tails(Common),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<gpam::Error>() {
        Some(gpam::Error::Exploded | gpam::Error::SolverFault(_)) => 3,
        _ => 1,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (command, common) = match cli.command {
        Command::Simulate(c) => (commands::simulate as Handler, c),
        Command::Minimize(c) => (commands::minimize_cmd as Handler, c),
        Command::Expand(c) => (commands::expand as Handler, c),
        Command::Compare(c) => (commands::compare as Handler, c),
        Command::Tails(c) => (commands::tails as Handler, c),
    };
    let mut overrides = common.overrides;
    if let Some(seed) = common.seed {
        overrides.push(format!("noise.seed={seed}"));
    }
    let cfg = RunConfig::load(common.config.as_deref(), &overrides)?;
    if let Some(jobs) = common.jobs {
        if jobs == 0 {
            return Err(ConfigError("--jobs must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    command(&cfg, &common.out)
}

type Handler = fn(&RunConfig, &std::path::Path) -> anyhow::Result<()>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
