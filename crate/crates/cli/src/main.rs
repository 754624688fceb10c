//! `regrowth`: solver front end for the risk-sensitive optimal growth
//! model with Markov regime switching.
//!
//! Subcommands: `check` (standing assumptions and their constants),
//! `solve` (value function, policy, and single-regime baseline tables),
//! `euler` (optimality residual profile), `simulate` (controlled chain,
//! histograms, drift diagnostic), `plot` (SVG figures from solve
//! artifacts). All outputs carry the config hash and seed in their
//! headers, and identical configurations reproduce identical bytes.
//!
//! Exit codes: 0 success, 1 configuration or artifact errors,
//! 2 assumption violations, 3 numeric failures.

mod commands;
mod config;
mod error;
mod output;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::AppError;
use crate::output::say_err;

#[derive(Parser)]
#[command(
    name = "regrowth",
    version,
    about = "Risk-sensitive optimal growth with regime switching: solve, diagnose, simulate"
)]
struct Cli {
    /// TOML run configuration; omitted keys (or the whole file) fall
    /// back to the reference three-regime economy.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Artifact directory (overrides output.directory).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Simulation seed (overrides simulation.seed).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Run pipelines even if the assumption gate fails.
    #[arg(long, global = true)]
    force: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify the standing assumptions and report their constants.
    Check,
    /// Run value iteration; write value/policy/report tables plus the
    /// single-regime baseline.
    Solve,
    /// Solve, then profile Euler-equation residuals over the grid.
    Euler,
    /// Solve, then simulate the controlled chain and run the drift test.
    Simulate,
    /// Render value-function and investment-ratio figures from solve
    /// artifacts.
    Plot,
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("REGROWTH_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
            _ => {
                say_err!("error: REGROWTH_THREADS must be a positive integer, got {threads:?}");
                return ExitCode::from(1);
            }
        }
    }

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            say_err!("error: {e}");
            e.exit_code()
        }
    }
}

fn run(cli: &Cli) -> Result<(), AppError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.simulation.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output.directory = out.display().to_string();
    }
    config.validate()?;

    match cli.command {
        Command::Check => commands::check(&config),
        Command::Solve => commands::solve(&config, cli.force),
        Command::Euler => commands::euler(&config, cli.force),
        Command::Simulate => commands::simulate(&config, cli.force),
        Command::Plot => commands::plot(&config),
    }
}
