//! Experiment runner for occupancy-based planning from passive data.
//!
//! Every subcommand reads one flat config file, resolves all randomness
//! from a recorded master seed, and writes CSV artifacts into the declared
//! output directory. Exit codes: 0 success, 1 validation or parse failure,
//! 2 solver non-convergence.

mod commands;
mod config;
mod inputs;
mod outio;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Config;
use outio::OutDir;

#[derive(Parser)]
#[command(
    name = "passive-rl",
    about = "Occupancy-measure planning and estimation experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the regularized planning problem against a fixed reference.
    Solve(CommonArgs),
    /// Run the round-based plan/deploy/re-estimate loop.
    Online(CommonArgs),
    /// Repeat online runs along one axis (T, n, H, memory_alpha, bandwidth).
    Sweep(CommonArgs),
    /// Audit a hard model pair against the regret floor.
    Lowerbound(CommonArgs),
    /// Check a kernel's constants and error bounds.
    ValidateKernel(CommonArgs),
    /// Estimate an occupancy from fresh rollouts.
    Estimate(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config file (flat `key = value` with [section] headers).
    #[arg(long)]
    config: PathBuf,
    /// Directory where all CSV artifacts are written.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the master seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version are successful outcomes; anything else is a
            // usage error, reported with the reserved validation code.
            let _ = err.print();
            return match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn dispatch(cli: &Cli) -> passive_rl::Result<()> {
    let (args, run): (&CommonArgs, fn(&Config, &OutDir, Option<u64>) -> passive_rl::Result<()>) =
        match &cli.command {
            Command::Solve(args) => (args, commands::solve::run),
            Command::Online(args) => (args, commands::online::run),
            Command::Sweep(args) => (args, commands::sweep::run),
            Command::Lowerbound(args) => (args, commands::lowerbound::run),
            Command::ValidateKernel(args) => (args, commands::kernel::run),
            Command::Estimate(args) => (args, commands::estimate::run),
        };
    let config = Config::load(&args.config)?;
    let out = OutDir::new(&args.out)?;
    run(&config, &out, args.seed)
}

/// Non-convergence (possibly wrapped in a round marker) exits 2; every
/// other failure is a validation/parse error and exits 1.
fn exit_code_for(err: &passive_rl::Error) -> u8 {
    let mut current = err;
    loop {
        match current {
            passive_rl::Error::NonConvergence { .. } => return 2,
            passive_rl::Error::Round { source, .. } => current = source,
            _ => return 1,
        }
    }
}
