use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fracobs_cli::commands::{cmd_extend, cmd_solve, cmd_study, cmd_verify};
use fracobs_cli::{ExperimentConfig, Result};

/// Fractional obstacle problems on periodic grids.
///
/// Exit codes: 0 success, 1 invalid config or missing artifacts,
/// 2 non-convergence or failed checks. Log level from `RUST_LOG`.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve on every configured grid and write u, ψ, μ and a report.
    Solve(Args),
    /// Poisson-extend solved fields and calibrate the Dirichlet-to-Neumann map.
    Extend(Args),
    /// Run every check on existing artifacts and write verify.{csv,json}.
    Verify(Args),
    /// Solve, extend and verify, resuming completed grids; writes study.{csv,json}.
    Study(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<()> {
    let (Command::Solve(a) | Command::Extend(a) | Command::Verify(a) | Command::Study(a)) = &cli.command;
    let cfg = ExperimentConfig::load(&a.config)?;
    let out = a.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    match cli.command {
        Command::Solve(_) => cmd_solve(&cfg, &out),
        Command::Extend(_) => cmd_extend(&cfg, &out),
        Command::Verify(_) => cmd_verify(&cfg, &out),
        Command::Study(_) => cmd_study(&cfg, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
