//! `mimo-bc`: rate-loss tables, per-channel rate losses, ergodic rate curves
//! and the invariant suite.
//!
//! Exit status: 0 success, 1 a validation property failed, 2 configuration
//! or I/O error, 3 numerical error.

mod commands;
mod config;
mod error;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{load_file, Experiment, ExperimentConfig, FileConfig, Format, Overrides};
use error::CliError;

#[derive(Parser, Debug)]
#[command(version, about = "MIMO broadcast-channel rate-loss experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ergodic rate-loss table (closed form, optional Monte Carlo check).
    Table1(Common),
    /// Instantaneous rate loss and asymptotic rates, one row per seed.
    RateLoss(Common),
    /// Ergodic DPC and linear sum-rate curves with affine approximations.
    Curves(Common),
    /// Run the invariant suite; exits 1 if any property fails.
    Validate(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Trials (or seeds for rate-loss).
    #[arg(long)]
    trials: Option<usize>,
    /// Output path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Transmit-power grid in dB as start:step:stop.
    #[arg(long, allow_hyphen_values = true)]
    ptx_grid_db: Option<String>,
    /// Add Monte Carlo columns to table1.
    #[arg(long)]
    monte_carlo: bool,
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let (experiment, common) = match cli.command {
        Command::Table1(c) => (Experiment::Table1, c),
        Command::RateLoss(c) => (Experiment::RateLoss, c),
        Command::Curves(c) => (Experiment::Curves, c),
        Command::Validate(c) => (Experiment::Validate, c),
    };
    let file = match &common.config {
        Some(path) => load_file(path)?,
        None => FileConfig::default(),
    };
    let flags = Overrides {
        seed: common.seed,
        trials: common.trials,
        output: common.out,
        format: common.format,
        ptx_grid_db: common.ptx_grid_db,
        monte_carlo: common.monte_carlo,
    };
    let config = ExperimentConfig::resolve(experiment, file, flags)?;
    let report = match config.experiment {
        Experiment::Table1 => commands::run_table1(&config)?,
        Experiment::RateLoss => commands::run_rate_loss(&config)?,
        Experiment::Curves => commands::run_curves(&config)?,
        Experiment::Validate => commands::run_validate(&config)?,
    };
    match &config.output {
        Some(path) => std::fs::write(path, &report.body).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?,
        None => std::io::stdout()
            .write_all(report.body.as_bytes())
            .map_err(|source| CliError::Io {
                path: "<stdout>".into(),
                source,
            })?,
    }
    Ok(!report.failed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("validation failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
