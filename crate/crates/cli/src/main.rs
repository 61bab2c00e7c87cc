//! `permit-sim` command-line driver.
//!
//! Exit status: 0 success, 1 i/o error, 2 invalid configuration or input, 3 solver
//! failure, 4 scenario budget exceeded.

mod commands;
mod config_file;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use permit_sim::config::{ExpectationMode, MatchingMode};
use permit_sim::risk::RiskConvention;
use permit_sim::ModelParams;

use crate::commands::MonteCarloArgs;
use crate::config_file::ConfigFile;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "permit-sim", version, about = "Permit market, technology adoption and price-support simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Expected,
    Conditional,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatchingArg {
    Proportional,
    Stochastic,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    Standard,
    Paper,
}

#[derive(clap::Args)]
struct ModelArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the configured price support.
    #[arg(long)]
    price_support: Option<f64>,
    /// Comma-separated price-support levels to sweep.
    #[arg(long, value_delimiter = ',')]
    pg_sweep: Vec<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the built-in reference configuration.
    Reference,
    /// Check a configuration and list every violation.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Adoption trajectories without and with the price support.
    Adopt {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Monte Carlo ensemble of realized phases with risk reports.
    Montecarlo {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 2000)]
        paths: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long, value_enum)]
        matching: Option<MatchingArg>,
        #[arg(long, value_enum, default_value = "standard")]
        risk_convention: ConventionArg,
        /// Histogram bins for the density table.
        #[arg(long, default_value_t = 50)]
        bins: usize,
        /// Sweep by repricing the outlay on the configured run instead of re-solving.
        #[arg(long)]
        frozen: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Solve a single exchange from a positions file and print JSON.
    Market {
        /// CSV with header `position,technology`.
        #[arg(long)]
        positions: PathBuf,
        #[arg(long)]
        penalty: f64,
        #[arg(long, default_value_t = 0.0)]
        price_support: f64,
    },
}

fn load(model: &ModelArgs) -> Result<ModelParams, CliError> {
    let mut file = ConfigFile::load(&model.config)?;
    if let Some(pg) = model.price_support {
        file.policy.price_support = pg;
    }
    let params = file.resolve()?;
    for pg in &model.pg_sweep {
        params.with_price_support(*pg).validated()?;
    }
    Ok(params)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Reference => {
            println!("{}", output::pretty_sorted(&ConfigFile::reference())?);
        }
        Command::Validate { config } => {
            ConfigFile::load(&config)?.resolve()?;
            println!("ok");
        }
        Command::Adopt { model, out } => {
            let params = load(&model)?;
            commands::adopt(&params, &model.pg_sweep, &out)?;
        }
        Command::Montecarlo {
            model,
            paths,
            seed,
            mode,
            matching,
            risk_convention,
            bins,
            frozen,
            out,
        } => {
            let mut params = load(&model)?;
            if let Some(m) = mode {
                params.options.expectation_mode = match m {
                    Mode::Expected => ExpectationMode::Expected,
                    Mode::Conditional => ExpectationMode::Conditional,
                };
            }
            if let Some(m) = matching {
                params.options.matching = match m {
                    MatchingArg::Proportional => MatchingMode::Proportional,
                    MatchingArg::Stochastic => MatchingMode::Stochastic,
                };
            }
            if paths == 0 || bins == 0 {
                return Err(CliError::Config("--paths and --bins must be at least 1".into()));
            }
            let convention = match risk_convention {
                ConventionArg::Standard => RiskConvention::Standard,
                ConventionArg::Paper => RiskConvention::Paper,
            };
            let args = MonteCarloArgs {
                paths,
                seed,
                sweep: &model.pg_sweep,
                convention,
                bins,
                frozen,
            };
            commands::montecarlo(&params, &args, &out)?;
        }
        Command::Market {
            positions,
            penalty,
            price_support,
        } => {
            let text = std::fs::read_to_string(&positions)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", positions.display())))?;
            let parsed = commands::parse_positions(&text)?;
            let report = commands::market(&parsed, penalty, price_support)?;
            println!("{}", output::pretty_sorted(&report)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
