//! `bers`: experiment commands for Bayesian experience reuse.
//!
//! Every command reads one effective configuration (profile defaults plus an
//! optional TOML override file plus flags), writes its artifacts under its
//! own subdirectory of `--out`, and finishes with a `manifest.json` that
//! pins the config hash, trial seeds, and dataset content hashes needed to
//! reproduce the outputs bit for bit.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ExperimentConfig, Profile};

/// Errors owned by the command layer; everything else bubbles up from the
/// library and is mapped to an exit code by kind.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    MissingData(String),
}

#[derive(Parser)]
#[command(
    name = "bers",
    version,
    about = "Bayesian experience reuse experiments"
)]
struct Cli {
    /// TOML file overriding the selected profile's defaults per key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Hyper-parameter profile the config starts from.
    #[arg(long, global = true, value_enum, default_value_t = Profile::Paper)]
    profile: Profile,
    /// Base seed; trial t derives its streams from seed + t.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of independent trials (default depends on the command).
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output root; each command writes under its own subdirectory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the three optimization source datasets by running the base
    /// optimizer on each source function until the collection fitness.
    GenSourceOpt,
    /// Reuse runs on one optimization target with a source-selection strategy.
    TransferOpt {
        /// Target function: rosenbrock, ackley, sphere, or rastrigin.
        #[arg(long, default_value = "rastrigin")]
        target: String,
        /// bers, ucb, equal, none, or single:<index>.
        #[arg(long, default_value = "bers")]
        strategy: String,
        /// Directory with the source datasets (default <out>/sources).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// All selected functions learn together, sharing best solutions.
    MultitaskOpt {
        /// Comma-separated function names; repeats allowed.
        #[arg(long, value_delimiter = ',')]
        tasks: Option<Vec<String>>,
    },
    /// Generate supply-chain source datasets from the three cost scenarios.
    GenSourceSupply,
    /// Reuse run on the supply-chain target scenario with posterior snapshots.
    TransferSupply {
        /// Directory with the supply source data (default <out>/sources-supply).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Solve the source weighting for stored datasets; no environment runs.
    WeightsOnly {
        /// Directory whose *.csv files are the source datasets
        /// (default <out>/sources).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Target demonstration file.
        #[arg(long)]
        target_data: PathBuf,
        /// Override the model transform: identity or log1p.
        #[arg(long)]
        transform: Option<String>,
        /// Pooled refinement batches after pretraining.
        #[arg(long, default_value_t = 1000)]
        refine_batches: usize,
    },
}

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

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = ExperimentConfig::load(cli.profile, cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(trials) = cli.trials {
        config.trials = Some(trials);
    }
    if let Some(out) = cli.out {
        config.out = out;
    }
    match cli.command {
        Command::GenSourceOpt => commands::gen_source_opt::run(&config),
        Command::TransferOpt {
            target,
            strategy,
            data,
        } => commands::transfer_opt::run(&config, &target, &strategy, data),
        Command::MultitaskOpt { tasks } => commands::multitask_opt::run(&config, tasks),
        Command::GenSourceSupply => commands::gen_source_supply::run(&config),
        Command::TransferSupply { data } => commands::transfer_supply::run(&config, data),
        Command::WeightsOnly {
            data,
            target_data,
            transform,
            refine_batches,
        } => commands::weights_only::run(&config, data, &target_data, transform, refine_batches),
    }
}

/// 2 config error, 3 missing data, 4 numerical failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(cli) = err.downcast_ref::<CliError>() {
        return match cli {
            CliError::Config(_) => 2,
            CliError::MissingData(_) => 3,
        };
    }
    if let Some(core) = err.downcast_ref::<bers_core::Error>() {
        use bers_core::Error as E;
        return match core {
            E::InvalidConfig(_) | E::Parse(_) | E::PopulationTooSmall { .. } => 2,
            E::Io(_) | E::EmptyDataset | E::EmptySourceData => 3,
            _ => 4,
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 3;
    }
    4
}
