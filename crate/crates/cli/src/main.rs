mod commands;
mod request;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mars_core::MarsError;

/// Donation response estimation and multi-stream party ranking.
#[derive(Debug, Parser)]
#[command(name = "mars", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted ground truth.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Fit the tensor co-factorization on a dataset directory.
    TrainSensor {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Fit the party ranker on top of a trained checkpoint.
    TrainCars {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        msps: PathBuf,
        #[arg(long)]
        donations: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Answer a donation or party recommendation request (JSON file).
    Recommend {
        #[arg(long)]
        model: PathBuf,
        /// Ranker parameters; required for party requests.
        #[arg(long)]
        cars: Option<PathBuf>,
        #[arg(long)]
        request: PathBuf,
        /// Donation history used for donation requests.
        #[arg(long)]
        donations: Option<PathBuf>,
        /// Write the answer here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Compute metrics for trained artifacts against a dataset directory.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        cars: Option<PathBuf>,
        /// Score response estimates on events from this slot on.
        #[arg(long, default_value_t = 0)]
        test_from: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

/// Failure classes, mapped to exit codes 2 and 1.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<MarsError> for Failure {
    fn from(e: MarsError) -> Self {
        match e {
            MarsError::Io(_) | MarsError::Diverged { .. } => Failure::Runtime(e.into()),
            _ => Failure::Usage(e.into()),
        }
    }
}

pub type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate {
            config,
            seed,
            out,
            force,
        } => commands::generate(config, seed, &out, force),
        Command::TrainSensor {
            data,
            config,
            seed,
            out,
            force,
        } => commands::train_sensor(&data, config, seed, &out, force),
        Command::TrainCars {
            model,
            msps,
            donations,
            config,
            seed,
            out,
            force,
        } => commands::train_cars(&model, &msps, &donations, config, seed, &out, force),
        Command::Recommend {
            model,
            cars,
            request,
            donations,
            out,
            force,
        } => commands::recommend(
            &model,
            cars.as_deref(),
            &request,
            donations.as_deref(),
            out.as_deref(),
            force,
        ),
        Command::Evaluate {
            data,
            model,
            cars,
            test_from,
            out,
            force,
        } => commands::evaluate(&data, &model, cars.as_deref(), test_from, &out, force),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
