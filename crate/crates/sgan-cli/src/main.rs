mod commands;
mod config;
mod error;
mod manifest;
mod metrics;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::RunPaths;
use config::Preset;

#[derive(Parser)]
#[command(
    name = "sgan",
    version,
    about = "Learn stochastic transition models on grid domains and check them against exact dynamics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a transition dataset from the configured domain
    Generate(RunArgs),
    /// Train the configured learner on a dataset
    Train(TrainArgs),
    /// Compare a trained model's samples against the exact dynamics
    Evaluate(EvalArgs),
    /// Numerical checks of the discretization and critic-field claims
    Theory(TheoryArgs),
    /// Aggregate metrics rows from run directories into one table
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the config's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Fill unset budget keys from a preset
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Run directory for outputs and the manifest
    #[arg(long)]
    out: PathBuf,
}

impl RunArgs {
    fn paths(&self) -> RunPaths {
        RunPaths {
            config: self.config.clone(),
            seed: self.seed,
            preset: self.preset,
            out: self.out.clone(),
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Dataset to train on (default: <out>/dataset.sgds)
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Checkpoint to evaluate (default: <out>/model.sgck)
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Training dataset, needed to hold out unseen backgrounds
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct TheoryArgs {
    #[command(subcommand)]
    which: TheoryCommand,
}

#[derive(Subcommand)]
enum TheoryCommand {
    /// Simulate interpolation hit probabilities against the closed form
    Lemma {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Grid cells per unit distance scale
        #[arg(long, default_value_t = 2000)]
        cells: u64,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
    },
    /// Train a 1D critic and compare its input gradient to the predicted field
    Theorem {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 20_000)]
        steps: usize,
        /// Histogram bins for the two densities
        #[arg(long, default_value_t = 1000)]
        bins: usize,
        /// Train on identical densities (the no-signal control)
        #[arg(long)]
        null: bool,
    },
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories holding metrics.csv files
    dirs: Vec<PathBuf>,
    /// Also write the table to this file
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run() -> error::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate(args) => commands::cmd_generate(&args.paths()),
        Command::Train(args) => commands::cmd_train(&args.run.paths(), args.data.as_deref()),
        Command::Evaluate(args) => commands::cmd_evaluate(
            &args.run.paths(),
            args.checkpoint.as_deref(),
            args.data.as_deref(),
        ),
        Command::Theory(args) => match args.which {
            TheoryCommand::Lemma { out, seed, cells, trials } => {
                commands::cmd_theory_lemma(&out, seed, cells, trials)
            }
            TheoryCommand::Theorem { out, seed, steps, bins, null } => {
                commands::cmd_theory_theorem(&out, seed, steps, bins, null)
            }
        },
        Command::Report(args) => commands::cmd_report(&args.dirs, args.out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
