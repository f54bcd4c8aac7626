//! `mixw2`: generate data, train, evaluate, simulate, and compare samples.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigError, Preset};

#[derive(Debug, Parser)]
#[command(name = "mixw2", version, about = "Stochastic networks trained with a generalized local W2 loss")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// JSON config; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file or directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset or trajectory bundle as CSV.
    Generate(GenerateArgs),
    /// Train a model into a run directory.
    Train(TrainArgs),
    /// Score a trained run and write metrics.csv.
    Eval(EvalArgs),
    /// Simulate the toggle switch and write trajectories as CSV.
    Simulate(SimulateArgs),
    /// Squared generalized W2 between two sample files.
    Distance(DistanceArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Noise level of the piecewise field.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Rows, or trajectories for `toggle`.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Training CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Minibatch size.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Run directory written by `train`.
    #[arg(long)]
    pub run: PathBuf,
    /// Test CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Output draws per input.
    #[arg(long)]
    pub draws: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Number of trajectories.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DistanceArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated categorical columns.
    #[arg(long, value_delimiter = ',')]
    pub categorical: Option<Vec<String>>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<mixw2::Error>() {
        Some(m) if m.is_numeric() => 3,
        _ => 1,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(config::bad("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Distance(a) => commands::distance(&a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
