//! The `sta` command line: dataset generation, training, evaluation and
//! traversal rendering. Every command writes into a fresh directory
//! `<out>/<command>-<hash12>-<timestamp>` holding a `manifest.json`.
//!
//! Exit codes: 0 success, 1 internal error, 2 bad flags/config/schedule,
//! 3 I/O or malformed file, 4 non-finite loss, 5 incompatible shapes.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod schedule;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use error::{exit, CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "sta", version, about = "Sparse transformation analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a sprite-sequence dataset.
    GenData(GenDataArgs),
    /// Train a model (two stages) on a dataset file or online data.
    Train(TrainArgs),
    /// Evaluate a checkpoint against a held-out dataset.
    Eval(EvalArgs),
    /// Render latent traversals as a PPM mosaic.
    Traverse(TraverseArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// JSON config; defaults apply to missing keys (and to everything when omitted).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root directory for the run directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["data", "online"]))]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset file from `gen-data`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Generate a fresh batch every iteration from the config's data section.
    #[arg(long)]
    pub online: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Continue from a checkpoint, restoring the optimizer state.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Held-out dataset with ground-truth codes.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Seeds the evaluation suite and the ELBO samples (default: the checkpoint's seed).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sequences per single-transform and per pair set.
    #[arg(long, default_value_t = 100)]
    pub suite_size: usize,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["image", "from_data"]))]
pub struct TraverseArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Start frame as a PPM file.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Start from the first frame of this sequence in `--data`.
    #[arg(long, requires = "data")]
    pub from_data: Option<usize>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Inline schedule `k:g@a..b,...`; repeat for more mosaic rows.
    #[arg(long)]
    pub schedule: Vec<String>,
    /// Schedule matrix file (T rows of K speeds); repeatable.
    #[arg(long)]
    pub schedule_file: Vec<PathBuf>,
    /// Steps for inline schedules (default: the model's T).
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Traverse(a) => commands::traverse(&a),
    };
    match result {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
