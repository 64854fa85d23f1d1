use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod manifest;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Debug, Parser)]
#[command(
    name = "sigclass",
    version,
    about = "Direct and scalogram signal classification"
)]
pub struct Cli {
    /// `key = value` file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic eight-class dataset.
    Synth(SynthArgs),
    /// Train a classifier and keep its best-accuracy checkpoint.
    Train(TrainArgs),
    /// Sweep the learning rate and suggest a value.
    LrFind(LrFindArgs),
    /// Render every signal's scalogram as a PNG heatmap.
    CwtExport(CwtExportArgs),
    /// Evaluate a checkpoint on the validation split (or every row).
    Eval(EvalArgs),
    /// Predict classes for the signals in a file.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// direct | wavelet
    #[arg(long)]
    pub approach: Option<String>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub valid_frac: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Fixed learning rate (policy `fixed`).
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_min: Option<f64>,
    #[arg(long)]
    pub lr_max: Option<f64>,
    /// fixed | one-cycle | slice
    #[arg(long)]
    pub lr_policy: Option<String>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// f32 | f64
    #[arg(long)]
    pub precision: Option<String>,
}

#[derive(Debug, Args)]
pub struct LrFindArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub start: Option<f64>,
    #[arg(long)]
    pub end: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CwtExportArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Export only the first N signals.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Split seed; defaults to the one stored in the checkpoint.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub valid_frac: Option<f64>,
    /// Evaluate every row instead of the validation split.
    #[arg(long)]
    pub all: bool,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
