use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "trxos", version, about = "Few-shot open-set action recognition on skeleton sequences")]
pub struct Cli {
    /// TOML file with [gen_data], [train], [eval], [confusion] and [infer] sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Repeat for more log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Run single-threaded.
    #[arg(long, global = true)]
    pub sequential: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (builtin suite or a TOML suite file).
    GenData(GenDataArgs),
    /// Train a model on the train split of a dataset directory.
    Train(TrainArgs),
    /// FSOS accuracy over random k-way tasks on the test split.
    Eval(EvalArgs),
    /// One-class accept-rate matrix on the test split.
    Confusion(ConfusionArgs),
    /// Classify one query against a support directory.
    Infer(InferArgs),
    /// Check every sequence file of a dataset directory.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Suite description; the builtin suite when absent.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub per_class: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory: config.toml, checkpoint.bin, train_log.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from the run directory's checkpoint.
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub episodes: Option<u64>,
    #[arg(long)]
    pub way: Option<usize>,
    #[arg(long)]
    pub queries: Option<usize>,
    #[arg(long)]
    pub checkpoint_interval: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// `terms` or `batch`.
    #[arg(long)]
    pub os_mean: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Not needed when the only method is `random`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Output directory: results.csv, per_class.csv, config.toml.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated way counts.
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Comma-separated subset of trx-os, exp, random.
    #[arg(long, value_delimiter = ',')]
    pub method: Option<Vec<String>>,
    /// TRX-OS vs EXP vs analytic RANDOM table (also writes table.txt).
    #[arg(long)]
    pub compare: bool,
    /// Train a fresh model per repetition using the [train] config.
    #[arg(long)]
    pub retrain_per_rep: bool,
}

#[derive(Debug, Args)]
pub struct ConfusionArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output directory: confusion.csv, config.toml.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory with one sequence file per class.
    #[arg(long)]
    pub support: PathBuf,
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long)]
    pub tau: Option<f64>,
    /// `disc` (default) or `exp`.
    #[arg(long)]
    pub confidence: Option<String>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub frames: usize,
    #[arg(long, default_value_t = 24)]
    pub joints: usize,
}
