//! `mtree` — canonicalize arithmetic expressions into unified MTrees,
//! score prediction files, inspect corpora, and run the toy decoder.
//!
//! Exit codes: 0 success, 2 input errors (bad flags, unreadable or
//! malformed inputs), 1 runtime failures (invalid gold samples during
//! evaluation, training aborts).

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod cmd;
pub mod error;
pub mod util;

pub use error::{CliError, EXIT_INPUT, EXIT_RUNTIME};

#[derive(Debug, Parser)]
#[command(name = "mtree", version, about = "Unified MTree toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print an expression's canonical MTree and exact value
    Canonicalize(CanonicalizeArgs),
    /// Compare two expressions: MTree equality and path IoU
    Compare(CompareArgs),
    /// Score a prediction file against a gold dataset
    Evaluate(EvaluateArgs),
    /// Branch-number statistics of a dataset or synthetic corpus
    Stats(StatsArgs),
    /// Write a deterministic synthetic corpus
    Generate(GenerateArgs),
    /// Train the toy decoder on a synthetic corpus
    TrainToy(TrainToyArgs),
    /// Score a saved checkpoint on the held-out synthetic split
    EvalToy(EvalToyArgs),
}

#[derive(Debug, Args)]
pub struct CanonicalizeArgs {
    /// Infix expression, optionally with N<k> placeholders
    pub expression: String,
    /// Values for N0,N1,... placeholders, comma-separated
    #[arg(long)]
    pub numbers: Option<String>,
    /// Print the form-tag-free RefMTree instead
    #[arg(long)]
    pub refmtree: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub left: String,
    pub right: String,
    /// Values for N0,N1,... placeholders, comma-separated
    #[arg(long)]
    pub numbers: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Gold dataset file (JSON array or one JSON object per line)
    #[arg(long)]
    pub gold: PathBuf,
    /// Dataset schema: math23k or mawps
    #[arg(long, default_value = "math23k")]
    pub dialect: String,
    /// Prediction file: one `id<TAB>expression` per line
    #[arg(long)]
    pub pred: PathBuf,
    /// Absolute value tolerance (number, percent, or fraction)
    #[arg(long, default_value = "1/10000")]
    pub tol: String,
    /// Exclude gold records whose MTree branch number exceeds this
    #[arg(long, default_value_t = 8)]
    pub max_branch: usize,
    /// Whitelisted constants equations may use, comma-separated
    #[arg(long, default_value = "1,100")]
    pub constants: String,
    /// Write the machine-readable key=value report here
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the ingestion exclusion report here
    #[arg(long)]
    pub exclusions_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Gold dataset file (requires --dialect; conflicts with --count)
    #[arg(long, conflicts_with = "count")]
    pub gold: Option<PathBuf>,
    /// Dataset schema: math23k or mawps
    #[arg(long, default_value = "math23k")]
    pub dialect: String,
    /// Generate a synthetic corpus of this size instead
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Synthetic tree depth (1..=6)
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    /// Synthetic branch distribution, e.g. 2:0.4,3:0.4,4:0.2
    #[arg(long, default_value = "2:0.4,3:0.4,4:0.2")]
    pub branch_dist: String,
    #[arg(long, default_value_t = 2)]
    pub leaf_min: i64,
    #[arg(long, default_value_t = 12)]
    pub leaf_max: i64,
    /// Report the fraction of samples with branch number below this
    #[arg(long, default_value_t = 8)]
    pub max_branch: usize,
    /// Ingestion tolerance for --gold
    #[arg(long, default_value = "1/10000")]
    pub tol: String,
    /// Ingestion constants for --gold
    #[arg(long, default_value = "1,100")]
    pub constants: String,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    /// Branch distribution, e.g. 2:0.4,3:0.4,4:0.2
    #[arg(long, default_value = "2:0.4,3:0.4,4:0.2")]
    pub branch_dist: String,
    #[arg(long, default_value_t = 2)]
    pub leaf_min: i64,
    #[arg(long, default_value_t = 12)]
    pub leaf_max: i64,
    /// Output file; stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainToyArgs {
    /// key=value config file
    #[arg(long)]
    pub config: PathBuf,
    /// Ablation: disable cross-goal attention regardless of the config
    #[arg(long)]
    pub no_cross_goal: bool,
    /// Override the config's seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the trained checkpoint here
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the machine-readable key=value report here
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Log a step=.. loss=.. line every N steps (0 = never)
    #[arg(long, default_value_t = 50)]
    pub log_every: usize,
}

#[derive(Debug, Args)]
pub struct EvalToyArgs {
    /// Checkpoint written by train-toy
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Config describing the held-out corpus
    #[arg(long)]
    pub config: PathBuf,
    /// Write the machine-readable key=value report here
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Dispatch one parsed invocation.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Canonicalize(a) => cmd::canonicalize(&a),
        Command::Compare(a) => cmd::compare(&a),
        Command::Evaluate(a) => cmd::evaluate(&a),
        Command::Stats(a) => cmd::stats(&a),
        Command::Generate(a) => cmd::generate(&a),
        Command::TrainToy(a) => cmd::train_toy(&a),
        Command::EvalToy(a) => cmd::eval_toy(&a),
    }
}
