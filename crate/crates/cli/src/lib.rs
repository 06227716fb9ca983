//! Command-line runner: training, evaluation, clustering, embedding export,
//! scatter plots and parameter sweeps over a graph dataset directory.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod manifest;
pub mod svg;

pub use commands::{cmd_cluster, cmd_embed, cmd_eval, cmd_plot, cmd_sweep, cmd_train};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] ipgdn::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// 2 for bad input, configuration or data; 3 for failures while running.
    pub fn exit_code(&self) -> i32 {
        use ipgdn::Error::*;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                Shape { .. } | Config(_) | Validation(_) | Parse { .. } | Checkpoint(_) => 2,
                Io { .. } | Training { .. } => 3,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "ipgdn", version, about = "Train and evaluate disentangled graph networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write checkpoint.bin, trace.json and manifest.json.
    Train(TrainArgs),
    /// Print test-split accuracy and macro F1 of a checkpoint.
    Eval(EvalArgs),
    /// K-means over final-layer embeddings of the labeled nodes.
    Cluster(ClusterArgs),
    /// Write final-layer embeddings to embeddings.tsv.
    Embed(ExportArgs),
    /// Write a 2-D PCA scatter plot of the embeddings to scatter.svg.
    Plot(ExportArgs),
    /// Train one model per value of a config parameter.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data_dir: PathBuf,
    /// JSON model config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train this many consecutive seeds and report mean ± std.
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Number of clusters; defaults to the number of classes.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Config key to vary, e.g. `lambda`.
    #[arg(long)]
    pub param: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
    pub values: Vec<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
}

/// Runs a parsed command and returns the JSON text for stdout.
pub fn run(cli: Cli) -> CliResult<String> {
    let value = match cli.command {
        Command::Train(a) => serde_json::to_value(cmd_train(&a)?),
        Command::Eval(a) => serde_json::to_value(cmd_eval(&a)?),
        Command::Cluster(a) => serde_json::to_value(cmd_cluster(&a)?),
        Command::Embed(a) => serde_json::to_value(cmd_embed(&a)?),
        Command::Plot(a) => serde_json::to_value(cmd_plot(&a)?),
        Command::Sweep(a) => serde_json::to_value(cmd_sweep(&a)?),
    };
    let value = value.map_err(|e| CliError::Usage(format!("cannot encode output: {e}")))?;
    Ok(serde_json::to_string_pretty(&value).expect("JSON values serialize"))
}
