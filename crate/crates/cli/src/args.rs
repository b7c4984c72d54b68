use std::path::PathBuf;

use aswa_core::kg::Split;
use aswa_core::models::ModelKind;
use aswa_core::queries::{QueryType, TConorm, TNorm};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "aswa",
    version,
    about = "Knowledge-graph embeddings with adaptive weight averaging"
)]
pub struct Cli {
    /// Run every loop on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model per seed and summarise test metrics.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split.
    Eval(EvalArgs),
    /// Sample multi-hop queries from a dataset.
    GenQueries(GenQueriesArgs),
    /// Answer queries with a checkpoint.
    Qa(QaArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StrategyName {
    None,
    Swa,
    Aswa,
    EarlyStop,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory holding train.txt, valid.txt and test.txt.
    #[arg(long)]
    pub dataset: PathBuf,
    /// distmult, complex, qmult or keci (keci:0,0).
    #[arg(long, default_value = "distmult")]
    pub model: ModelKind,
    #[arg(long, value_enum, default_value_t = StrategyName::Aswa)]
    pub strategy: StrategyName,
    /// First epoch averaged by SWA.
    #[arg(long, default_value_t = 0)]
    pub swa_start: usize,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 128)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1024)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 128)]
    pub d: usize,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
    /// Share of train kept when no validation split exists.
    #[arg(long, default_value_t = 0.95)]
    pub holdout_ratio: f64,
    #[arg(long, default_value_t = 0.0)]
    pub label_smoothing: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Ignore test.txt even if present.
    #[arg(long)]
    pub no_test: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Write one rank per query to this CSV file.
    #[arg(long)]
    pub per_query: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenQueriesArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Query types to sample; all eight by default.
    #[arg(long = "type", value_delimiter = ',')]
    pub types: Vec<QueryType>,
    /// Queries per type.
    #[arg(long, default_value_t = 500)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSONL output file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct QaArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// JSONL file written by gen-queries.
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub beam_k: usize,
    #[arg(long, default_value = "product")]
    pub tnorm: TNorm,
    #[arg(long, default_value = "probabilistic_sum")]
    pub tconorm: TConorm,
    /// Write one rank per (query, answer) to this CSV file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
