//! `tripletsim`: ingest, train, evaluate, embed and query.
//!
//! Exit codes: 0 on success, 2 for usage and data errors, 1 for internal failures.

mod commands;
mod embeddings;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "tripletsim", version, about = "Music similarity with a triplet-loss embedding")]
struct Cli {
    /// Worker threads for data-parallel steps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    /// FMA `features.csv` + `tracks.csv`.
    Fma,
    /// `track_id\tf0...` + `track_id\tartist_id\tgenre`.
    Tsv,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyArg {
    Random,
    Genre,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Join features with metadata, filter artists and split them into TRAIN/EVAL.
    Ingest(IngestArgs),
    /// Train the embedding network on the TRAIN split.
    Train(TrainArgs),
    /// Mean retrieval AUC of each model on the EVAL split.
    Eval(EvalArgs),
    /// Export an embedding per track.
    Embed(EmbedArgs),
    /// Nearest tracks to a query in an embedding file.
    Knn(KnnArgs),
    /// Write a synthetic hierarchical Gaussian corpus.
    Synthgen(SynthArgs),
}

#[derive(clap::Args, Debug)]
pub struct IngestArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub metadata: PathBuf,
    #[arg(long, value_enum, default_value_t = InputFormat::Fma)]
    pub format: InputFormat,
    #[arg(long, default_value_t = 2)]
    pub min_songs: usize,
    #[arg(long, default_value_t = 0.7)]
    pub train_frac: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "corpus.bin")]
    pub out: PathBuf,
}

#[derive(clap::Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = StrategyArg::Random)]
    pub strategy: StrategyArg,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    /// Triplets per epoch.
    #[arg(long, default_value_t = 512)]
    pub epoch_size: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    /// Triplet margin.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Only anchor on tracks whose genre offers a same-genre negative.
    #[arg(long)]
    pub no_fallback: bool,
    /// Feed raw features to the network instead of TRAIN z-scores.
    #[arg(long)]
    pub no_standardize: bool,
    /// Continue from a model file written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long, default_value = "model.tnet")]
    pub out: PathBuf,
    #[arg(long, default_value = "log.tsv")]
    pub log: PathBuf,
    /// Write every sampled triplet as track ids.
    #[arg(long)]
    pub dump_triplets: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Comma-separated: `raw`, `zscore` or model file paths.
    #[arg(long, value_delimiter = ',', default_value = "raw,zscore")]
    pub models: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "report.tsv")]
    pub out: PathBuf,
}

#[derive(clap::Args, Debug)]
pub struct EmbedArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// `raw`, `zscore` or a model file.
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value = "embeddings.tsv")]
    pub out: PathBuf,
}

#[derive(clap::Args, Debug)]
pub struct KnnArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub query: u64,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
}

#[derive(clap::Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 4)]
    pub genres: usize,
    #[arg(long, default_value_t = 8)]
    pub artists_per_genre: usize,
    #[arg(long, default_value_t = 6)]
    pub tracks_per_artist: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 3.0)]
    pub genre_spread: f64,
    #[arg(long, default_value_t = 1.0)]
    pub artist_spread: f64,
    #[arg(long, default_value_t = 1.2)]
    pub track_noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "features.tsv")]
    pub features_out: PathBuf,
    #[arg(long, default_value = "metadata.tsv")]
    pub metadata_out: PathBuf,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(commands::UsageError("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Ingest(a) => commands::ingest(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Embed(a) => commands::embed(&a),
        Command::Knn(a) => commands::knn(&a),
        Command::Synthgen(a) => commands::synthgen(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
        Err(_) => ExitCode::from(1),
    }
}
