//! `neurofeat`: extract neural features from speech and evaluate
//! valence/arousal regression on them.

mod commands;
mod provenance;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use neurofeat::features::{Dimension, LayerSelector, Pooling};

#[derive(Debug, Parser)]
#[command(name = "neurofeat", version, about)]
struct Cli {
    /// Worker threads for extraction and fold evaluation (default: all cores).
    #[arg(long, global = true, env = "NEUROFEAT_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a deterministic synthetic weight file.
    SynthWeights(SynthWeightsArgs),
    /// Compute pooled gate activations for every utterance of a manifest.
    Extract(ExtractArgs),
    /// Per-speaker correlation heat map between features and one dimension.
    Correlate(CorrelateArgs),
    /// Leave-one-speaker-out regression over one or more feature sets.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct SynthWeightsArgs {
    /// TOML model config; defaults to 3 blocks x 5 layers x 128 channels.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MfccArgs {
    #[arg(long, default_value_t = 16_000)]
    pub sample_rate: u32,
    #[arg(long, default_value_t = 512)]
    pub frame_len: usize,
    #[arg(long, default_value_t = 160)]
    pub hop_len: usize,
    #[arg(long, default_value_t = 40)]
    pub n_mels: usize,
    #[arg(long, default_value_t = 0.0)]
    pub fmin: f64,
    /// Upper mel edge in Hz (default: Nyquist).
    #[arg(long)]
    pub fmax: Option<f64>,
    #[arg(long, default_value_t = 1e-10)]
    pub log_floor: f64,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "mean")]
    pub pool: Pooling,
    /// Also dump each utterance's MFCC matrix (`<id>.mfcc`) here.
    #[arg(long)]
    pub mfcc_dump: Option<PathBuf>,
    #[command(flatten)]
    pub mfcc: MfccArgs,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub speaker: String,
    #[arg(long)]
    pub dim: Dimension,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Neural feature CSV written by `extract`.
    #[arg(long)]
    pub features: PathBuf,
    /// External feature CSVs (same row schema); every column is used.
    #[arg(long)]
    pub baseline: Vec<PathBuf>,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Keep only utterances whose annotators agree within --max-spread.
    #[arg(long)]
    pub consistent_only: bool,
    #[arg(long, default_value_t = 1.0)]
    pub max_spread: f64,
    /// Layer subsets of the neural features, one table row each.
    #[arg(long, default_values = ["all"])]
    pub layers: Vec<LayerSelector>,
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    /// Write every fold's fitted model under `<out>/models/`.
    #[arg(long)]
    pub dump_models: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    match cli.command {
        Command::SynthWeights(args) => commands::synth_weights(&args),
        Command::Extract(args) => commands::extract(&args),
        Command::Correlate(args) => commands::correlate(&args),
        Command::Evaluate(args) => commands::evaluate(&args),
    }
}
