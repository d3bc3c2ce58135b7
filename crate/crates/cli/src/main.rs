use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Parser)]
#[command(name = "placefm", version, about = "Training-free place embeddings from POI graphs")]
struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true, env = "PLACEFM_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Join a primary POI catalog against a secondary one.
    Fuse(FuseArgs),
    /// Build graph, propagate features and condense into place embeddings.
    Embed(EmbedArgs),
    /// Grid over k-NN size, granularity and clustering algorithm.
    Sweep(SweepArgs),
    /// Generate a synthetic POI catalog.
    Synth(SynthArgs),
    /// Write the k-NN graph as a sorted edge list.
    GraphDump(GraphDumpArgs),
}

#[derive(Args)]
pub struct FuseArgs {
    #[arg(long)]
    pub primary: PathBuf,
    #[arg(long)]
    pub secondary: PathBuf,
    /// Fused output; `.jsonl` selects JSON lines, anything else CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Match statistics (defaults to `<out>.report.json`).
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = placefm_core::fusion::DEFAULT_RADIUS_M)]
    pub radius_m: f64,
    #[arg(long, default_value_t = placefm_core::fusion::DEFAULT_MIN_SIMILARITY)]
    pub min_similarity: f64,
    /// Accept similarity equal to the threshold.
    #[arg(long)]
    pub inclusive: bool,
}

/// Flags override values from `--config`.
#[derive(Args, Default)]
pub struct EmbedArgs {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<String>,
    /// CSV of extra per-node features (`id` column plus numeric columns).
    #[arg(long)]
    pub aux_features: Option<PathBuf>,
    #[arg(long)]
    pub knn_k: Option<usize>,
    #[arg(long)]
    pub hops: Option<usize>,
    /// Comma-separated hop weights α_0..α_K.
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    #[arg(long)]
    pub granularity: Option<String>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub algorithm: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub category_levels: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Also write the propagated node features.
    #[arg(long)]
    pub dump_features: bool,
}

#[derive(Args, Default)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub knn_ks: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub granularities: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub algorithms: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',', conflicts_with = "num_seeds")]
    pub seeds: Option<Vec<u64>>,
    /// Shorthand for seeds 0..N.
    #[arg(long)]
    pub num_seeds: Option<u64>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub hops: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    #[arg(long)]
    pub category_levels: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub states: usize,
    #[arg(long, default_value_t = 4)]
    pub cities_per_state: usize,
    #[arg(long, default_value_t = 3)]
    pub blobs_per_city: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; `.jsonl` selects JSON lines, anything else CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct GraphDumpArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long, default_value_t = placefm_core::pipeline::DEFAULT_KNN_K)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        anyhow::ensure!(n >= 1, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Fuse(a) => commands::fuse(a),
        Command::Embed(a) => commands::embed(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Synth(a) => commands::synth(a),
        Command::GraphDump(a) => commands::graph_dump(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
