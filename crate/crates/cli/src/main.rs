//! `heatconv` command-line driver.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use heatconv::datasets::{PopulationParams, SbmParams};
use heatconv::kernel::DEFAULT_CHEBYSHEV_B;

use config::{BackendArgs, BasisArg, IoArgs, TrainArgs};

#[derive(Parser, Debug)]
#[command(
    name = "heatconv",
    version,
    about = "Graph convolution with per-node trainable heat-kernel scales"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a node classifier on a dataset directory
    TrainNode(TrainCommonArgs),
    /// Cross-validate a graph classifier on a population manifest
    TrainGraph(TrainCommonArgs),
    /// Tabulate the max-abs kernel expansion error on [0, 2]
    ApproxError(ApproxArgs),
    /// Compare analytic gradients against central differences
    Gradcheck(GradcheckArgs),
    /// Time polynomial and exact backends per epoch
    Bench(BenchArgs),
    /// Rank the learned scales stored in a checkpoint
    ExportScales(ExportArgs),
    /// Write a synthetic dataset to disk
    #[command(subcommand)]
    Generate(GenerateCommand),
}

#[derive(Args, Debug, Clone)]
pub struct TrainCommonArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Args, Debug, Clone)]
pub struct ApproxArgs {
    /// Expansion family; all three when omitted
    #[arg(long, value_enum)]
    pub basis: Option<BasisArg>,
    /// Orders to sweep, comma separated; 0 keeps only the constant term [default: 20, 30 for hermite]
    #[arg(long, value_delimiter = ',')]
    pub order: Option<Vec<usize>>,
    /// Scales to evaluate, comma separated
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.1,0.5,1,2,5")]
    pub s: Vec<f64>,
    /// Chebyshev spectral domain length
    #[arg(long, default_value_t = DEFAULT_CHEBYSHEV_B)]
    pub b: f64,
    /// Output directory
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct GradcheckArgs {
    /// Backend to check; all four when omitted
    #[arg(long, value_enum)]
    pub basis: Option<BasisArg>,
    /// Polynomial order [default: 20, 30 for hermite]
    #[arg(long)]
    pub order: Option<usize>,
    /// Chebyshev spectral domain length
    #[arg(long, default_value_t = DEFAULT_CHEBYSHEV_B)]
    pub b: f64,
    /// Node dataset for the node task; a generated 30-node SBM when omitted
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Hidden widths of the node model
    #[arg(long, value_delimiter = ',', default_value = "64")]
    pub hidden: Vec<usize>,
    /// Hidden widths of the graph model (12-node generated graph)
    #[arg(long = "graph-hidden", value_delimiter = ',', default_value = "16,16")]
    pub graph_hidden: Vec<usize>,
    /// Readout hidden width of the graph model
    #[arg(long = "readout-hidden", default_value_t = 8)]
    pub readout_hidden: usize,
    /// Finite-difference step
    #[arg(long, default_value_t = 1e-5)]
    pub h: f64,
    /// Largest accepted relative error
    #[arg(long, default_value_t = 1e-4)]
    pub threshold: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct BenchArgs {
    /// Generated SBM sizes, comma separated
    #[arg(long, value_delimiter = ',', default_value = "50,500")]
    pub sizes: Vec<usize>,
    /// Node dataset to time instead of generated graphs
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Backend to time; all four when omitted
    #[arg(long, value_enum)]
    pub basis: Option<BasisArg>,
    /// Polynomial order [default: 20, 30 for hermite]
    #[arg(long)]
    pub order: Option<usize>,
    /// Chebyshev spectral domain length
    #[arg(long, default_value_t = DEFAULT_CHEBYSHEV_B)]
    pub b: f64,
    /// Hidden widths, comma separated
    #[arg(long, value_delimiter = ',', default_value = "64")]
    pub hidden: Vec<usize>,
    /// Timed epochs per backend (at least 10)
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct ExportArgs {
    /// Checkpoint written by train-node
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// One name per line, in node order
    #[arg(long)]
    pub names: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug, Clone)]
pub enum GenerateCommand {
    /// Two-or-more block stochastic block model node dataset
    Sbm(SbmArgs),
    /// Population of graphs with class-dependent density and feature shift
    Population(PopulationArgs),
}

#[derive(Args, Debug, Clone)]
pub struct SbmArgs {
    #[arg(long = "nodes-per-block", default_value_t = SbmParams::default().n_per_block)]
    pub nodes_per_block: usize,
    #[arg(long, default_value_t = SbmParams::default().blocks)]
    pub blocks: usize,
    #[arg(long = "p-in", default_value_t = SbmParams::default().p_in)]
    pub p_in: f64,
    #[arg(long = "p-out", default_value_t = SbmParams::default().p_out)]
    pub p_out: f64,
    #[arg(long = "feat-dim", default_value_t = SbmParams::default().feat_dim)]
    pub feat_dim: usize,
    #[arg(long = "feat-shift", default_value_t = SbmParams::default().feat_shift)]
    pub feat_shift: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dataset directory to create
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct PopulationArgs {
    #[arg(long = "samples-per-class", default_value_t = PopulationParams::default().samples_per_class)]
    pub samples_per_class: usize,
    /// Nodes per graph
    #[arg(long, default_value_t = PopulationParams::default().n_nodes)]
    pub nodes: usize,
    /// Edge probability per class, comma separated
    #[arg(long = "edge-probs", value_delimiter = ',', default_value = "0.1,0.5")]
    pub edge_probs: Vec<f64>,
    /// Feature shift per class, comma separated
    #[arg(long = "feat-shifts", value_delimiter = ',', default_value = "0,1")]
    pub feat_shifts: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for the manifest and per-graph files
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::TrainNode(a) => commands::train_node_cmd(a),
        Command::TrainGraph(a) => commands::train_graph_cmd(a),
        Command::ApproxError(a) => commands::approx_error_cmd(a),
        Command::Gradcheck(a) => commands::gradcheck_cmd(a),
        Command::Bench(a) => commands::bench_cmd(a),
        Command::ExportScales(a) => commands::export_scales_cmd(a),
        Command::Generate(g) => commands::generate_cmd(g),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
