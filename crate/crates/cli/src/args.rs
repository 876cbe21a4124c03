use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use gazeintent_core::replay::Method;

#[derive(Debug, Parser)]
#[command(name = "gazeintent", version, about = "Gaze intention detection: simulate, classify, evaluate, serve")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a scripted session log and its patches.
    Simulate(SimulateArgs),
    /// Run a classification pipeline over a session log.
    Classify(ClassifyArgs),
    /// Score predictions against the session's ground truth.
    Evaluate(EvaluateArgs),
    /// Sweep a shift between two distance distributions and record every metric.
    CompareMetrics(CompareArgs),
    /// Simulate many seeds and score every method.
    Benchmark(BenchmarkArgs),
    /// Serve the scene and live classification sessions over HTTP/WebSocket.
    Serve(ServeArgs),
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulation config (scene, script, noise); defaults to the benchmark setup.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory, or a `.jsonl` path whose directory receives the patches.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub session: PathBuf,
    /// Pipeline config (classifier, gesture, idt).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// emd | kl | bhatt | fixation
    #[arg(long, value_parser = parse_method, default_value = "emd")]
    pub method: Method,
    /// Directory holding the patches named in the log; defaults to the log's directory.
    #[arg(long)]
    pub patches: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub session: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    /// Method that produced the predictions; inferred when omitted.
    #[arg(long, value_parser = parse_method)]
    pub method: Option<Method>,
    /// Pipeline config used for the distance traces.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub patches: Option<PathBuf>,
    /// Report JSON path; CSV tables are written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Skip the per-object distance traces.
    #[arg(long)]
    pub no_traces: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Scene (or simulation) config providing the base object; defaults to the benchmark scene.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Pipeline config (bins, sampler, eps).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest shift, px.
    #[arg(long, default_value_t = 200.0)]
    pub max_shift: f64,
    /// Shift increment, px.
    #[arg(long, default_value_t = 2.0)]
    pub step: f64,
    /// Sweep CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Simulation config; defaults to the benchmark setup.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Pipeline config.
    #[arg(long)]
    pub pipeline: Option<PathBuf>,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of consecutive seeds.
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    /// Report JSON; per-seed kappa goes to `<stem>.kappa.csv` next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Scene (or simulation) config; defaults to the benchmark scene.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Pipeline config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Write the scene patches here so exported logs can be replayed from this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
