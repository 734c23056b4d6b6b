//! `cratos` command-line front end: gen → cluster → evolve → detect → eval.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for data errors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "cratos", version, about = "Clustering-driven self-adapting anomaly detection for KPI series")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, env = "CRATOS_SEED", default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic labelled dataset.
    Gen(GenArgs),
    /// Fit the cluster tree and assign every series to a leaf.
    Cluster(ClusterArgs),
    /// Evolve a detection pipeline per cluster.
    Evolve(EvolveArgs),
    /// Route one series through the tree and run its cluster's pipeline.
    Detect(DetectArgs),
    /// Score cluster assignments (and optionally detection) against truth.
    Eval(EvalArgs),
    /// Dump the three feature matrices of a dataset as CSV.
    Features(FeaturesArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Output directory; receives one folder per code plus manifest.json.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON generator settings; omitted fields keep their defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub per_cluster: usize,
    #[arg(long, default_value_t = 5760)]
    pub length: usize,
    /// Planted anomalies per series: `N` or `MIN-MAX`.
    #[arg(long)]
    pub anomalies: Option<String>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Dataset manifest.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output directory for tree.json and assignments.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvolveArgs {
    /// Dataset manifest; every series needs anomaly labels.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Cluster tree written by `cluster`.
    #[arg(long)]
    pub model: PathBuf,
    /// A code such as `TFT`, or `all`.
    #[arg(long, default_value = "all")]
    pub cluster: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub population: usize,
    /// Defaults to a fifth of the population.
    #[arg(long)]
    pub survivors: Option<usize>,
    /// Defaults to population minus survivors.
    #[arg(long)]
    pub offspring: Option<usize>,
    #[arg(long, default_value_t = 40)]
    pub generations: usize,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value_t = 5)]
    pub delay_tolerance: usize,
    #[arg(long, default_value_t = 0.1)]
    pub meta_rate: f64,
    /// Mutate selection genes when r < rate instead of r > rate.
    #[arg(long)]
    pub conventional_mutation: bool,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Series CSV.
    #[arg(long)]
    pub series: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Directory holding genome_<CODE>.json files.
    #[arg(long)]
    pub genomes: PathBuf,
    /// Where to write the `index,detector` CSV; printed to stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset manifest with truth codes.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Cluster tree used to predict codes.
    #[arg(long, required_unless_present = "predictions", conflicts_with = "predictions")]
    pub model: Option<PathBuf>,
    /// `name,code` CSV written by `cluster`.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Also score detection with these genomes (needs --model).
    #[arg(long, requires = "model")]
    pub genomes: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub delay_tolerance: usize,
    /// Output directory for report.json and report.txt.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Gen(a) => commands::gen(a, cli.seed),
        Command::Cluster(a) => commands::cluster(a, cli.seed),
        Command::Evolve(a) => commands::evolve(a, cli.seed),
        Command::Detect(a) => commands::detect(a),
        Command::Eval(a) => commands::eval(a),
        Command::Features(a) => commands::features(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cratos: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
