//! `scramble-forge` command-line front end.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Domain(#[from] scramble_forge::Error),
    #[error("i/o: {0}")]
    Io(String),
    #[error("{0}")]
    Failed(String),
}

#[derive(Parser)]
#[command(name = "scramble-forge", version, about = "Scrambled-family builds and audits for symbolic systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a DC1-scrambled family, verify it, write manifest and reports.
    BuildScramble(BuildArgs),
    /// Pairwise DC1 report for two point plans.
    Dc1(Dc1Args),
    /// Recurrence class, omega estimates and case signature of points.
    Classify(ClassifyArgs),
    /// Exact range of invariant integrals of a local observable.
    Lphi(LphiArgs),
    /// Beta expansions, Parry checks and digit surgery.
    #[command(subcommand)]
    Beta(BetaCommand),
    /// Emit the target catalog K_1..K_9.
    Catalog(CatalogArgs),
}

#[derive(Args, Serialize, Clone)]
pub struct Common {
    /// Truncation depth of the metric.
    #[arg(long, default_value_t = 24, value_parser = clap::value_parser!(u64).range(1..=48))]
    pub metric_depth: u64,
    /// Output directory; reports go to stdout when absent.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..=256))]
    #[serde(skip)]
    pub jobs: u64,
}

#[derive(Args, Serialize, Clone)]
pub struct Dc1Tolerances {
    #[arg(long, default_value_t = 0.1)]
    pub tol_high: f64,
    #[arg(long, default_value_t = 0.1)]
    pub tol_low: f64,
    /// Separation scale checked for the lower condition.
    #[arg(long, default_value_t = 0.4)]
    pub t0: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.25,0.1")]
    pub t_grid: Vec<f64>,
}

#[derive(Args, Serialize, Clone)]
pub struct BuildArgs {
    #[arg(long)]
    #[serde(skip)]
    pub model: PathBuf,
    /// Number of stages k_max (2^k_max points).
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..=6))]
    pub depth: u64,
    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,
    /// First separation rate as a fraction, or `auto` for the first of
    /// 1/2, 1/4, 1/8, 1/16 whose family builds and verifies.
    #[arg(long, default_value = "auto")]
    pub delta1: String,
    /// Periodic word of the base measure mu.
    #[arg(long, default_value = "01")]
    pub mu: String,
    /// Periodic word of the second chain vertex.
    #[arg(long, default_value = "001")]
    pub nu: String,
    /// Shift that produces the distal pair from the mu word.
    #[arg(long, default_value_t = 1)]
    pub pair_shift: usize,
    /// Word length covered by the transitive seed.
    #[arg(long, default_value_t = 6)]
    pub seed_depth: usize,
    /// Base cylinder shared by every point.
    #[arg(long, default_value = "0")]
    pub base: String,
    #[arg(long)]
    pub horizon_cap: Option<u64>,
    /// Keep the completed stages when the horizon cap is hit.
    #[arg(long)]
    pub partial: bool,
    #[command(flatten)]
    pub tol: Dc1Tolerances,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Serialize, Clone)]
pub struct Dc1Args {
    #[arg(long)]
    #[serde(skip)]
    pub x: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub y: PathBuf,
    /// Checkpoints form a log grid up to this horizon.
    #[arg(long, default_value_t = 100_000)]
    pub horizon: u64,
    #[command(flatten)]
    pub tol: Dc1Tolerances,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Serialize, Clone)]
pub struct ClassifyArgs {
    #[arg(long)]
    #[serde(skip)]
    pub model: PathBuf,
    /// Point plan (repeatable).
    #[arg(long, required = true)]
    #[serde(skip)]
    pub point: Vec<PathBuf>,
    #[arg(long, default_value_t = 65_536)]
    pub horizon: u64,
    /// Return radius; defaults to 1/horizon.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub tau: f64,
    #[arg(long)]
    pub min_window: Option<u64>,
    /// Cylinder length of the omega estimates.
    #[arg(long, default_value_t = 4)]
    pub omega_depth: usize,
    /// Word length of the transitivity score.
    #[arg(long, default_value_t = 6)]
    pub transitivity_len: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Serialize, Clone)]
pub struct LphiArgs {
    #[arg(long)]
    #[serde(skip)]
    pub model: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub observable: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Subcommand)]
enum BetaCommand {
    /// Greedy digits of x.
    Expand(BetaExpandArgs),
    /// Parry admissibility of a digit word.
    Check(BetaWordArgs),
    /// Decrement digit j and append an admissible tail.
    Surgery(BetaSurgeryArgs),
}

#[derive(Args, Serialize, Clone)]
pub struct BetaBase {
    #[arg(long)]
    pub beta: f64,
    /// Cached digits of the expansion of 1.
    #[arg(long, default_value_t = 64)]
    pub precision: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Serialize, Clone)]
pub struct BetaExpandArgs {
    #[arg(long)]
    pub x: f64,
    #[arg(long, default_value_t = 32)]
    pub digits: usize,
    #[command(flatten)]
    pub base: BetaBase,
}

#[derive(Args, Serialize, Clone)]
pub struct BetaWordArgs {
    #[arg(long)]
    pub word: String,
    #[command(flatten)]
    pub base: BetaBase,
}

#[derive(Args, Serialize, Clone)]
pub struct BetaSurgeryArgs {
    #[arg(long)]
    pub word: String,
    /// 1-based position to decrement.
    #[arg(long)]
    pub at: usize,
    #[arg(long)]
    pub tail: String,
    #[command(flatten)]
    pub base: BetaBase,
}

#[derive(Args, Serialize, Clone)]
pub struct CatalogArgs {
    #[arg(long)]
    #[serde(skip)]
    pub model: PathBuf,
    /// Measure file (at least three, the first is mu_1).
    #[arg(long, required = true)]
    #[serde(skip)]
    pub measure: Vec<PathBuf>,
    /// Measure of full support.
    #[arg(long)]
    #[serde(skip)]
    pub full: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub i_max: usize,
    /// Cylinder length used for the expected case labels.
    #[arg(long, default_value_t = 4)]
    pub omega_depth: usize,
    #[command(flatten)]
    pub common: Common,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::BuildScramble(a) => commands::build_scramble(&a),
        Command::Dc1(a) => commands::dc1(&a),
        Command::Classify(a) => commands::classify(&a),
        Command::Lphi(a) => commands::lphi(&a),
        Command::Beta(BetaCommand::Expand(a)) => commands::beta_expand(&a),
        Command::Beta(BetaCommand::Check(a)) => commands::beta_check(&a),
        Command::Beta(BetaCommand::Surgery(a)) => commands::beta_surgery(&a),
        Command::Catalog(a) => commands::catalog(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
