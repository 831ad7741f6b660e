use std::path::PathBuf;

use assign_core::ObjectiveKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "assign", version, about = "Bregman ADMM solver for large constrained assignment problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "snake_case")]
pub enum Command {
    /// Generate a synthetic problem directory.
    Gen(GenArgs),
    /// Run ADMM on a problem directory.
    Solve(SolveArgs),
    /// Round a continuous solution to a binary assignment.
    Round(RoundArgs),
    /// Report objective and constraint metrics for a solution.
    Eval(EvalArgs),
    /// Solve the continuous relaxation with the reference interior-point method.
    Oracle(OracleArgs),
    /// Timing runs.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveArg {
    Quad,
    Log,
}

impl From<ObjectiveArg> for ObjectiveKind {
    fn from(a: ObjectiveArg) -> Self {
        match a {
            ObjectiveArg::Quad => ObjectiveKind::Quadratic,
            ObjectiveArg::Log => ObjectiveKind::Logarithmic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[arg(long)]
    pub items: usize,
    #[arg(long)]
    pub owners: usize,
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_enum)]
    pub objective: ObjectiveArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Second half of the items gets coefficients ten times larger.
    #[arg(long)]
    pub uneven: bool,
    /// Number of item shards written; also the default partition count for `solve`.
    #[arg(long, default_value_t = 16)]
    pub partitions: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    #[arg(long)]
    pub problem: PathBuf,
    /// Run exactly this many iterations with no early stop.
    #[arg(long, conflicts_with_all = ["max_iters", "ineq_tol", "eq_tol", "dual_tol"])]
    pub iters: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub ineq_tol: Option<f64>,
    #[arg(long)]
    pub eq_tol: Option<f64>,
    #[arg(long)]
    pub dual_tol: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Defaults to the shard count recorded in the problem manifest.
    #[arg(long)]
    pub partitions: Option<usize>,
    /// Probability that a worker dies when handed a partition.
    #[arg(long, default_value_t = 0.0)]
    pub inject_failure: f64,
    /// Seed for failure injection; defaults to the problem seed.
    #[arg(long)]
    pub failure_seed: Option<u64>,
    /// Heartbeat period in milliseconds.
    #[arg(long, default_value_t = 20)]
    pub tick_ms: u64,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub trace_every: Option<usize>,
    /// Where to write X; defaults to `<problem>/solution.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write checkpoints every K iterations (0 disables).
    #[arg(long, default_value_t = 25)]
    pub checkpoint_every: usize,
    /// Defaults to `<problem>/checkpoints`.
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
    #[arg(long)]
    pub resume_from: Option<u64>,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    pub precision: Precision,
}

#[derive(Debug, Args, Serialize)]
pub struct RoundArgs {
    #[arg(long)]
    pub problem: PathBuf,
    #[arg(long)]
    pub solution: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Draw R samples and keep the one with the lowest constraint MAPD.
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["solution", "assignment"])))]
pub struct EvalArgs {
    #[arg(long)]
    pub problem: PathBuf,
    /// Continuous solution CSV written by `solve` or `oracle`.
    #[arg(long)]
    pub solution: Option<PathBuf>,
    /// Binary assignment CSV written by `round`.
    #[arg(long)]
    pub assignment: Option<PathBuf>,
    /// Reference objective (oracle optimum or continuous lower bound).
    #[arg(long, conflicts_with = "oracle")]
    pub reference: Option<f64>,
    /// Compute the reference with the built-in oracle.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct OracleArgs {
    #[arg(long)]
    pub problem: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "bench", rename_all = "snake_case")]
pub enum BenchCommand {
    /// Time the per-item simplex subproblem.
    Subsolver {
        #[arg(long, default_value_t = 10)]
        j: usize,
        #[arg(long, default_value_t = 1_000_000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-iteration wall time over item counts and worker counts.
    Iteration {
        #[arg(long, value_delimiter = ',', default_value = "10000,100000")]
        items: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        workers: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        owners: usize,
        #[arg(long, default_value_t = 3)]
        m: usize,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, value_enum, default_value_t = ObjectiveArg::Quad)]
        objective: ObjectiveArg,
        #[arg(long, default_value_t = 10)]
        iters: usize,
        /// Partitions per run; defaults to 16.
        #[arg(long, default_value_t = 16)]
        partitions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}
