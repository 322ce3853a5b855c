//! Command-line flags.
//!
//! Tunables are optional so that `--preset` values and built-in defaults can
//! fill whatever the command line and config file leave unset.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sapstop::streams::DepotMatrix;
use sapstop::subexp::SketchMethod;

#[derive(Debug, Parser)]
#[command(
    name = "sapstop",
    version,
    about = "Streaming sketch-and-project solves with tracked residuals and a controlled stopping rule"
)]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tracked solve of one system; writes the iteration trace.
    Solve(SolveArgs),
    /// Two-stage conditional coverage of the uncertainty interval.
    Coverage(CoverageArgs),
    /// Percentile curves of |ρ̃ − ρ|/ρ over a suite of tracked runs.
    Consistency(ConsistencyArgs),
    /// Late/early stopping-error rates over a suite of tracked runs.
    Stopping(StoppingArgs),
    /// Random-coordinate RBF collocation on the unit cube.
    Collocation(CollocationArgs),
    /// Empirical tails of sketched squared norms against their bound.
    SeCheck(SeCheckArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve(_) => "solve",
            Command::Coverage(_) => "coverage",
            Command::Consistency(_) => "consistency",
            Command::Stopping(_) => "stopping",
            Command::Collocation(_) => "collocation",
            Command::SeCheck(_) => "se-check",
        }
    }

    pub fn common(&self) -> &CommonArgs {
        match self {
            Command::Solve(a) => &a.common,
            Command::Coverage(a) => &a.common,
            Command::Consistency(a) => &a.common,
            Command::Stopping(a) => &a.common,
            Command::Collocation(a) => &a.common,
            Command::SeCheck(a) => &a.common,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// p = 25, λ = 15, 300 iterations, (υ, δ_I, δ_II, ξ_I, ξ_II) = (100, 0.9, 1.1, 0.01, 0.01), tabulated η.
    #[value(alias = "paper")]
    Reference,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for outputs.
    #[arg(long, env = "SAPSTOP_OUT_DIR", default_value = ".")]
    pub out_dir: PathBuf,
    /// CSV output file name (inside the output directory).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// JSON summary file name (inside the output directory).
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Worker threads for replicate-level parallelism. Results do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// `key = value` file; explicit flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct StopArgs {
    #[arg(long)]
    pub upsilon: Option<f64>,
    #[arg(long)]
    pub delta_i: Option<f64>,
    #[arg(long)]
    pub delta_ii: Option<f64>,
    #[arg(long)]
    pub xi_i: Option<f64>,
    #[arg(long)]
    pub xi_ii: Option<f64>,
    /// Contraction η ≥ 1; `table` picks the tabulated value of the sketch.
    #[arg(long)]
    pub eta: Option<EtaArg>,
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaArg {
    Value(f64),
    Table,
}

impl std::str::FromStr for EtaArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("table") {
            return Ok(EtaArg::Table);
        }
        s.parse::<f64>()
            .map(EtaArg::Value)
            .map_err(|_| format!("`{s}` is neither a number nor `table`"))
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub stop: StopArgs,
    /// Test-matrix generator (ignored with --matrix).
    #[arg(long = "gen")]
    pub generator: Option<DepotMatrix>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Coefficient matrix file (text, or binary when the name ends in .bin).
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// Right-hand side file; defaults to A·x* with x* from --solution or Uniform(0,1).
    #[arg(long)]
    pub rhs: Option<PathBuf>,
    /// Known solution, enabling error columns.
    #[arg(long)]
    pub solution: Option<PathBuf>,
    /// Inverse of the SPD inner-product matrix B.
    #[arg(long)]
    pub b_inv: Option<PathBuf>,
    #[arg(long)]
    pub method: Option<SketchMethod>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub lambda1: Option<usize>,
    #[arg(long)]
    pub lambda2: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Also write the final iterate to this file name (inside the output directory).
    #[arg(long)]
    pub save_x: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CoverageArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Generators, comma separated.
    #[arg(long = "gen", value_delimiter = ',')]
    pub generators: Vec<DepotMatrix>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub method: Option<SketchMethod>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub lambda: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Contraction values evaluated on the same replicates; `table` is allowed.
    #[arg(long, value_delimiter = ',')]
    pub eta: Vec<EtaArg>,
}

#[derive(Debug, Clone, Args)]
pub struct SuiteArgs {
    /// Generators, comma separated (default: all four).
    #[arg(long = "gen", value_delimiter = ',')]
    pub generators: Vec<DepotMatrix>,
    /// Sketch methods, comma separated (default: the three JL sketches).
    #[arg(long, value_delimiter = ',')]
    pub method: Vec<SketchMethod>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    /// Independent runs per system.
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub lambda: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ConsistencyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub suite: SuiteArgs,
    /// Iterations excluded from the boundedness ratio.
    #[arg(long)]
    pub skip: Option<usize>,
    /// Largest accepted max/median ratio of the median curve.
    #[arg(long)]
    pub band: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct StoppingArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub suite: SuiteArgs,
    #[command(flatten)]
    pub stop: StopArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CollocationArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub stop: StopArgs,
    /// Grid spacing; 1/eps must be an integer.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub lambda1: Option<usize>,
    #[arg(long)]
    pub lambda2: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Fresh observations per iteration for the conditional mean.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Iterations used to estimate σ empirically.
    #[arg(long)]
    pub sigma_window: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SeCheckArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub method: Option<SketchMethod>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Tail levels, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub delta: Vec<f64>,
}
