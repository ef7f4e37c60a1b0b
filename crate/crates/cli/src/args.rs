use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "trendgp", version, about = "Trend direction and instability of noisy time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit a model and write a report directory.
    Fit(FitArgs),
    /// Trend Direction Index at query times, as CSV on stdout.
    Tdi(TdiArgs),
    /// Expected Trend Instability on intervals, as CSV on stdout.
    Eti(EtiArgs),
    /// Run a simulation study and write the aggregate table.
    Simulate(SimulateArgs),
    /// Download the Italian national COVID-19 series as a `t,y` CSV.
    FetchCovid(FetchArgs),
    /// Print the JSON schema of report.json.
    Schema,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Ml,
    Bayes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CvKind {
    Loo,
    Osa,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Input CSV with a `t,y` header; `t` may be an ISO date.
    #[arg(long, short)]
    pub input: PathBuf,
    /// `mean:kernel` (e.g. `constant:rq`, `linear:se`) or `auto`.
    #[arg(long, default_value = "constant:se")]
    pub model: String,
    #[arg(long, value_enum, default_value_t = Estimator::Ml)]
    pub estimator: Estimator,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// identity, log, logit or arcsine_sqrt.
    #[arg(long, default_value = "identity")]
    pub transform: String,
    /// Optimizer restarts for maximum likelihood.
    #[arg(long, default_value_t = 16)]
    pub restarts: usize,
    /// Skip estimation and use these values, e.g. `beta0=0,alpha=1,rho=0.3,sigma=0.1`.
    #[arg(long)]
    pub fixed: Option<String>,
    /// Cross-validation scheme for `--model auto`.
    #[arg(long, value_enum, default_value_t = CvKind::Loo)]
    pub cv: CvKind,
    /// Smallest training set for one-step-ahead validation.
    #[arg(long, default_value_t = 5)]
    pub min_train: usize,
    /// Optimizer restarts per candidate and fold during `--model auto`.
    #[arg(long, default_value_t = 4)]
    pub cv_restarts: usize,
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    /// MCMC iterations per chain, warmup included.
    #[arg(long, default_value_t = 25_000)]
    pub iters: usize,
    /// Warmup iterations per chain (default: half of `--iters`).
    #[arg(long)]
    pub warmup: Option<usize>,
    /// JSON file overriding some or all default priors.
    #[arg(long)]
    pub priors: Option<PathBuf>,
    /// Posterior draws used for index summaries.
    #[arg(long, default_value_t = 1000)]
    pub max_draws: usize,
    /// Allow query times outside the observed span.
    #[arg(long)]
    pub forecast: bool,
}

#[derive(Args, Debug, Clone)]
pub struct FitArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Output directory.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Number of grid points for every curve.
    #[arg(long, default_value_t = 500)]
    pub grid: usize,
    /// Grid range `a:b` (default: the observed span).
    #[arg(long, allow_hyphen_values = true)]
    pub grid_range: Option<String>,
    /// ETI interval `a:b`; may be repeated.
    #[arg(long, allow_hyphen_values = true)]
    pub interval: Vec<String>,
    /// Reference time for TDI offsets (default: last observation).
    #[arg(long, allow_hyphen_values = true)]
    pub anchor: Option<String>,
    /// Window `a:b` in which to locate the first TDI crossing of `--threshold`.
    #[arg(long, allow_hyphen_values = true)]
    pub crosspoint: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Args, Debug, Clone)]
pub struct TdiArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Query times, comma separated.
    #[arg(long, required = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub at: Vec<String>,
    /// Offset added to every query time.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub delta: f64,
}

#[derive(Args, Debug, Clone)]
pub struct EtiArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Interval `a:b`; may be repeated.
    #[arg(long, required = true, allow_hyphen_values = true)]
    pub interval: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DesignArg {
    Equidistant,
    Uniform,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "50")]
    pub n: Vec<usize>,
    /// Noise standard deviations, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.1", allow_negative_numbers = true)]
    pub sigma: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = DesignArg::Equidistant)]
    pub design: DesignArg,
    #[arg(long, default_value_t = 4)]
    pub restarts: usize,
    /// Evaluation grid points on [0, 1].
    #[arg(long, default_value_t = 201)]
    pub grid: usize,
    /// Output CSV (default: stdout).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

pub const DEFAULT_COVID_URL: &str =
    "https://raw.githubusercontent.com/pcm-dpc/COVID-19/master/dati-andamento-nazionale/dpc-covid19-ita-andamento-nazionale.csv";

#[derive(Args, Debug, Clone)]
pub struct FetchArgs {
    /// Normalized `t,y` CSV to write.
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long, env = "TRENDGP_COVID_URL", default_value = DEFAULT_COVID_URL)]
    pub url: String,
    /// Read this local file instead of downloading.
    #[arg(long)]
    pub offline: Option<PathBuf>,
    /// Keep only the first this many days.
    #[arg(long)]
    pub days: Option<usize>,
}
