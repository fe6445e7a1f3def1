use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::data::{Bundled, Transform};
use crate::report::Format;

/// Robust linear regression by minimum Rényi pseudodistance: fits,
/// Wald-type tests, influence functions, power and simulation studies.
#[derive(Parser, Debug, Clone, Serialize)]
#[command(name = "rpreg", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GlobalArgs {
    /// Seed for every random stream
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Directory receiving the tables, a JSON summary and the run manifest
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Comma-separated tuning parameters (each command has its own default grid)
    #[arg(long, global = true, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    /// 1-based rows to delete; fit and test then report both subsets
    #[arg(long, global = true, value_delimiter = ',')]
    pub exclude: Vec<usize>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct DataArgs {
    /// Bundled dataset
    #[arg(long, value_enum, conflicts_with = "data", required_unless_present = "data")]
    pub dataset: Option<Bundled>,
    /// CSV file
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Response column, by header name or 1-based position (default: last column)
    #[arg(long, requires = "data")]
    pub response: Option<String>,
    /// Covariate columns (default: all but the response)
    #[arg(long, value_delimiter = ',', requires = "data")]
    pub covariates: Vec<String>,
    #[arg(long, requires = "data")]
    pub no_header: bool,
    #[arg(long, requires = "data")]
    pub no_intercept: bool,
    #[arg(long, value_enum, requires = "data")]
    pub transform: Option<Transform>,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
pub enum Command {
    /// Estimate (σ, β) for every α
    Fit {
        #[command(flatten)]
        data: DataArgs,
        /// Also try random restarts and keep the best objective
        #[arg(long)]
        multistart: bool,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        /// Newton steps allowed per continuation stage
        #[arg(long, default_value_t = 200)]
        max_iterations: usize,
    },
    /// Wald-type tests of linear hypotheses for every α
    Test {
        #[command(flatten)]
        data: DataArgs,
        /// Coordinates fixed under H0, e.g. "b0=1.98,b1=0.73" (repeatable)
        #[arg(long = "hypothesis")]
        hypotheses: Vec<String>,
        /// File with one restriction "c0 c1 … cp = m" per line (repeatable)
        #[arg(long = "hypothesis-file")]
        hypothesis_files: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        level: f64,
    },
    /// Influence functions of the estimator and the Wald statistics
    Influence {
        #[command(flatten)]
        data: DataArgs,
        /// Contaminated observation (1-based) or "all"
        #[arg(long, default_value = "1")]
        direction: String,
        /// Grid "start:stop:count" of standardized residuals r, t = x'β + rσ
        #[arg(long, default_value = "-10:10:201", allow_hyphen_values = true)]
        grid: String,
        /// Evaluate at this θ instead of the fit, e.g. "b0=0,b1=1,sigma=1"
        #[arg(long)]
        theta: Option<String>,
        /// Null hypothesis for the composite second-order IF
        #[arg(long)]
        hypothesis: Option<String>,
    },
    /// Asymptotic relative efficiency against the MLE
    Are,
    /// Asymptotic power and sample-size planning
    Power {
        #[command(subcommand)]
        mode: PowerMode,
    },
    /// Monte Carlo study driven by a key = value config file
    Simulate {
        config: PathBuf,
        /// Worker threads (0 = one per core)
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
}

#[derive(Subcommand, Debug, Clone, Serialize)]
pub enum PowerMode {
    /// Power of the slope test under contiguous alternatives, design with X'X/n = I
    Table {
        /// Values of d_x, the alternative being β1 = β1⁰ + (d_x/n)^{1/2}
        #[arg(long, value_delimiter = ',', default_value = "0,2,5,10,15,20,25,30")]
        d_values: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0.05)]
        level: f64,
    },
    /// Approximate power of the simple test θ = θ⁰ at θ*
    Approx {
        #[command(flatten)]
        data: DataArgs,
        /// θ⁰, every coordinate, e.g. "b0=1,b1=1,sigma=1"
        #[arg(long)]
        null: String,
        /// θ*
        #[arg(long)]
        alternative: String,
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long, default_value_t = 0.05)]
        level: f64,
    },
    /// Smallest n reaching a target power for the simple test
    SampleSize {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        null: String,
        #[arg(long)]
        alternative: String,
        #[arg(long, default_value_t = 0.8)]
        target: f64,
        #[arg(long, default_value_t = 0.05)]
        level: f64,
    },
}
