//! Command-line interface definition.

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "fnmcop",
    about = "Finite-normal-mixture copulas: fitting, simulation, KL comparison tables",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Fit a copula model to two data columns by rank-based maximum likelihood.
    Fit(FitArgs),
    /// Fit the whole comparison suite plus mixture copulas and rank by AIC.
    Compare(CompareArgs),
    /// Draw samples from a mixture copula; optionally run a replication study.
    Simulate(SimulateArgs),
    /// KL-distance tables: best mixture approximation of a parametric family.
    Kl(KlArgs),
    /// Density grid of a copula with standard normal margins.
    Contour(ContourArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NFormula {
    /// Phi^-1(0.95) * (sigma/KL)^2
    Printed,
    /// (Phi^-1(0.95) * sigma/KL)^2
    Clt,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LinkArg {
    Probit,
    Logit,
}

#[derive(Args)]
pub struct DataArgs {
    /// Input CSV file.
    #[arg(long)]
    pub data: String,
    /// Two columns, by name or 1-based index (comma separated).
    #[arg(long)]
    pub cols: String,
    /// Treat the first row as data, not a header.
    #[arg(long)]
    pub no_header: bool,
}

#[derive(Args)]
pub struct OutArgs {
    /// Write output here instead of stdout.
    #[arg(long)]
    pub out: Option<String>,
    /// Output format.
    #[arg(long, value_enum, default_value = "csv")]
    pub format: OutputFormat,
}

#[derive(Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Number of mixture components (fits a K-FNM copula).
    #[arg(long = "K", visible_alias = "k")]
    pub k: Option<usize>,
    /// Parametric family to fit instead of a mixture.
    #[arg(long)]
    pub family: Option<String>,
    /// Fit the survival (reflected) version of the family.
    #[arg(long)]
    pub survival: bool,
    /// Random restarts for the optimizer.
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Mixture sizes to include (comma separated).
    #[arg(long = "K", default_value = "2,3")]
    pub k: String,
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Mixture parameters as JSON ({"K":2,"pi":[..],"theta":[..],"rho":[..]})
    /// or @path to a JSON file.
    #[arg(long)]
    pub params: String,
    /// Sample size per draw.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Replications; when set, each replication is fitted and the
    /// bias/SD/RMSE summary is reported instead of the sample.
    #[arg(long = "B")]
    pub b: Option<usize>,
    /// Emit raw-scale data with exponential margins, e.g. "exp:0.5,1".
    #[arg(long)]
    pub margins: Option<String>,
    /// Restarts per replication fit.
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
pub struct KlArgs {
    /// Target family.
    #[arg(long)]
    pub family: String,
    /// Use the survival (reflected) target.
    #[arg(long)]
    pub survival: bool,
    /// Kendall's tau values: comma list ("0.1,0.5") or range ("0.1:0.9:0.1").
    #[arg(long)]
    pub taus: Option<String>,
    /// BB1 tail-dependence pairs, semicolon separated ("0.4,0.6;0.3,0.7").
    #[arg(long)]
    pub lambdas: Option<String>,
    /// Degrees of freedom for the t family.
    #[arg(long)]
    pub nu: Option<f64>,
    /// Mixture size.
    #[arg(long = "K", default_value_t = 2)]
    pub k: usize,
    /// Gauss-Legendre points per axis.
    #[arg(long, default_value_t = 15)]
    pub nq: usize,
    /// Starts for each minimization.
    #[arg(long, default_value_t = 10)]
    pub starts: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Compare discretized models (ordinal regressions on a covariate grid).
    #[arg(long)]
    pub discrete: bool,
    /// Ordinal categories for --discrete.
    #[arg(long, default_value_t = 2)]
    pub categories: usize,
    /// Covariate grid size for --discrete.
    #[arg(long = "grid-x", default_value_t = 5)]
    pub grid_x: usize,
    #[arg(long, default_value_t = 1.0)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.7)]
    pub beta2: f64,
    /// Ordinal link for --discrete.
    #[arg(long, value_enum, default_value = "logit")]
    pub link: LinkArg,
    /// Sample-size convention for the n column.
    #[arg(long = "n-formula", value_enum, default_value = "printed")]
    pub n_formula: NFormula,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
pub struct ContourArgs {
    /// Mixture parameters (JSON or @path); exclusive with --family.
    #[arg(long)]
    pub params: Option<String>,
    /// Parametric family for the grid.
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub survival: bool,
    /// Grid resolution per axis over [-3, 3].
    #[arg(long, default_value_t = 100)]
    pub grid: usize,
    /// Optional data whose normal scores are written to --scores-out.
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long)]
    pub cols: Option<String>,
    #[arg(long)]
    pub no_header: bool,
    /// Where to write the normal scores of --data.
    #[arg(long = "scores-out")]
    pub scores_out: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub out: OutArgs,
}
