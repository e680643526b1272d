//! `subopt`: generate synthetic data, fit full or subsampled models, emit sampling plans,
//! report uncertainty, and run seeded Monte Carlo experiments.
//!
//! Exit codes: 0 ok, 2 usage, 3 I/O, 4 singular Hessian or degenerate plan,
//! 5 non-convergence.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use subopt::Error;

#[derive(Parser, Debug)]
#[command(name = "subopt", version, about = "Subsampled optimization with sandwich uncertainty")]
pub struct Cli {
    /// Worker threads for experiments; results do not depend on it.
    #[arg(long, global = true, env = "SUBOPT_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic dataset (data.csv) and its truth sidecar (truth.txt).
    Generate(GenerateArgs),
    /// Fit the full-data or a subsampled model and print the estimate.
    Fit(FitArgs),
    /// Write a sampling plan as `index,probability` CSV (plan.csv).
    Plan(PlanArgs),
    /// Full-data AMSE next to one subsample's plug-in MSE, coverage check and MSPE.
    Report(ReportArgs),
    /// Run a replicated experiment and write report.csv and slopes.csv.
    Experiment(ExperimentArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Linear,
    Logistic,
}

impl ModelArg {
    pub fn name(self) -> &'static str {
        match self {
            ModelArg::Linear => "linear",
            ModelArg::Logistic => "logistic",
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SamplerArg {
    Unif,
    Lev,
    Grad,
    Hessian,
}

impl SamplerArg {
    pub fn sampler(self) -> subopt::Sampler {
        match self {
            SamplerArg::Unif => subopt::Sampler::Uniform,
            SamplerArg::Lev => subopt::Sampler::Leverage,
            SamplerArg::Grad => subopt::Sampler::Gradient,
            SamplerArg::Hessian => subopt::Sampler::Hessian,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Full,
    Weighted,
    Equal,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub model: ModelArg,
    /// Number of rows N.
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    /// Misspecification degree δ.
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

/// Data source, plan choice and draw size shared by `fit`, `plan` and `report`.
#[derive(Args, Debug, Clone)]
pub struct SubsampleArgs {
    /// Headerless CSV; the last column is the response.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub model: ModelArg,
    #[arg(long, value_enum, default_value = "hessian")]
    pub sampler: SamplerArg,
    /// Floor mix β; defaults to 0.05 (0 for unif).
    #[arg(long)]
    pub floor_beta: Option<f64>,
    /// Pilot size n₀; defaults to min(n, max(500, 20d)), at least d.
    #[arg(long)]
    pub pilot_size: Option<usize>,
    /// Subsample size as a fraction of N; n = round(fraction · N).
    #[arg(long, conflicts_with = "size")]
    pub fraction: Option<f64>,
    /// Subsample size n.
    #[arg(long)]
    pub size: Option<usize>,
    /// Replace an all-zero score vector with the uniform plan instead of failing.
    #[arg(long)]
    pub fallback_uniform: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub sub: SubsampleArgs,
    #[arg(long, value_enum, default_value = "full")]
    pub mode: Mode,
    /// Confidence level q; prints the plug-in MSE trace and the ellipsoid statistic.
    #[arg(long)]
    pub ci: Option<f64>,
    /// Comma-separated candidate θ tested against the ellipsoid.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub candidate: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    #[command(flatten)]
    pub sub: SubsampleArgs,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[command(flatten)]
    pub sub: SubsampleArgs,
    /// Confidence levels for the ellipsoid check against θ̂_N.
    #[arg(long, value_delimiter = ',', default_value = "0.9,0.95")]
    pub ci: Vec<f64>,
    /// Comma-separated covariate row x; adds the MSPE of the prediction xᵀθ.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub predict: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// Built-in configuration: paper-linear, paper-logistic or appendix-e.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// key = value config file (a previous manifest works too).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Replications per cell.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the sampling fractions.
    #[arg(long, value_delimiter = ',')]
    pub fractions: Option<Vec<f64>>,
    /// Override the methods (unif, lev, grad, hessian).
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Override the population size N.
    #[arg(long)]
    pub rows: Option<usize>,
    /// Also write points.csv with per-fraction log-log points.
    #[arg(long)]
    pub points: bool,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// An error with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidInput(_) | Error::Parse { .. } => 2,
            Error::Io(_) | Error::Csv(_) => 3,
            Error::SingularHessian | Error::SingularGram | Error::DegeneratePlan => 4,
            Error::NoConvergence(_) => 5,
        };
        let message = match &e {
            Error::SingularHessian => {
                "the Hessian is singular: the subsample falls outside the invertibility event E_F, \
                 so θ̂_n and its MSE estimate are undefined (try a larger subsample)"
                    .to_string()
            }
            other => other.to_string(),
        };
        Self { code, message }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::io(e.to_string())
    }
}

pub fn run(cli: Cli, argv: &[String]) -> Result<(), Failure> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Failure::usage("--threads must be positive"));
        }
        // A second initialization (replay) keeps the existing pool; results are identical.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match cli.command {
        Command::Generate(a) => commands::generate(&a, argv),
        Command::Fit(a) => commands::fit(&a, argv),
        Command::Plan(a) => commands::plan(&a, argv),
        Command::Report(a) => commands::report(&a, argv),
        Command::Experiment(a) => commands::experiment(&a, argv),
        Command::Replay(a) => commands::replay(&a),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    match run(cli, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
