//! `lidqr`: fit LID Bayesian quantile regression and its comparators on CSV
//! data, run the simulation studies, and check out-of-bag coverage.
//!
//! Every command writes a `manifest.json` next to its outputs;
//! `lidqr replay <manifest> --out DIR` re-runs it and reproduces the outputs
//! byte for byte.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lidqr::experiments::{FitSettings, Method};
use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Data(_) | Self::Io(_) => 3,
            Self::Numerical(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Usage(m) | Self::Data(m) | Self::Numerical(m) | Self::Io(m) => m,
        }
    }
}

impl From<lidqr::Error> for CliError {
    fn from(e: lidqr::Error) -> Self {
        match e {
            lidqr::Error::Domain(m) => Self::Usage(m),
            lidqr::Error::Contract(m) => Self::Data(m),
            lidqr::Error::Numerical(m) => Self::Numerical(m),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "lidqr", version, about = "Bayesian quantile regression with linearly interpolated density likelihoods")]
struct Cli {
    /// Worker threads for replicate-level parallelism.
    #[arg(long, global = true, env = "LID_BQR_THREADS", default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit one estimator to a CSV file; writes draws.csv, summary.csv, manifest.json.
    Fit(FitCmd),
    /// Run an n×MSE simulation study; writes mse.csv and manifest.json.
    Simulate(SimulateCmd),
    /// Out-of-bag coverage on a CSV file; writes coverage.csv and manifest.json.
    Evaluate(EvaluateCmd),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayCmd),
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: lidqr::Error| e.to_string())
}

fn parse_level(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} must lie strictly between 0 and 1"))
    }
}

fn parse_positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(format!("'{s}' must be a positive integer")),
    }
}

fn parse_positive_real(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("'{s}' must be a positive number")),
    }
}

/// Grid, chain and prior settings shared by the commands.
#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ModelArgs {
    /// Starting number of equally spaced levels k/(m+1).
    #[arg(long = "m", value_parser = parse_positive)]
    pub m: Option<usize>,
    /// Grid halvings applied to the starting levels.
    #[arg(long, default_value_t = 0)]
    pub refinements: u32,
    /// Chain length for lid/ald (lid default 2000·m·p, ald 5000).
    #[arg(long, value_parser = parse_positive)]
    pub iters: Option<usize>,
    /// Discarded initial steps (default: half of iters).
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long, value_parser = parse_positive)]
    pub thin: Option<usize>,
    /// Normal prior sd for every coefficient.
    #[arg(long, default_value_t = 10.0, value_parser = parse_positive_real)]
    pub prior_sd: f64,
    #[arg(long, value_parser = parse_positive_real)]
    pub proposal_sd: Option<f64>,
    /// Half-normal tail sd of the LID density.
    #[arg(long, value_parser = parse_positive_real)]
    pub tail_sd: Option<f64>,
    /// Level half-width for EWRQ weights.
    #[arg(long, default_value_t = lidqr::baselines::DEFAULT_DELTA_TAU, value_parser = parse_level)]
    pub delta_tau: f64,
}

impl ModelArgs {
    pub fn settings(&self, default_m: usize) -> FitSettings {
        FitSettings {
            m0: self.m.unwrap_or(default_m),
            refinements: self.refinements,
            prior_sd: self.prior_sd,
            iters: self.iters,
            burnin: self.burnin,
            thin: self.thin,
            proposal_sd: self.proposal_sd,
            tail_sd: self.tail_sd,
            delta_tau: self.delta_tau,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct FitCmd {
    /// Headered CSV; every column but the response is a covariate.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "y")]
    pub response: String,
    /// lid, rq, ewrq or ald.
    #[arg(long, default_value = "lid", value_parser = parse_method)]
    pub method: Method,
    /// Levels to summarize (must lie on the grid for lid).
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75", value_parser = parse_level)]
    pub taus: Vec<f64>,
    /// Extra summaries such as "x@0.75-x@0.5"; repeatable.
    #[arg(long)]
    pub contrast: Vec<String>,
    /// Pair-bootstrap replicates for rq/ewrq.
    #[arg(long, value_parser = parse_positive)]
    pub bootstrap: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SimulateCmd {
    /// 1 or 2.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..=2))]
    pub example: u32,
    #[arg(long, default_value_t = 100, value_parser = parse_positive)]
    pub n: usize,
    #[arg(long, default_value_t = 20, value_parser = parse_positive)]
    pub reps: usize,
    /// Comma list from rq, ewrq, lid, ald, oracle.
    #[arg(long, value_delimiter = ',', default_value = "rq,ewrq,lid", value_parser = parse_method)]
    pub methods: Vec<Method>,
    /// Targets such as "b@0.5" or "b@0.75-b@0.5" (default: the example's table).
    #[arg(long, value_delimiter = ',')]
    pub targets: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    parse_level(s).map_err(|e| format!("test fraction {e}"))
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct EvaluateCmd {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "y")]
    pub response: String,
    #[arg(long, value_delimiter = ',', default_value = "rq,lid", value_parser = parse_method)]
    pub methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.25,0.5,0.75,0.9", value_parser = parse_level)]
    pub taus: Vec<f64>,
    /// Share of rows held out.
    #[arg(long, default_value_t = 0.1, value_parser = parse_fraction)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
struct ReplayCmd {
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Fit(c) => commands::fit(&c),
        Command::Simulate(c) => commands::simulate(&c),
        Command::Evaluate(c) => commands::evaluate(&c),
        Command::Replay(c) => commands::replay(&c.manifest, &c.out),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lidqr: {}", e.message().replace('\n', " "));
            ExitCode::from(e.code())
        }
    }
}
