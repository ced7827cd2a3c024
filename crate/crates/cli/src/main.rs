//! `sparsemix` command-line interface.

mod bench;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{E0Arg, PriorKind};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] sparsemix::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Core(e) => e.kind(),
            CliError::Io(_) => "io",
        }
    }

    fn hint(&self) -> Option<&'static str> {
        match self.kind() {
            "no_retained_iterations" => Some(
                "the archive holds no iterations with the modal number of non-empty components; \
                 rerun `fit` with more iterations or a longer burn-in",
            ),
            "no_identified_draws" => Some(
                "every candidate iteration was dropped as a non-permutation; \
                 try `identify --distance mahalanobis` or a longer chain",
            ),
            "allocations_not_stored" => Some("rerun `fit` without --no-allocations"),
            "degenerate_cluster" => Some("try another --seed for `identify`"),
            _ => None,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Serialize)]
struct ErrorDocument<'a> {
    error: ErrorBody<'a>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    hint: Option<&'a str>,
}

/// Sparse finite Gaussian mixtures fitted by Gibbs sampling.
#[derive(Debug, Parser)]
#[command(name = "sparsemix", version, about)]
struct Cli {
    /// Root directory for outputs when --out is not given.
    #[arg(long, global = true, env = "SPARSEMIX_OUT", default_value = "sparsemix-out")]
    out_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write simulated datasets with their true labels.
    Simulate(SimulateArgs),
    /// Run the Gibbs sampler and store the chain.
    Fit(FitArgs),
    /// Resolve label switching in a stored chain.
    Identify(IdentifyArgs),
    /// Score identified draws against a known classification.
    Evaluate(EvaluateArgs),
    /// Reproduce one of the simulation or case-study tables.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulation design: `equal` or `unequal`.
    #[arg(long)]
    pub design: String,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset: `builtin:iris`, `builtin:crabs`, `csv:PATH` or `sim:DESIGN:SEED`.
    #[arg(long)]
    pub data: Option<String>,
    /// Column holding true labels in a CSV file (name or 1-based index).
    #[arg(long)]
    pub label_column: Option<String>,
    /// The CSV file has no header row.
    #[arg(long)]
    pub no_header: bool,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    pub prior: Option<PriorKind>,
    /// `fixed:<value>` or `gamma:<a>` for e0 ~ G(a, aK).
    #[arg(long)]
    pub e0: Option<E0Arg>,
    #[arg(long)]
    pub mh_step: Option<f64>,
    #[arg(long)]
    pub nu1: Option<f64>,
    #[arg(long)]
    pub nu2: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also store component covariance matrices.
    #[arg(long)]
    pub store_sigma: bool,
    /// Do not store per-iteration allocations.
    #[arg(long)]
    pub no_allocations: bool,
    /// TOML file with `data`, `prior`, `chain` and `output` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    /// Archive directory written by `fit`.
    #[arg(long)]
    pub archive: PathBuf,
    #[arg(long, value_enum, default_value_t = DistanceArg::Mahalanobis)]
    pub distance: DistanceArg,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum DistanceArg {
    Mahalanobis,
    Euclidean,
}

impl From<DistanceArg> for sparsemix::cluster::Distance {
    fn from(d: DistanceArg) -> Self {
        match d {
            DistanceArg::Mahalanobis => sparsemix::cluster::Distance::Mahalanobis,
            DistanceArg::Euclidean => sparsemix::cluster::Distance::Euclidean,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory written by `identify`.
    #[arg(long)]
    pub identified: PathBuf,
    /// Labelled dataset the draws were fitted to; omit for a partial report.
    #[arg(long)]
    pub truth: Option<String>,
    #[arg(long)]
    pub label_column: Option<String>,
    #[arg(long)]
    pub no_header: bool,
    /// Seed for the reference-parameter chain on real data.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Table to reproduce: 1 and 2 are the simulation designs, 3 Crabs, 4 Iris.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub table: u8,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 2000)]
    pub burnin: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Progress line on stderr, prefixed with seconds since the Unix epoch.
pub fn log(msg: &str) {
    let t = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
    eprintln!("[{t:.3}] {msg}");
}

fn run(cli: Cli) -> Result<(), CliError> {
    let root = cli.out_root;
    match cli.command {
        Command::Simulate(a) => commands::simulate(a, &root),
        Command::Fit(a) => commands::fit(a, &root),
        Command::Identify(a) => commands::identify(a, &root),
        Command::Evaluate(a) => commands::evaluate(a, &root),
        Command::Bench(a) => bench::run(a, &root),
    }
}

fn report(err: &CliError) -> ExitCode {
    let doc = ErrorDocument { error: ErrorBody { kind: err.kind(), message: err.to_string(), hint: err.hint() } };
    eprintln!("{}", serde_json::to_string(&doc).expect("error document serializes"));
    ExitCode::from(err.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report(&CliError::Usage(e.render().to_string().trim_end().to_string())),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
