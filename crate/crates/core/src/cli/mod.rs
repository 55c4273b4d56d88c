//! Command-line interface: `analyze`, `diagnose` and `simulate`.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | I/O failure while writing output |
//! | 2 | invalid input file, column, flag or configuration |
//! | 3 | estimator failure (the message names the method) |
//! | 4 | fewer than `p + 2` labeled rows for `p` covariates |
//! | 5 | a simulation scenario exceeded its failure budget |

mod analyze;
mod config;
mod simulate;

pub use analyze::{load_dataset, AnalyzeConfig, OutputFormat};
pub use simulate::SimulateConfig;

use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_TOO_FEW_LABELED: i32 = 4;
pub const EXIT_FAILURE_BUDGET: i32 = 5;

/// Error carrying the process exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }

    pub fn schema(message: impl Into<String>) -> Self {
        Self::new(EXIT_SCHEMA, message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new(EXIT_IO, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Debug, Parser)]
#[command(name = "pbinfer", version, about = "Prediction-based inference for regression with partially labeled data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit estimators to a CSV file and report estimates, standard errors and CIs.
    Analyze(AnalyzeArgs),
    /// Report residual correlations and whether PPI_a / CC improve on the labeled-only fit.
    Diagnose(AnalyzeArgs),
    /// Run the Monte Carlo study.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct AnalyzeArgs {
    /// Input CSV with a header row; empty outcome cells mark unlabeled rows.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Outcome column name.
    #[arg(long)]
    pub outcome: Option<String>,
    /// Prediction column name.
    #[arg(long)]
    pub prediction: Option<String>,
    /// Comma-separated covariate column names (an intercept is always added).
    #[arg(long)]
    pub covariates: Option<String>,
    /// mean, linear or logistic.
    #[arg(long)]
    pub family: Option<String>,
    /// Comma-separated methods: lab, naive, ppi, ppi_a, cc, ppipp, pspa, sur, pop.
    #[arg(long)]
    pub methods: Option<String>,
    /// Confidence level of the Wald intervals.
    #[arg(long)]
    pub level: Option<f64>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// json or csv.
    #[arg(long)]
    pub format: Option<String>,
    /// Flat JSON file with defaults for any of the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimulateArgs {
    /// Flat JSON file with defaults for any of the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Report file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    pub format: Option<String>,
    /// Full grid: n = 10,000, n_lab in {300, 600, 1000, 2000}, 2,000 replicates.
    #[arg(long)]
    pub full_scale: bool,
    /// Comma-separated families (linear, logistic).
    #[arg(long)]
    pub families: Option<String>,
    /// Comma-separated error types (random, nonrandom, covariate_dependent).
    #[arg(long)]
    pub error_types: Option<String>,
    /// Comma-separated qualities (high, low).
    #[arg(long)]
    pub qualities: Option<String>,
    /// Comma-separated labeled sample sizes.
    #[arg(long)]
    pub n_lab: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated methods.
    #[arg(long)]
    pub methods: Option<String>,
}

/// Parses arguments, runs the command and returns the exit code. Messages go
/// to standard error, results to the output file or standard output.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_SCHEMA } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Analyze(a) => AnalyzeConfig::resolve(&a).and_then(|c| analyze::cmd_analyze(&c)),
        Command::Diagnose(a) => AnalyzeConfig::resolve(&a).and_then(|c| analyze::cmd_diagnose(&c)),
        Command::Simulate(a) => SimulateConfig::resolve(&a).and_then(|c| simulate::cmd_simulate(&c)),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

/// Writes `bytes` to `path`, or to standard output when no path is given.
pub(crate) fn emit(path: Option<&PathBuf>, bytes: &[u8]) -> Result<(), CliError> {
    use std::io::Write;
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::io(format!("cannot write {}: {e}", p.display()))),
        None => std::io::stdout().write_all(bytes).map_err(|e| CliError::io(format!("cannot write output: {e}"))),
    }
}
