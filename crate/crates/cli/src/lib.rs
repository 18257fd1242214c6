//! The `dcheck` command line: run checklists, compute PVIs, filter
//! datasets and re-render reports. Exit codes: 0 when every test passes,
//! 1 when any test fails, 2 on errors.

mod commands;
mod output;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{cmd_filter, cmd_pvi, cmd_report, cmd_run};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "dcheck", version, about = "Unit tests for datasets, in bits of usable information")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Run a checklist and write a report directory.
    Run(RunArgs),
    /// Per-instance PVIs for one expression.
    Pvi(PviArgs),
    /// Filter a dataset by PVI or response length.
    Filter(FilterArgs),
    /// Re-render the summary of an existing output directory.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemaArg {
    Plain,
    Preference,
}

impl From<SchemaArg> for dcheck_core::dataset::Schema {
    fn from(s: SchemaArg) -> Self {
        match s {
            SchemaArg::Plain => dcheck_core::dataset::Schema::Plain,
            SchemaArg::Preference => dcheck_core::dataset::Schema::Preference,
        }
    }
}

/// Flags shared by the estimating commands.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// JSONL dataset.
    #[arg(long)]
    pub data: PathBuf,
    /// Explicit eval split; the whole of --data is then used for training.
    #[arg(long)]
    pub eval: Option<PathBuf>,
    /// Override the configured family (tabular, ngram, bow_linear, external).
    #[arg(long)]
    pub family: Option<String>,
    /// Launch an external adapter with this shell command.
    #[arg(long)]
    pub adapter_cmd: Option<String>,
    /// Predictor cache directory.
    #[arg(long, env = "DCHECK_CACHE")]
    pub cache: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Override both the split seed and the training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Force the dataset schema instead of detecting it.
    #[arg(long, value_enum)]
    pub schema: Option<SchemaArg>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Checklist file (YAML or JSON).
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Treat errored tests as a run error (exit 2) even if others pass.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub strict: bool,
}

#[derive(Debug, Clone, Args)]
pub struct PviArgs {
    /// Checklist file; optional, defaults apply without one.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    /// Use the expression of this configured test.
    #[arg(long, conflicts_with = "expression")]
    pub test: Option<String>,
    /// Raw expression kind (standard, feature, complement,
    /// conditional_on_feature, conditional_on_complement).
    #[arg(long)]
    pub expression: Option<String>,
    /// Histogram bins.
    #[arg(long)]
    pub bins: Option<usize>,
    /// Also write the K lowest-PVI instances to suspects.csv for review.
    #[arg(long, value_name = "K")]
    pub flag: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct FilterArgs {
    /// JSONL dataset to filter.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for filtered.jsonl and removal_manifest.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Filter spec file (YAML or JSON); replaces the flags below.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// pvi_threshold, pvi_percentile or length_ratio.
    #[arg(long)]
    pub kind: Option<String>,
    /// remove_below or remove_above.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub percentile: Option<f64>,
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Test whose PVIs drive the filter.
    #[arg(long)]
    pub source_test: Option<String>,
    /// PVI CSV, or a run output directory together with --source-test.
    #[arg(long)]
    pub pvi: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub schema: Option<SchemaArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Output directory of an earlier `run`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    pub format: ReportFormat,
}

/// Where a command gave up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Data,
    Family,
    Estimation,
    Filter,
    Output,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Data => "data",
            Stage::Family => "family",
            Stage::Estimation => "estimation",
            Stage::Filter => "filter",
            Stage::Output => "output",
            Stage::Report => "report",
        })
    }
}

#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub error: anyhow::Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage failed: {:#}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {}

pub(crate) trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, StageError>;
}

impl<T, E: Into<anyhow::Error>> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, StageError> {
        self.map_err(|e| StageError { stage, error: e.into() })
    }
}

pub fn execute(cli: Cli) -> Result<i32, StageError> {
    match cli.command {
        Cmd::Run(args) => cmd_run(&args),
        Cmd::Pvi(args) => cmd_pvi(&args),
        Cmd::Filter(args) => cmd_filter(&args),
        Cmd::Report(args) => cmd_report(&args),
    }
}

/// Parse arguments, run, print diagnostics, and return the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_PASS };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("dcheck: {e}");
            EXIT_ERROR
        }
    }
}
