mod commands;
mod output;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use annoteval::Error;

/// Evaluate binary sample-level annotations from multiple raters, test AI
/// annotators for human-expert equivalence and reproduce the simulation studies.
#[derive(Debug, Parser)]
#[command(name = "annoteval", version, propagate_version = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic annotations from a configuration file.
    Simulate(SimulateArgs),
    /// Compute sample- and event-level metrics against a reference.
    Evaluate(EvaluateArgs),
    /// Compute inter-rater agreement coefficients.
    Agreement(AgreementArgs),
    /// Run human-expert equivalence tests for one AI annotator.
    Equivalence(EquivalenceArgs),
    /// Run one of the simulation studies.
    Experiment(ExperimentArgs),
    /// Repeat a previous run from its manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutFormat {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, env = "ANNOTEVAL_OUT_DIR", default_value = "annoteval-out")]
    pub out: PathBuf,
    /// Output formats, comma separated.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub format: Vec<OutFormat>,
}

impl OutArgs {
    pub fn formats(&self, default: &[OutFormat]) -> Vec<OutFormat> {
        if self.format.is_empty() {
            default.to_vec()
        } else {
            self.format.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InputFormat {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Annotation file (CSV or JSON).
    #[arg(long)]
    pub annotations: PathBuf,
    /// Input format; inferred from the file extension when omitted.
    #[arg(long, value_enum)]
    pub input_format: Option<InputFormat>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Override every seed of the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Reference: a rater id, `consensus-majority` or `consensus-unanimous`.
    #[arg(long)]
    pub reference: String,
    /// Raters to evaluate; defaults to every rater except the reference.
    /// With a consensus reference, the consensus is built from the raters
    /// not listed here.
    #[arg(long, value_delimiter = ',')]
    pub predicted: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub metrics: Vec<String>,
    /// Window length of the seizure-burden series, in seconds.
    #[arg(long, default_value_t = annoteval::metrics::DEFAULT_BURDEN_WINDOW_S)]
    pub window_s: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct AgreementArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_delimiter = ',')]
    pub coefficient: Vec<String>,
    /// Restrict to these raters.
    #[arg(long, value_delimiter = ',')]
    pub raters: Vec<String>,
    /// Restrict to these records.
    #[arg(long, value_delimiter = ',')]
    pub records: Vec<String>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum UnitArg {
    Auto,
    Record,
    Block,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RuleArg {
    NonInferior,
    Outperform,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TieArg {
    Negative,
    Positive,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub confidence: Option<f64>,
    #[arg(long, value_enum)]
    pub resample_unit: Option<UnitArg>,
    #[arg(long)]
    pub block_length: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replacement criterion of the all, majority and any Turing variants.
    #[arg(long, value_enum)]
    pub turing_rule: Option<RuleArg>,
    /// Label given to exact ties of the human majority consensus.
    #[arg(long, value_enum)]
    pub consensus_tie: Option<TieArg>,
}

#[derive(Debug, Args)]
pub struct EquivalenceArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Rater id of the AI annotations.
    #[arg(long)]
    pub ai: String,
    /// Human raters to compare against; defaults to every other rater.
    #[arg(long, value_delimiter = ',')]
    pub humans: Vec<String>,
    /// Test ids, comma separated, or `all`.
    #[arg(long, value_delimiter = ',', default_value = "turing_average_kappa")]
    pub tests: Vec<String>,
    /// Configuration file providing `[bootstrap]` and `[tests]` defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub bootstrap: BootstrapArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Study {
    Fig3,
    Consensus,
    IraCollapse,
    ExpertSweep,
    Outlier,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GridArg {
    Standard,
    Reduced,
    Smoke,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(value_enum)]
    pub study: Study,
    /// Configuration file; the built-in defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset groups for the expert sweep (D1..D4).
    #[arg(long, value_delimiter = ',')]
    pub group: Vec<String>,
    #[arg(long, value_enum)]
    pub grid: Option<GridArg>,
    /// Shorthand for `--grid reduced`.
    #[arg(long, conflicts_with_all = ["grid", "full"])]
    pub reduced: bool,
    /// Every expert count and 1000 bootstrap iterations.
    #[arg(long, conflicts_with = "grid")]
    pub full: bool,
    /// Negative:positive ratio of the imbalanced groups.
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    pub manifest: PathBuf,
    /// Output directory of the repeated run.
    #[arg(long, env = "ANNOTEVAL_OUT_DIR", default_value = "annoteval-rerun")]
    pub out: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Usage(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Core(Error::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => core_exit_code(e),
        }
    }
}

pub fn core_exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation { .. } => 2,
        Error::Io { .. }
        | Error::Parse { .. }
        | Error::Schema(_)
        | Error::Unsupported(_)
        | Error::UnknownRater(_)
        | Error::UnknownRecord(_)
        | Error::InsufficientRaters { .. } => 3,
        Error::Degenerate(_) | Error::Calibration { .. } | Error::UnstableStatistic { .. } | Error::IncompleteSweep(_) => 4,
        Error::Infeasible(_) => 5,
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match commands::run(cli, args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
