//! The `mtom` command line.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 I/O or invalid
//! data, 4 numeric failure (non-finite loss, failed gradient or parameter
//! check), 5 incompatible inputs such as a model/corpus mode mismatch.

pub mod config;
pub mod files;
pub mod run;

mod analyze;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mtomnet::Error;

#[derive(Debug, Parser)]
#[command(
    name = "mtom",
    version,
    about = "Train and analyse multimodal Theory-of-Mind networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus with manifest and train/val/test splits.
    Generate(GenerateArgs),
    /// Train on a corpus's train split, selecting on its val split.
    Train(TrainArgs),
    /// Score a checkpoint on a split.
    Eval(EvalArgs),
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
}

/// Config sources shared by every command that takes a run config.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Flat `key = value` file; `#` starts a comment.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Split name under the corpus (`train`, `val`, `test`) or a split file.
    #[arg(long)]
    pub split: String,
    /// Defaults to the checkpoint's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Parameter breakdown and comparison with the published totals.
    CountParams(CountParamsArgs),
    /// Finite-difference check of every op, layer and model path.
    Gradcheck(GradcheckArgs),
    /// Two-component PCA of the MindNets' LSTM states.
    Pca(PcaArgs),
    /// Accuracy on false-belief clips and the label count table.
    FalseBelief(FalseBeliefArgs),
    /// Paired t-test on one column of two CSV files.
    Ttest(TtestArgs),
}

#[derive(Debug, Args)]
pub struct CountParamsArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Every published configuration plus the attention variants.
    #[arg(long)]
    pub all: bool,
    /// CSV file for the totals.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = mtomnet::verify::GRADCHECK_POINTS)]
    pub points: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// CSV file for the per-case results.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PcaArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["checkpoint", "predictions", "constant"])))]
pub struct FalseBeliefArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Split name, split file, or `all` for the whole manifest.
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// A predictions file written by `eval`.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Predict one dynamics class everywhere, by name or index.
    #[arg(long)]
    pub constant: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TtestArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Numeric column compared.
    #[arg(long)]
    pub column: String,
    /// Comma-separated key columns that pair rows across the files.
    #[arg(long)]
    pub pair_by: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Why a command stopped.
#[derive(Debug)]
pub enum Failure {
    Core(Error),
    /// The output directory holds a live run marker.
    Busy(PathBuf),
    /// A check ran to completion and found a violation.
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Busy(p) => write!(
                f,
                "{} holds a running job (remove {} if it is stale)",
                p.display(),
                run::MARKER
            ),
            Failure::Check(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Core(e) => match e {
                Error::Config { .. } | Error::InvalidArgument(_) => 2,
                Error::Io { .. } | Error::Corrupt { .. } | Error::Validation { .. } | Error::Empty(_) => 3,
                Error::NonFinite { .. } => 4,
                Error::Incompatible(_) | Error::Shape { .. } => 5,
                Error::BackwardTwice | Error::NonScalarLoss(_) => 1,
            },
            Failure::Busy(_) => 3,
            Failure::Check(_) => 4,
        }
    }
}

pub type Outcome = std::result::Result<(), Failure>;

pub fn execute(cli: Cli) -> Outcome {
    match cli.command {
        Command::Generate(a) => run::generate(&a),
        Command::Train(a) => run::train(&a),
        Command::Eval(a) => run::eval(&a),
        Command::Analyze(AnalyzeCommand::CountParams(a)) => analyze::count_params(&a),
        Command::Analyze(AnalyzeCommand::Gradcheck(a)) => analyze::gradcheck(&a),
        Command::Analyze(AnalyzeCommand::Pca(a)) => analyze::pca(&a),
        Command::Analyze(AnalyzeCommand::FalseBelief(a)) => analyze::false_belief(&a),
        Command::Analyze(AnalyzeCommand::Ttest(a)) => analyze::ttest(&a),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}
