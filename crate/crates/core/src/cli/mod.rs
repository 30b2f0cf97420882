//! Command-line front end: one subcommand per pipeline stage, each writing
//! its artifacts with a manifest beside them.

pub mod commands;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use manifest::RunManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "demand-surface", version, about = "Learn log-demand surfaces and read off price elasticities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean a raw scanner panel and engineer features.
    Preprocess(PreprocessArgs),
    /// Generate a constant-elasticity panel with known ground truth.
    Synth(SynthArgs),
    /// Run the warm start and the full phase; write checkpoint and log.
    Train(TrainArgs),
    /// Expanding-fold, multi-seed and block-bootstrap evaluation.
    Evaluate(EvaluateArgs),
    /// Per-instance elasticity records from a checkpoint.
    Elasticity(ElasticityArgs),
    /// Pairwise log-log OLS fits with HC1 intervals.
    Benchmark(BenchmarkArgs),
    /// Stability diagnostics of surface against benchmark records.
    Compare(CompareArgs),
    /// Closure, finite-difference and path checks of a checkpoint.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Raw panel CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Filter thresholds (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator settings (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Cleaned panel CSV from `preprocess`.
    #[arg(long)]
    pub data: PathBuf,
    /// Model, training and loss settings (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = crate::evaluation::folds::DEFAULT_FOLDS)]
    pub folds: usize,
    /// Training seeds per fold.
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
    #[arg(long, default_value_t = crate::evaluation::folds::DEFAULT_BOOTSTRAP_REPS)]
    pub bootstrap_reps: usize,
    #[arg(long, default_value_t = crate::evaluation::folds::DEFAULT_BLOCK_LEN)]
    pub block_len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitChoice {
    Train,
    Val,
    All,
}

#[derive(Debug, Args)]
pub struct ElasticityArgs {
    /// Checkpoint from `train`.
    #[arg(long)]
    pub ckpt: PathBuf,
    /// The cleaned panel the checkpoint was trained on.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitChoice::Val)]
    pub split: SplitChoice,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Surface elasticity records CSV.
    #[arg(long)]
    pub icdn: PathBuf,
    /// Benchmark elasticity records CSV.
    #[arg(long)]
    pub benchmark: PathBuf,
    /// Paired fit metrics JSON from `evaluate`.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Output JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Optional cleaned panel supplying validation contexts.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    pub points: usize,
    #[arg(long, default_value_t = crate::field::DEFAULT_CLOSURE_STEP)]
    pub step: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output JSON; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the subcommand, returning the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let raw: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match commands::dispatch(cli.command, &raw) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}
