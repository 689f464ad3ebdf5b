//! The `locorank` command line.

mod commands;
mod config;
mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;
pub use manifest::{sha256_file, sha256_hex, RunManifest};

use crate::dataset::Scenario;
use crate::learners::LearnerKind;
use crate::session::TechniqueId;

/// Exit status for success.
pub const EXIT_OK: i32 = 0;
/// Exit status when inputs fail validation.
pub const EXIT_VALIDATION: i32 = 1;
/// Exit status when a pipeline stage fails.
pub const EXIT_PIPELINE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "locorank", version, about = "Rank VR locomotion techniques from calibration telemetry and questionnaires")]
pub struct Cli {
    /// TOML configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice (default 42).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Upper bound on worker threads. Does not change any output.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check session logs and list every violation.
    Validate(ValidateArgs),
    /// Per-trial interaction metrics as CSV.
    Features(FeaturesArgs),
    /// Build a scenario dataset.
    Dataset(DatasetArgs),
    /// Full pipeline: dataset, selection, grid search, CV, ranking, reports.
    Run(RunArgs),
    /// Technique rankings with fixed hyperparameters.
    Rank(RankArgs),
    /// Generate a synthetic cohort.
    Synth(SynthArgs),
    /// Render a saved evaluation report as text.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Session log files or directories of `.jsonl` files.
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
    /// Print the violations as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub sessions: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also compute headset/non-dominant and left/right pair metrics.
    #[arg(long)]
    pub all_device_pairs: bool,
}

#[derive(Debug, Args, Clone)]
pub struct Inputs {
    /// Session log files or directories of `.jsonl` files.
    #[arg(long, required = true, num_args = 1..)]
    pub sessions: Vec<PathBuf>,
    /// Questionnaire JSONL file.
    #[arg(long)]
    pub questionnaires: PathBuf,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long)]
    pub scenario: Scenario,
    #[arg(long)]
    pub calibration: Option<TechniqueId>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct RunArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long)]
    pub scenario: Scenario,
    /// Calibration technique, or `all` to loop over the six.
    #[arg(long)]
    pub calibration: Option<String>,
    /// `enet` or `forest`.
    #[arg(long, default_value = "forest")]
    pub learner: LearnerKind,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Folds for the grid search CV.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Folds for the ranking CV.
    #[arg(long)]
    pub rank_folds: Option<usize>,
    /// Keep at most this many selected features.
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Skip recursive feature elimination.
    #[arg(long)]
    pub no_selection: bool,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long)]
    pub scenario: Scenario,
    #[arg(long)]
    pub calibration: Option<TechniqueId>,
    #[arg(long, default_value = "forest")]
    pub learner: LearnerKind,
    /// Take hyperparameters from a saved model artifact.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub rank_folds: Option<usize>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub no_selection: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub n_impaired: Option<usize>,
    #[arg(long)]
    pub n_non_impaired: Option<usize>,
    /// Lognormal σ of trial-time noise.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Device samples per second.
    #[arg(long)]
    pub sample_rate: Option<f64>,
    /// Demand matrix (TOML, or JSON by extension).
    #[arg(long)]
    pub demands: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A `report.json` written by `run` or `rank`.
    pub input: PathBuf,
    /// Where to write the text table (default: next to the input).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit status.
pub fn run_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_PIPELINE } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let recorded: Vec<String> = commands::recorded_argv(&argv);
    match commands::dispatch(cli, recorded) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run() -> i32 {
    run_with(std::env::args_os())
}
