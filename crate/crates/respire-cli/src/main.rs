//! `respire` — command-line pipeline for respiratory-sound classification.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 artifact mismatch.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use respire::corpus::{CorpusError, Split};
use respire::evaluation::EvalError;
use respire::learners::{LearnError, LearnerKind};
use respire::mfcc::MfccError;
use respire::selection::SelectionError;

use config::{Overrides, RunConfig};

/// Errors classified by exit code.
#[derive(Debug)]
pub enum AppError {
    Usage(String),
    Data(String),
    Mismatch(String),
}

impl AppError {
    fn code(&self) -> u8 {
        match self {
            AppError::Usage(_) => 1,
            AppError::Data(_) => 2,
            AppError::Mismatch(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            AppError::Usage(m) | AppError::Data(m) | AppError::Mismatch(m) => m,
        }
    }
}

impl From<CorpusError> for AppError {
    fn from(e: CorpusError) -> Self {
        match &e {
            CorpusError::SchemaMismatch { .. } => AppError::Mismatch(e.to_string()),
            _ => AppError::Data(e.to_string()),
        }
    }
}

impl From<MfccError> for AppError {
    fn from(e: MfccError) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<LearnError> for AppError {
    fn from(e: LearnError) -> Self {
        match &e {
            LearnError::SchemaVersionMismatch { .. } => AppError::Mismatch(e.to_string()),
            _ => AppError::Data(e.to_string()),
        }
    }
}

impl From<SelectionError> for AppError {
    fn from(e: SelectionError) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<respire::features::FeatureError> for AppError {
    fn from(e: respire::features::FeatureError) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<EvalError> for AppError {
    fn from(e: EvalError) -> Self {
        match &e {
            EvalError::DigestMismatch { .. } => AppError::Mismatch(e.to_string()),
            EvalError::Learn(LearnError::SchemaVersionMismatch { .. }) => {
                AppError::Mismatch(e.to_string())
            }
            EvalError::Corpus(CorpusError::SchemaMismatch { .. }) => {
                AppError::Mismatch(e.to_string())
            }
            _ => AppError::Data(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "respire",
    version,
    about = "Respiratory-sound classification: MFCC features, forward selection, four classifiers"
)]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed for all stochastic stages.
    #[arg(long, global = true, env = "RESPIRE_SEED")]
    seed: Option<u64>,

    /// Bound on worker parallelism (extraction, candidate evaluation).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode the corpus and write one feature table per Mel coefficient
    /// count.
    Extract(ExtractArgs),
    /// Train one classifier on the training split and write its model file.
    Train(TrainArgs),
    /// Run sequential forward selection and write the trace.
    Select(SelectArgs),
    /// Score a model on one split and write the report.
    Evaluate(EvaluateArgs),
    /// Classify a single WAV file with a saved model.
    Predict(PredictArgs),
    /// Accuracy of all four learners across a Mel coefficient range.
    SweepMel(SweepMelArgs),
    /// Reshape saved selection traces into a plot-ready accuracy sweep.
    SweepSfs(SweepSfsArgs),
}

#[derive(Args)]
struct ExtractArgs {
    /// Dataset manifest CSV (header `path,label,split`).
    #[arg(long)]
    manifest: Option<PathBuf>,

    /// Mel coefficient count, single (`23`) or inclusive range (`2..4`).
    #[arg(long, default_value = "23")]
    mel: String,

    /// Exit 0 even when some clips fail to decode (they are still listed in
    /// extract_errors.txt).
    #[arg(long)]
    allow_skips: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Feature table produced by `extract`.
    #[arg(long)]
    features: PathBuf,

    /// svm, tree, bagging, or adaboost_m1.
    #[arg(long, value_parser = commands::parse_learner)]
    learner: LearnerKind,

    /// Selection trace restricting the feature set.
    #[arg(long)]
    trace: Option<PathBuf>,

    /// How many selected features to keep (defaults to the trace's best k).
    #[arg(long)]
    k: Option<usize>,

    /// Model file path (defaults to `<out>/model_<learner>.json`).
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    features: PathBuf,

    #[arg(long, value_parser = commands::parse_learner)]
    learner: LearnerKind,

    /// Feature budget of the forward search.
    #[arg(long, default_value_t = 80)]
    max: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    features: PathBuf,

    #[arg(long)]
    model: PathBuf,

    /// train, validation, or test.
    #[arg(long, default_value = "validation", value_parser = commands::parse_split)]
    split: Split,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,

    /// WAV file to classify.
    wav: PathBuf,
}

#[derive(Args)]
struct SweepMelArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,

    #[arg(long, default_value_t = 2)]
    mel_lo: usize,

    #[arg(long, default_value_t = 39)]
    mel_hi: usize,
}

#[derive(Args)]
struct SweepSfsArgs {
    /// Trace files (defaults to every `sfs_<learner>.json` in the output
    /// directory).
    #[arg(long)]
    traces: Vec<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are not errors.
            let benign = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if benign {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    let cfg: RunConfig = config::resolve(&Overrides {
        config_path: cli.config.clone(),
        seed: cli.seed,
        jobs: cli.jobs,
        output_dir: cli.out.clone(),
    })
    .map_err(AppError::Usage)?;

    if let Some(jobs) = cfg.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| AppError::Usage(format!("--jobs: {e}")))?;
    }

    match &cli.command {
        Command::Extract(args) => {
            let mels = config::parse_mel_range(&args.mel).map_err(AppError::Usage)?;
            commands::extract(&cfg, &args.manifest, &mels, args.allow_skips)
        }
        Command::Train(args) => commands::train(
            &cfg,
            &args.features,
            args.learner,
            &args.trace,
            args.k,
            &args.model_out,
        ),
        Command::Select(args) => commands::select(&cfg, &args.features, args.learner, args.max),
        Command::Evaluate(args) => {
            commands::evaluate(&cfg, &args.features, &args.model, args.split)
        }
        Command::Predict(args) => commands::predict(&args.model, &args.wav),
        Command::SweepMel(args) => {
            commands::run_sweep_mel(&cfg, &args.manifest, args.mel_lo, args.mel_hi)
        }
        Command::SweepSfs(args) => commands::run_sweep_sfs(&cfg, &args.traces),
    }
}
