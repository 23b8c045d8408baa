mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};

use config::{CommonArgs, ModelArgs, ProviderArgs};

#[derive(Parser)]
#[command(
    name = "confit",
    version,
    about = "Few-shot text classification with contrastive fine-tuning"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the class distribution of a labeled dataset.
    Stats(StatsArgs),
    /// Split a dataset into train/dev or public/private parts.
    Split(SplitArgs),
    /// Balance classes with generated paraphrases.
    Augment(AugmentArgs),
    /// Train a classifier and write the model artifact.
    Train(TrainArgs),
    /// Predict labels for a dataset with a trained model.
    Predict(PredictArgs),
    /// Score a model or a predictions file on the public/private leaderboard split.
    Eval(EvalArgs),
    /// Grid search over iterations, learning rate and epochs.
    Gridsearch(GridArgs),
    /// Compare training without augmentation, on the full set, and with augmentation.
    Ablate(AblateArgs),
}

#[derive(Args)]
pub struct StatsArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    train: Option<PathBuf>,
    /// Also write the distribution as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SplitArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    train: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Draw an unstratified public/private split instead of train/dev.
    #[arg(long)]
    leaderboard: bool,
    /// Held-out fraction for the train/dev split.
    #[arg(long)]
    dev_fraction: Option<f64>,
    #[arg(long)]
    public_fraction: Option<f64>,
}

#[derive(Args)]
pub struct AugmentArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    #[arg(long)]
    train: Option<PathBuf>,
    /// Augmented dataset (JSON lines).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    #[arg(long)]
    train: Option<PathBuf>,
    /// Model artifact to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Augment the training part before training.
    #[arg(long)]
    augment: bool,
    /// Hold out this fraction of the training data and report dev macro F1.
    #[arg(long)]
    dev_fraction: Option<f64>,
    /// Training report (defaults to `<out>.report.json`).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-epoch contrastive loss as CSV.
    #[arg(long)]
    trajectory: Option<PathBuf>,
}

#[derive(Args)]
pub struct PredictArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    model: PathBuf,
    /// Texts to classify; labels are optional.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Predictions (JSON lines); printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(
        long,
        required_unless_present = "predictions",
        conflicts_with = "predictions"
    )]
    model: Option<PathBuf>,
    /// Predictions file (JSON lines of id and label) to score instead of a model.
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    public_fraction: Option<f64>,
    /// Report JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct GridArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    train: Option<PathBuf>,
    /// Results CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    grid_iterations: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    grid_lr: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    grid_epochs: Option<Vec<usize>>,
    #[arg(long)]
    dev_fraction: Option<f64>,
}

#[derive(Args)]
pub struct AblateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Use this pre-augmented training set instead of augmenting here.
    #[arg(long)]
    augmented: Option<PathBuf>,
    /// Results CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    public_fraction: Option<f64>,
    #[arg(long)]
    dev_fraction: Option<f64>,
}

/// A failed command: message plus process exit status
/// (1 runtime failure, 2 usage or validation error).
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    /// Maps a library error, tagging it with the stage that produced it.
    pub fn stage(stage: &'static str) -> impl Fn(confit::Error) -> Failure {
        move |e| Failure {
            code: if e.is_usage() { 2 } else { 1 },
            message: format!("{stage}: {e}"),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Stats(a) => commands::stats(a),
        Command::Split(a) => commands::split(a),
        Command::Augment(a) => commands::augment(a),
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Eval(a) => commands::eval(a),
        Command::Gridsearch(a) => commands::gridsearch(a),
        Command::Ablate(a) => commands::ablate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
