mod commands;
mod manifest;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use groupnet::Error;

#[derive(Parser)]
#[command(name = "gdnn", version, about = "Incrementally trained group-convolution DNN with runtime width switching")]
struct Cli {
    /// Where to write the run manifest (default: next to the primary output).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a preprocessed dataset archive from CIFAR-10 batches or synthetic classes.
    PrepareData(PrepareArgs),
    /// Train all groups incrementally.
    Train(TrainArgs),
    /// Accuracy and confidence per width.
    Eval(EvalArgs),
    /// Measure per-width inference latency on this machine.
    Profile(ProfileArgs),
    /// Pick an operating point for a budget.
    Govern(GovernArgs),
    /// Emit plot-ready CSVs and a summary table.
    Report(ReportArgs),
}

#[derive(Args, serde::Serialize)]
pub struct PrepareArgs {
    /// Directory holding data_batch_1..5.bin and test_batch.bin.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    cifar_dir: Option<PathBuf>,
    /// Number of synthetic training images.
    #[arg(long)]
    synthetic: Option<usize>,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Validation images (CIFAR: taken from the end of the training batches).
    /// Default 5000 for CIFAR-10, a fifth of the training count for synthetic data.
    #[arg(long)]
    val: Option<usize>,
    /// Synthetic test images (default: a fifth of the training count).
    #[arg(long)]
    test: Option<usize>,
    /// Keep at most this many CIFAR training images.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, serde::Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Training plan JSON; missing fields take defaults.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Architecture JSON (default: 4 groups of 16 channels).
    #[arg(long)]
    arch: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f32>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    fc_lr_decay: Option<f32>,
    /// Also save every epoch's intermediate model.
    #[arg(long)]
    save_epochs: bool,
}

#[derive(Clone, Copy, ValueEnum, serde::Serialize)]
pub enum SplitArg {
    Train,
    Validation,
    Test,
}

#[derive(Clone, Copy, ValueEnum, serde::Serialize)]
pub enum ConfidenceArg {
    /// Sum the true-class probability over every image.
    All,
    /// Sum only over correctly classified images.
    Correct,
}

#[derive(Args, serde::Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Width as a percentage (25, 50, 75, 100) or `all`.
    #[arg(long, default_value = "all")]
    config: String,
    #[arg(long, value_enum, default_value_t = SplitArg::Validation)]
    split: SplitArg,
    #[arg(long, value_enum, default_value_t = ConfidenceArg::All)]
    confidence: ConfidenceArg,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, serde::Serialize)]
pub struct ProfileArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    /// Test images timed per repetition.
    #[arg(long, default_value_t = 20)]
    samples: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, serde::Serialize)]
pub struct GovernArgs {
    #[arg(long)]
    profile: PathBuf,
    /// time, power or energy.
    #[arg(long, default_value = "time")]
    budget_metric: String,
    #[arg(long)]
    budget: f64,
    /// config, config+dvfs or config+dvfs+map.
    #[arg(long, default_value = "config+dvfs+map")]
    knobs: String,
    /// Core used when task mapping is off (default: first core in the profile).
    #[arg(long)]
    core: Option<String>,
    /// Fill accuracies from this model's validation accuracy.
    #[arg(long, requires = "data")]
    model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    data: Option<PathBuf>,
}

#[derive(Args, serde::Serialize)]
pub struct ReportArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    profile: PathBuf,
    /// Core used for the rows without task mapping (default: first core in the profile).
    #[arg(long)]
    core: Option<String>,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Raised for bad flag combinations and missing inputs.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

const EXIT_OTHER: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_INGEST: u8 = 3;
const EXIT_STATE: u8 = 4;
const EXIT_INFEASIBLE: u8 = 5;

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return EXIT_USAGE;
    }
    let Some(e) = err.chain().find_map(|c| c.downcast_ref::<Error>()) else {
        return EXIT_OTHER;
    };
    match e {
        Error::Infeasible { .. } => EXIT_INFEASIBLE,
        Error::State(_) | Error::Config(_) | Error::Dimension { .. } => EXIT_STATE,
        Error::Ingest { .. }
        | Error::Input(_)
        | Error::BadMagic { .. }
        | Error::Version { .. }
        | Error::Truncated { .. }
        | Error::RecordDims { .. }
        | Error::Malformed { .. }
        | Error::DuplicatePoint { .. }
        | Error::NonPositive { .. }
        | Error::InconsistentAccuracy { .. }
        | Error::ProfileParse { .. } => EXIT_INGEST,
        Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => EXIT_USAGE,
        _ => EXIT_OTHER,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let manifest = cli.manifest.as_deref();
    let result = match &cli.command {
        Command::PrepareData(a) => commands::prepare_data(a, manifest),
        Command::Train(a) => commands::train(a, manifest),
        Command::Eval(a) => commands::eval(a, manifest),
        Command::Profile(a) => commands::profile(a, manifest),
        Command::Govern(a) => commands::govern(a, manifest),
        Command::Report(a) => report::report(a, manifest),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
