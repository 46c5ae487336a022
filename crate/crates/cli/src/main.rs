mod commands;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use commands::{
    CalibrateArgs, EvaluateArgs, GenerateArgs, PruneArgs, SegmentArgs, TrainArgs, VerifyArgs,
};

/// Skill boundary detection pipeline.
#[derive(Parser, Debug)]
#[command(name = "sbd", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Common {
    /// JSON file with a section per subcommand; flags take precedence.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Run seed from which every random stream is derived.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a labeled synthetic corpus.
    Generate(GenerateArgs),
    /// Train a count predictor on a corpus.
    Train(TrainArgs),
    /// Segment a corpus with the detector or a baseline.
    Segment(SegmentArgs),
    /// Merge and split segments to enforce length limits.
    Prune(PruneArgs),
    /// Score boundaries against labels and summarize segment lengths.
    Evaluate(EvaluateArgs),
    /// Check the relative-probability bounds on a synthetic corpus.
    VerifyBounds(VerifyArgs),
    /// Pick a gap from a quantile of the loss excess distribution.
    Calibrate(CalibrateArgs),
}

/// Contents of a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    #[serde(flatten)]
    common: Common,
    generate: Option<serde_json::Value>,
    train: Option<serde_json::Value>,
    segment: Option<serde_json::Value>,
    prune: Option<serde_json::Value>,
    evaluate: Option<serde_json::Value>,
    verify_bounds: Option<serde_json::Value>,
    calibrate: Option<serde_json::Value>,
}

/// Marks a verification run whose bounds did not hold.
#[derive(Debug)]
pub struct VerificationFailed;

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("bound verification failed")
    }
}

impl std::error::Error for VerificationFailed {}

/// A configuration problem detected by the CLI itself.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(UsageError(msg.into()).into())
}

/// Fills every unset field of `flags` from the matching config section.
fn merge_section<T>(flags: T, section: Option<serde_json::Value>) -> anyhow::Result<T>
where
    T: Serialize + DeserializeOwned,
{
    let Some(section) = section else {
        return Ok(flags);
    };
    let mut merged = match section {
        serde_json::Value::Object(map) => map,
        _ => return usage("config sections must be JSON objects"),
    };
    if let serde_json::Value::Object(set) = serde_json::to_value(&flags)? {
        for (k, v) in set {
            if !v.is_null() && v != serde_json::Value::Bool(false) {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(serde_json::Value::Object(merged))
        .map_err(|e| UsageError(format!("invalid config section: {e}")).into())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<VerificationFailed>() {
            return 4;
        }
        if cause.is::<std::io::Error>() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<sbd_core::Error>() {
            return match e {
                sbd_core::Error::Io(_) => 3,
                _ => 2,
            };
        }
    }
    2
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file: ConfigFile = match &cli.common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str(&text)
                .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?
        }
        None => ConfigFile::default(),
    };
    let common = Common {
        config: cli.common.config.clone(),
        seed: cli.common.seed.or(file.common.seed),
        workers: cli.common.workers.or(file.common.workers),
        out: cli.common.out.clone().or(file.common.out.clone()),
    };
    if let Some(n) = common.workers {
        if n == 0 {
            return usage("--workers must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker pool")?;
    }

    match cli.command {
        Command::Generate(a) => commands::generate(&common, merge_section(a, file.generate)?),
        Command::Train(a) => commands::train(&common, merge_section(a, file.train)?),
        Command::Segment(a) => commands::segment(&common, merge_section(a, file.segment)?),
        Command::Prune(a) => commands::prune(&common, merge_section(a, file.prune)?),
        Command::Evaluate(a) => commands::evaluate(&common, merge_section(a, file.evaluate)?),
        Command::VerifyBounds(a) => {
            commands::verify_bounds(&common, merge_section(a, file.verify_bounds)?)
        }
        Command::Calibrate(a) => commands::calibrate(&common, merge_section(a, file.calibrate)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
