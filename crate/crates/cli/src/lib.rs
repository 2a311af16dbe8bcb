//! `mpm`: command-line orchestration of the multipose pipeline.
//!
//! Every stage persists its output so it can be rerun in isolation:
//! `align` writes crops and a transform log, `extract` writes feature
//! files, `adapt` writes PCA models, `score` writes score tables and
//! `metrics` turns score tables into a report. `evaluate` runs adaptation,
//! scoring and metrics for a batch of splits in one go.

pub mod commands;
pub mod config;
pub mod io;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Exit status contract for scripts driving the CLI.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const DATA: i32 = 2;
    pub const INTERNAL: i32 = 3;
}

/// Marks an error as caused by the inputs rather than by the program.
#[derive(Debug)]
pub struct DataError(anyhow::Error);

impl DataError {
    pub fn wrap(e: impl Into<anyhow::Error>) -> anyhow::Error {
        anyhow::Error::new(DataError(e.into()))
    }
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for DataError {}

/// Invalid combination of otherwise well-formed arguments.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Maps an error chain onto the exit-code contract.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return exit::USAGE;
        }
        if cause.is::<DataError>()
            || cause.is::<std::io::Error>()
            || cause.is::<image::ImageError>()
            || cause.is::<toml::de::Error>()
            || cause.is::<multipose::protocol::ProtocolError>()
            || cause.is::<multipose::features::FeatureError>()
            || cause.is::<multipose::adaptation::AdaptationError>()
            || cause.is::<multipose::geometry::GeometryError>()
            || cause.is::<multipose::matching::MatchingError>()
            || cause.is::<multipose::metrics::MetricsError>()
            || cause.is::<multipose::image::ImageError>()
        {
            return exit::DATA;
        }
    }
    exit::INTERNAL
}

#[derive(Debug, Parser)]
#[command(name = "mpm", version, about = "Multi-pose face representation pipeline")]
pub struct Cli {
    /// Worker threads; 0 uses every available core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Roll-correct, align and crop every manifest image.
    Align(AlignArgs),
    /// Compute or import features for each configured pipeline.
    Extract(ExtractArgs),
    /// Fit per-pipeline PCA models on a split's features.
    Adapt(AdaptArgs),
    /// Score one split: identification matrix and verification pairs.
    Score(ScoreArgs),
    /// Turn score tables into a metrics report.
    Metrics(MetricsArgs),
    /// Adapt, score and report over one or more splits.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic corpus.
    MakeSynthetic(SyntheticArgs),
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    /// Restrict to one pipeline id.
    #[arg(long)]
    pub pipeline: Option<String>,
    /// Crop directory; overrides the config when a single pipeline runs.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub pipeline: Option<String>,
    /// Feature file; overrides the config when a single pipeline runs.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AdaptArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    /// Fit on this split's images; all manifest images otherwise.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub pipeline: Option<String>,
    /// Model file; overrides the config when a single pipeline runs.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    /// Output directory for `scores.csv` and `verification.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directories written by `score`, one per split.
    #[arg(long = "scores", required = true, num_args = 1..)]
    pub scores: Vec<PathBuf>,
    /// Report path stem; writes `<out>.csv` and `<out>.txt`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long = "split", required = true, num_args = 1..)]
    pub splits: Vec<PathBuf>,
    /// Restrict fusion to these pipeline ids.
    #[arg(long = "pipeline")]
    pub pipelines: Vec<String>,
    /// Output directory: per-split artifacts plus `report.csv`/`report.txt`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SyntheticKind {
    /// Rendered face images with planted landmarks.
    Faces,
    /// Pose-conditioned embeddings for two pipelines.
    Poses,
}

#[derive(Debug, Args)]
pub struct SyntheticArgs {
    #[arg(long, value_enum, default_value_t = SyntheticKind::Faces)]
    pub kind: SyntheticKind,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub subjects: usize,
    /// Images per subject (faces only).
    #[arg(long, default_value_t = 5)]
    pub images: usize,
}

/// Runs a parsed command on a pool with `cli.jobs` threads.
pub fn run(cli: Cli) -> anyhow::Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(anyhow::Error::new)?;
    pool.install(|| match cli.command {
        Command::Align(a) => commands::align(&a),
        Command::Extract(a) => commands::extract(&a),
        Command::Adapt(a) => commands::adapt(&a),
        Command::Score(a) => commands::score(&a),
        Command::Metrics(a) => commands::metrics(&a),
        Command::Evaluate(a) => commands::evaluate(&a).map(|_| ()),
        Command::MakeSynthetic(a) => commands::make_synthetic(&a),
    })
}
