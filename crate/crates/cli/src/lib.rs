//! The `roadq` command line: file-based pipeline stages plus `pipeline`,
//! which chains them.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for data errors.

pub mod config;
pub mod stages;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use roadq::dataset::SplitKind;
use roadq::survey::Task;

pub use config::{ClassifierKind, PipelineConfig, TrainSettings};

pub type Result<T> = anyhow::Result<T>;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

/// A bad flag or flag combination, as opposed to bad input data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub(crate) fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub(crate) fn data_err(msg: impl Into<String>) -> anyhow::Error {
    anyhow::anyhow!(msg.into())
}

#[derive(Debug, Parser)]
#[command(
    name = "roadq",
    version,
    about = "Road roughness classification from imagery and IRI surveys"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON pipeline config; flags override its fields
    #[arg(long, global = true, value_name = "JSON")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads inside stages (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Leave wall-clock timestamps out of artifacts
    #[arg(long, global = true)]
    pub reproducible: bool,
    #[arg(long, global = true, value_name = "64|224")]
    pub tile_px: Option<usize>,
    #[arg(long, global = true)]
    pub resize_to_224: bool,
    #[arg(long, global = true, value_name = "binary|five_class")]
    pub task: Option<Task>,
    #[arg(long, global = true)]
    pub max_gap_days: Option<u32>,
    #[arg(long, global = true)]
    pub run_length_m: Option<f64>,
    #[arg(long, global = true)]
    pub train_fraction: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub classifier: Option<ClassifierKind>,
    #[arg(long, global = true)]
    pub head_layers: Option<usize>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub learning_rate: Option<f64>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene (roads, survey, raster)
    Synth(SynthArgs),
    /// Validate and normalize external roads, survey and imagery
    Ingest(IngestArgs),
    /// Cut labeled tiles along every road
    Tile(TileArgs),
    /// Write train/test plans over runs
    Split(SplitArgs),
    /// Train the native CNN on a plan's Train tiles
    Train(TrainArgs),
    /// Train a dense head on frozen embeddings
    TrainHead(TrainHeadArgs),
    /// Predict classes for a plan's Test tiles
    Predict(PredictArgs),
    /// Score predictions against a plan
    Evaluate(EvaluateArgs),
    /// Render evaluation reports; several held-out reports are aggregated
    Report(ReportArgs),
    /// Run every stage end to end
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct SceneSource {
    /// Synthetic scenario preset: separable, kenya-like, null
    #[arg(long, conflicts_with_all = ["scenario", "scene"])]
    pub preset: Option<String>,
    /// Scenario spec JSON
    #[arg(long, conflicts_with = "scene")]
    pub scenario: Option<PathBuf>,
    /// Directory holding roads.json, survey.csv and raster.rqr
    #[arg(long)]
    pub scene: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, conflicts_with = "scenario")]
    pub preset: Option<String>,
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Road centerlines (JSON)
    #[arg(long)]
    pub roads: Option<PathBuf>,
    /// IRI survey, CSV or JSON
    #[arg(long)]
    pub survey: Option<PathBuf>,
    /// Survey format; guessed from the extension when absent
    #[arg(long, value_name = "csv|json")]
    pub survey_format: Option<String>,
    /// Raster container written by `synth` or `ingest`
    #[arg(long, conflicts_with_all = ["png", "world"])]
    pub raster: Option<PathBuf>,
    /// PNG image, georeferenced by --world
    #[arg(long, requires_all = ["world", "capture_date"])]
    pub png: Option<PathBuf>,
    #[arg(long)]
    pub world: Option<PathBuf>,
    /// Imagery capture date, YYYY-MM-DD
    #[arg(long)]
    pub capture_date: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TileArgs {
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub roads: Option<PathBuf>,
    #[arg(long)]
    pub survey: Option<PathBuf>,
    #[arg(long)]
    pub raster: Option<PathBuf>,
    /// Dataset path (`x.bin` or `x.json`; both files are written)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long, value_parser = parse_split_kind)]
    pub kind: SplitKind,
    #[arg(long)]
    pub tiles: PathBuf,
    /// Directory for the plan files
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub tiles: PathBuf,
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainHeadArgs {
    #[arg(long)]
    pub tiles: PathBuf,
    #[arg(long)]
    pub plan: PathBuf,
    /// Embeddings CSV (`tile_id,e0,...`); computed from a frozen trunk when absent
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub tiles: PathBuf,
    /// Predict this plan's Test tiles; every tile when absent
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub tiles: PathBuf,
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Evaluation report JSON files
    #[arg(long = "input", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value = "json", value_name = "json|csv|scatter_csv")]
    pub format: String,
    /// Chance level in the scatter `baseline` column
    #[arg(long, default_value = "uniform", value_name = "uniform|majority|prior")]
    pub baseline: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub source: SceneSource,
    /// Which splits to run
    #[arg(long, default_value = "both", value_name = "standard|heldout|both")]
    pub splits: String,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_split_kind(s: &str) -> std::result::Result<SplitKind, String> {
    match s {
        "standard" => Ok(SplitKind::Standard),
        "heldout" | "held-out" => Ok(SplitKind::Heldout),
        other => Err(format!(
            "unknown split kind `{other}` (expected standard|heldout)"
        )),
    }
}

/// Builds the effective config: defaults, then `--config`, then flags.
pub fn resolve_config(g: &GlobalArgs) -> Result<PipelineConfig> {
    let mut c = match &g.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = g.seed {
        c.seed = v;
    }
    if let Some(v) = g.tile_px {
        c.tile_px = v;
    }
    if g.resize_to_224 {
        c.resize_to_224 = true;
    }
    if let Some(v) = g.task {
        c.task = v;
    }
    if let Some(v) = g.max_gap_days {
        c.max_gap_days = v;
    }
    if let Some(v) = g.run_length_m {
        c.run_length_m = v;
    }
    if let Some(v) = g.train_fraction {
        c.train_fraction = v;
    }
    if let Some(v) = g.classifier {
        c.classifier = v;
    }
    if let Some(v) = g.head_layers {
        c.head_layers = v;
    }
    if let Some(v) = g.epochs {
        c.train.epochs = v;
    }
    if let Some(v) = g.learning_rate {
        c.train.learning_rate = v;
    }
    if let Some(v) = g.batch_size {
        c.train.batch_size = v;
    }
    c.validate()?;
    Ok(c)
}

pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        EXIT_USAGE
    } else {
        EXIT_DATA
    }
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli.global)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.global.jobs {
        if n == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;
    let ctx = stages::Ctx {
        cfg,
        reproducible: cli.global.reproducible,
        seed_given: cli.global.seed.is_some(),
    };
    pool.install(|| stages::dispatch(&ctx, cli.command))
}
