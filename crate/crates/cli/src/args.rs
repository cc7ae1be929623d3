use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// 0xCAPA
pub const DEFAULT_SEED: u64 = 51370;

#[derive(Debug, Parser)]
#[command(name = "textcap", version, about = "Textual captcha generation, moderation attack evaluation and outlier defenses")]
pub struct Cli {
    /// Master seed for every random draw.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Worker threads (defaults to the logical CPU count).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// TOML configuration file for the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory receiving reports and artifacts.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render captcha images and a manifest.
    Gen(GenArgs),
    /// Submit captchas to a moderation pipeline and report success rates.
    AttackEval(AttackArgs),
    /// Fit PCA plus an outlier detector on benign images.
    DefenseFit(FitArgs),
    /// Score a manifest with a fitted model, or run a full protocol.
    DefenseEval(EvalArgs),
    /// Score human transcriptions against ground truth.
    AnnotateScore(AnnotateArgs),
    /// Export a two-component PCA projection as CSV.
    #[command(name = "project-2d")]
    Project2d(ProjectArgs),
    /// List the built-in styles and their transformation steps.
    Profiles,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Newline-delimited word list, one payload per line.
    #[arg(long, conflicts_with = "random")]
    pub words: Option<PathBuf>,
    /// Use this many random alphanumeric payloads instead of a word list.
    #[arg(long)]
    pub random: Option<usize>,
    /// Comma separated built-in style names.
    #[arg(long, default_value = "clean,claptcha,multicolor,homemade")]
    pub styles: String,
    /// Replace the built-in styles by this many synthesized surrogate styles.
    #[arg(long = "synthesize-c11-like", value_name = "COUNT")]
    pub surrogates: Option<usize>,
    /// Directory of .ttf/.otf faces to use instead of the bundled fonts.
    #[arg(long)]
    pub fonts: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// echo | null | mock-echo | mock-null | command:<argv...> | http:<url>
    #[arg(long)]
    pub ocr: Option<String>,
    /// blocklist:<file> | http:<url>
    #[arg(long)]
    pub moderator: Option<String>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    /// Send images carrying text straight to image moderation.
    #[arg(long)]
    pub no_ocr_stage: bool,
    /// Omit per-sample results from the report.
    #[arg(long)]
    pub summary_only: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DetectorArg {
    Lof,
    Iforest,
    Ecod,
}

/// Where benign images and captchas come from, and how they are described.
#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Manifest of benign images.
    #[arg(long, conflicts_with = "benign_dir")]
    pub benign: Option<PathBuf>,
    /// Directory of benign images, ingested recursively.
    #[arg(long)]
    pub benign_dir: Option<PathBuf>,
    /// Manifest of captcha images.
    #[arg(long)]
    pub captchas: Option<PathBuf>,
    /// CSV or JSON-lines embeddings keyed by id, replacing the built-in descriptor.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, value_enum, default_value_t = DetectorArg::Lof)]
    pub detector: DetectorArg,
    /// PCA components; ignored when a grid is searched.
    #[arg(long, default_value_t = 8)]
    pub pca: usize,
    /// Neighbours (LOF) or trees (IForest).
    #[arg(long)]
    pub param: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub contamination: f64,
    /// Model file name inside the output directory.
    #[arg(long, default_value = "defense_model.json")]
    pub model: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Protocol {
    /// k-known-styles outlier experiment.
    Outlier,
    /// Logistic baseline with held-out styles.
    Supervised,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Fitted model from `defense-fit`; scores --manifest with it.
    #[arg(long, requires = "manifest")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Protocol::Outlier)]
    pub protocol: Protocol,
    /// Known-style counts, comma separated (default: 1 to the number of styles).
    #[arg(long, value_delimiter = ',')]
    pub ks: Vec<usize>,
    /// Style combinations drawn per k.
    #[arg(long, default_value_t = 5)]
    pub combinations: usize,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub detectors: Vec<DetectorArg>,
    /// Styles withheld from the supervised model.
    #[arg(long, value_delimiter = ',')]
    pub held_out: Vec<String>,
    /// L2 strengths for the supervised model.
    #[arg(long, value_delimiter = ',', default_values_t = [1e-3, 1e-2, 1e-1])]
    pub lambda: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// CSV with header annotator_id,sample_id,transcription,difficulty.
    #[arg(long)]
    pub annotations: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// CSV destination (default: <out>/projection.csv).
    #[arg(long)]
    pub output: Option<PathBuf>,
}
