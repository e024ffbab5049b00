use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "momentreg", version, about = "Embedding refinement studies, moment losses, pseudo-events and retrieval metrics")]
pub struct Cli {
    /// Cap on worker threads. Outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Global seed.
    #[arg(long, global = true, env = "MF_SEED", default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Embedding table utilities.
    #[command(subcommand)]
    Emb(EmbCommand),
    /// Triplet reasonableness studies.
    #[command(subcommand)]
    Triplets(TripletsCommand),
    /// Pseudo-event detection.
    #[command(subcommand)]
    Events(EventsCommand),
    /// Loss evaluation and gradient checks.
    #[command(subcommand)]
    Loss(LossCommand),
    /// Retrieval and highlight metrics.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Synthetic end-to-end experiment.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Re-run a command from its manifest.
    #[serde(skip)]
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs under this directory instead of their recorded paths.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbCommand {
    /// Convert between `.emb` and `.csv` (chosen by extension).
    Convert(InOut),
    /// Scale every row to unit norm.
    Normalize(InOut),
    /// Pairwise cosine similarity matrix as CSV.
    Sim(InOut),
    /// Reverse the row order. Violates the refiner contract on purpose.
    Reverse(InOut),
    /// Self-attention refinement, usable as an external refiner.
    ToyRefine(ToyRefineArgs),
    /// Write random attention weights as JSON.
    GenWeights(GenWeightsArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct InOut {
    pub input: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AttentionShape {
    /// Query/key width.
    #[arg(long, default_value_t = 16)]
    pub dk: usize,
    #[arg(long, default_value_t = 1)]
    pub depth: usize,
    /// Standard deviation of the random weights.
    #[arg(long, default_value_t = 0.1)]
    pub scale: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ToyRefineArgs {
    /// JSON weights; random weights from the global seed when absent.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[command(flatten)]
    pub shape: AttentionShape,
    pub input: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GenWeightsArgs {
    #[arg(long)]
    pub dim: usize,
    #[command(flatten)]
    pub shape: AttentionShape,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefinerKind {
    Identity,
    Toy,
    External,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TripletsCommand {
    /// Improved/deteriorated proportions over an (alpha, p) grid.
    Study(StudyArgs),
    /// Verdict of every triplet on one table.
    Classify(ClassifyArgs),
    /// Embeddings with a known share of unreasonable triplets.
    SynthGeometry(SynthGeometryArgs),
    /// Empirical ratio of fused to base similarity against (1 − alpha)².
    Scaling(ScalingArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct StudyArgs {
    #[arg(long)]
    pub emb: PathBuf,
    #[arg(long)]
    pub triplets: PathBuf,
    #[arg(long, value_enum, default_value_t = RefinerKind::Identity)]
    pub refiner: RefinerKind,
    /// Command line of an external refiner, run as `<cmd> input.emb output.emb`.
    #[arg(long, required_if_eq("refiner", "external"))]
    pub refiner_cmd: Option<String>,
    /// Attention weights for the toy refiner; random when absent.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[command(flatten)]
    pub shape: AttentionShape,
    #[arg(long, default_value_t = 300.0)]
    pub timeout_secs: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.25, 0.5, 0.75, 1.0])]
    pub alphas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.3, 0.5])]
    pub ps: Vec<f64>,
    /// CSV grid.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Bar chart of improved and deteriorated proportions.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub emb: PathBuf,
    #[arg(long)]
    pub triplets: PathBuf,
    /// JSONL verdicts.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SynthGeometryArgs {
    #[arg(long)]
    pub triplets: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.3)]
    pub fraction: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ScalingArgs {
    #[arg(long, default_value_t = 256)]
    pub dim: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.25, 0.5, 0.75, 0.9])]
    pub alphas: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub n_pairs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventsCommand {
    /// Split videos into events by bisecting the self-similarity matrix.
    Detect(DetectArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DetectorArgs {
    #[arg(long, default_value_t = 4)]
    pub kernel_half: usize,
    #[arg(long, default_value_t = 2)]
    pub min_event_len: usize,
    #[arg(long, default_value_t = 0.05)]
    pub threshold: f64,
    #[arg(long, default_value_t = 8)]
    pub max_depth: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DetectArgs {
    /// One `.emb`/`.csv` per video, rows are frames. The file stem is the video id.
    #[arg(long, required = true, num_args = 1..)]
    pub features: Vec<PathBuf>,
    /// Seconds per frame.
    #[arg(long, default_value_t = 1.0)]
    pub frame_period: f64,
    #[command(flatten)]
    pub detector: DetectorArgs,
    /// JSONL events, one line per video.
    #[arg(long)]
    pub out: PathBuf,
    /// Heatmap of the first video's similarity matrix with detected boundaries.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    BestIou,
    AllEvents,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossCommand {
    /// Loss reports for predictions against events and ground truth.
    Eval(LossEvalArgs),
    /// Finite-difference check of every analytic gradient.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct WeightArgs {
    #[arg(long, default_value_t = 1.0)]
    pub lambda_l1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_iou: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lambda_e: f64,
    #[arg(long, default_value_t = 0.001)]
    pub lambda_p: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct LossEvalArgs {
    #[arg(long)]
    pub preds: PathBuf,
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub gts: Option<PathBuf>,
    /// Position embeddings, one row per frame.
    #[arg(long)]
    pub positions: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub frame_period: f64,
    #[arg(long, value_enum, default_value_t = Mode::BestIou)]
    pub mode: Mode,
    #[command(flatten)]
    pub weights: WeightArgs,
    /// JSONL reports; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GradcheckArgs {
    /// Random points per loss.
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    /// JSON table; the table is always printed.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalCommand {
    /// Recall@1 and mAP of moment predictions.
    Mr(EvalMrArgs),
    /// Highlight mAP and HIT@1 of clip saliency scores.
    Hd(EvalHdArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvalMrArgs {
    #[arg(long)]
    pub preds: PathBuf,
    #[arg(long)]
    pub gts: PathBuf,
    /// Pretty JSON report; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvalHdArgs {
    #[arg(long)]
    pub ann: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthCommand {
    /// Train every {use_evt, use_pos} setting on every seed.
    Run(SynthRunArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SynthRunArgs {
    /// Experiment JSON; omitted fields take defaults. Without `seeds` the
    /// run uses ten seeds starting at the global seed.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Loss curves CSV; defaults to `<out stem>.curves.csv`.
    #[arg(long)]
    pub curves: Option<PathBuf>,
    /// Predicted spans against event boundaries; defaults to `<out stem>.svg`.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}
