use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use wsi_triage::zoo::ArchitectureId;

/// Patch-based whole-slide tumor triage.
///
/// Every command writes its outputs and a `run.json` provenance record under
/// `--out-dir`.
#[derive(Debug, Parser)]
#[command(name = "wsi-triage", version)]
pub struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads.
    #[arg(long, global = true, env = "WSI_TRIAGE_THREADS", default_value_t = 1)]
    pub threads: usize,
    #[arg(long, global = true, env = "WSI_TRIAGE_OUT_DIR", default_value = "out")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    /// Generate a synthetic corpus of tumor and normal slides.
    Synth(SynthArgs),
    /// Detect tissue on one slide.
    Segment(SegmentArgs),
    /// Extract labeled patches from every slide of a manifest.
    Patch(PatchArgs),
    /// Train a classifier on a patch directory.
    Train(TrainArgs),
    /// Slide-level k-fold cross-validation over a manifest.
    Cv(CvArgs),
    /// Accuracy and ROC analysis of a checkpoint on a patch directory.
    Eval(EvalArgs),
    /// Tumor-probability heatmap of one slide.
    Infer(InferArgs),
    /// Time per inference step for every architecture.
    Bench(BenchArgs),
    /// Re-run a recorded command and compare its artifacts.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Segment(_) => "segment",
            Command::Patch(_) => "patch",
            Command::Train(_) => "train",
            Command::Cv(_) => "cv",
            Command::Eval(_) => "eval",
            Command::Infer(_) => "infer",
            Command::Bench(_) => "bench",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    pub tumor_slides: usize,
    #[arg(long, default_value_t = 10)]
    pub normal_slides: usize,
    /// Prepended to every slide id.
    #[arg(long, default_value = "")]
    pub id_prefix: String,
    #[arg(long, default_value_t = 1024)]
    pub width: u32,
    #[arg(long, default_value_t = 1024)]
    pub height: u32,
    #[arg(long, default_value_t = 256)]
    pub tile_size: u32,
    #[arg(long, default_value_t = 0.5)]
    pub tissue_fraction: f64,
    /// Nodules per tumor slide.
    #[arg(long, default_value_t = 3)]
    pub nodules: u32,
    #[arg(long, default_value_t = 40)]
    pub radius_min: u32,
    #[arg(long, default_value_t = 60)]
    pub radius_max: u32,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TissueArgs {
    #[arg(long, default_value_t = 0.1)]
    pub v_min: f64,
    #[arg(long, default_value_t = 0.98)]
    pub v_max: f64,
    /// Radius of the square opening/closing element.
    #[arg(long, default_value_t = 1)]
    pub se_radius: u32,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SegmentArgs {
    /// Slide directory or flat RGB image.
    #[arg(long)]
    pub slide: PathBuf,
    #[command(flatten)]
    pub tissue: TissueArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PatchFlags {
    #[arg(long, default_value_t = 64)]
    pub patch_size: u32,
    /// Positive-tumor patches per tumor slide.
    #[arg(long, default_value_t = 100)]
    pub positive: usize,
    /// Negative-tumor patches per tumor slide.
    #[arg(long, default_value_t = 100)]
    pub negative: usize,
    /// Patches per normal slide.
    #[arg(long, default_value_t = 100)]
    pub normal: usize,
    #[arg(long, default_value_t = 0.8)]
    pub min_tissue: f64,
    /// `off`, `pooled`, or a color template JSON file.
    #[arg(long, default_value = "off")]
    pub standardize: String,
    #[command(flatten)]
    pub tissue: TissueArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PatchArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub patching: PatchFlags,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainFlags {
    #[arg(long, default_value = "mobile")]
    pub arch: ArchitectureId,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.0)]
    pub momentum: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Apply random flips, rotation and zoom to training patches.
    #[arg(long)]
    pub augment: bool,
    #[arg(long, default_value_t = 20.0)]
    pub max_rotation: f64,
    #[arg(long, default_value_t = 0.2)]
    pub max_zoom: f64,
    #[arg(long)]
    pub no_hflip: bool,
    #[arg(long)]
    pub no_vflip: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub patches: PathBuf,
    /// Patch directory validated after every epoch.
    #[arg(long)]
    pub val_patches: Option<PathBuf>,
    #[command(flatten)]
    pub training: TrainFlags,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CvArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Run every fold with and without augmentation and emit the 2x2 table.
    #[arg(long)]
    pub augmentation_study: bool,
    #[command(flatten)]
    pub patching: PatchFlags,
    #[command(flatten)]
    pub training: TrainFlags,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub patches: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub slide: PathBuf,
    /// Ground-truth mask; enables the comparison report and the outline.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Defaults to the patch size.
    #[arg(long)]
    pub stride: Option<u32>,
    #[arg(long, default_value_t = 0.9)]
    pub threshold: f64,
    /// Classify background cells too.
    #[arg(long)]
    pub keep_background: bool,
    #[command(flatten)]
    pub tissue: TissueArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 64)]
    pub input_size: usize,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    #[arg(long, default_value_t = 5)]
    pub warmup: usize,
    #[arg(long, default_value_t = 30)]
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// A `run.json` written by an earlier command.
    #[arg(long)]
    pub run: PathBuf,
}
