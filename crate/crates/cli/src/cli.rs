use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};

use crate::config::FlowSource;

#[derive(Debug, Parser)]
#[command(
    name = "vad",
    version,
    about = "Region-based video anomaly detection with interpretable attributes"
)]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads (0 = one per core).
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute per-component normalization constants from nominal data.
    Calibrate(CalibrateArgs),
    /// Build a scene model from nominal video.
    Build(BuildArgs),
    /// Add nominal video to an existing model.
    Update(UpdateArgs),
    /// Score a test video and write pixel score maps.
    Detect(DetectArgs),
    /// Evaluate score maps against ground-truth tracks.
    Eval(EvalArgs),
    /// Explain the score of one test volume, or summarize a region.
    Explain(ExplainArgs),
}

/// Video or feature inputs. `--frames` and `--flow` pair up by position.
#[derive(Debug, Clone, Default, Args)]
pub struct InputArgs {
    /// Directory of numbered frame images (repeat for several videos).
    #[arg(long, value_name = "DIR")]
    pub frames: Vec<PathBuf>,

    /// Directory of numbered .flo files matching the preceding --frames.
    #[arg(long, value_name = "DIR")]
    pub flow: Vec<PathBuf>,

    /// Imported feature file (repeat for several videos).
    #[arg(long, value_name = "FILE", conflicts_with_all = ["frames", "flow"])]
    pub features: Vec<PathBuf>,

    /// Where flow comes from.
    #[arg(long, value_enum)]
    pub flow_source: Option<FlowSourceArg>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum FlowSourceArg {
    Auto,
    Import,
    Estimate,
}

impl From<FlowSourceArg> for FlowSource {
    fn from(a: FlowSourceArg) -> Self {
        match a {
            FlowSourceArg::Auto => FlowSource::Auto,
            FlowSourceArg::Import => FlowSource::Import,
            FlowSourceArg::Estimate => FlowSource::Estimate,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct GeometryArgs {
    /// Side of the square region in pixels.
    #[arg(long, value_name = "PX")]
    pub region_size: Option<usize>,

    /// Frames per video volume.
    #[arg(long, short = 't', value_name = "FRAMES")]
    pub t: Option<usize>,

    /// Frame width, for feature-file inputs.
    #[arg(long, value_name = "PX")]
    pub frame_width: Option<usize>,

    /// Frame height, for feature-file inputs.
    #[arg(long, value_name = "PX")]
    pub frame_height: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub geometry: GeometryArgs,

    /// Seed for pair sampling on large feature sets.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Output JSON file.
    #[arg(long, short, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub geometry: GeometryArgs,

    /// Exemplar threshold.
    #[arg(long)]
    pub th: Option<f32>,

    /// Calibration seed.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Use fixed normalizers from a calibrate output instead of calibrating.
    #[arg(long, value_name = "FILE")]
    pub normalizers: Option<PathBuf>,

    /// Output model file.
    #[arg(long, short, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct UpdateArgs {
    /// Scene model file written by `build`.
    #[arg(long, short, value_name = "FILE")]
    pub model: PathBuf,
    #[command(flatten)]
    pub input: InputArgs,

    /// Output model file (default: overwrite --model).
    #[arg(long, short, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ScoringArgs {
    /// Reuse the previous window's score for unchanged volumes.
    #[arg(long, overrides_with = "no_skip", action = ArgAction::SetTrue)]
    pub skip: bool,

    /// Score every volume.
    #[arg(long, action = ArgAction::SetTrue)]
    pub no_skip: bool,

    /// NCC above which a volume counts as unchanged.
    #[arg(long)]
    pub ncc_min: Option<f64>,

    /// Score of volumes in regions without exemplars.
    #[arg(long)]
    pub sentinel: Option<f64>,

    /// Decision threshold for anomalous volumes.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Scene model file written by `build`.
    #[arg(long, short, value_name = "FILE")]
    pub model: PathBuf,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub scoring: ScoringArgs,

    /// Frame count of the test video, for feature-file inputs.
    #[arg(long)]
    pub frame_count: Option<usize>,

    /// Also write grayscale heatmap PNGs.
    #[arg(long)]
    pub heatmaps: bool,

    /// Output directory.
    #[arg(long, short, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Score map directory written by `detect`.
    #[arg(long, value_name = "DIR")]
    pub scores: PathBuf,

    /// Ground-truth CSV with columns track_id,frame,x,y,w,h.
    #[arg(long, value_name = "FILE")]
    pub gt: PathBuf,

    /// Minimum IoU for a detected region to hit a ground-truth box.
    #[arg(long)]
    pub iou_min: Option<f64>,

    /// Fraction of a track's boxes that must be hit for the track to count as detected.
    #[arg(long)]
    pub track_fraction: Option<f64>,

    /// Cap on the number of thresholds swept.
    #[arg(long)]
    pub max_thresholds: Option<usize>,

    /// Write the full report (with curves) as JSON.
    #[arg(long, short, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// Scene model file written by `build`.
    #[arg(long, short, value_name = "FILE")]
    pub model: PathBuf,
    #[command(flatten)]
    pub input: InputArgs,

    /// Region index.
    #[arg(long)]
    pub region: usize,

    /// Any frame of the test window to explain.
    #[arg(long, required_unless_present = "summary")]
    pub frame: Option<usize>,

    /// Attribute head (JSON) mapping imported embeddings to attributes.
    #[arg(long, value_name = "FILE")]
    pub head: Option<PathBuf>,

    /// Decision threshold for the verdict.
    #[arg(long)]
    pub threshold: Option<f64>,

    /// Score reported for regions without exemplars.
    #[arg(long)]
    pub sentinel: Option<f64>,

    /// Print the region's exemplars instead of explaining a test volume.
    #[arg(long)]
    pub summary: bool,

    /// Exemplars shown by --summary.
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,

    /// Emit JSON instead of text.
    #[arg(long)]
    pub json: bool,

    /// Write bar-chart panels as PNGs into this directory.
    #[arg(long, value_name = "DIR")]
    pub png_dir: Option<PathBuf>,
}
