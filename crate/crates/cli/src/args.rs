use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use prop3d::config::PipelineConfig;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "prop3d", version, about = "Online 3D object proposals from RGB-D sequences")]
pub struct Cli {
    /// Worker threads for the parallel stages; `1` runs everything on the
    /// calling thread's pool of one.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,
    /// Log per-frame progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Process a sequence frame by frame and write boxes, clouds and timings.
    Run(RunArgs),
    /// Score boxes against ground truth.
    Eval(EvalArgs),
    /// Render a synthetic sequence with ground truth.
    Synth(SynthArgs),
    /// Dump the heatmap stages of one frame as PNG files.
    DebugHeatmap(DebugArgs),
}

macro_rules! config_flags {
    ($($field:ident: $ty:ty),* $(,)?) => {
        /// One optional flag per config key, `--eps-delta` for `eps_delta`.
        #[derive(Debug, Default, Clone, Args)]
        pub struct ConfigFlags {
            $(
                #[arg(long, value_name = "VALUE", help_heading = "Config overrides")]
                pub $field: Option<$ty>,
            )*
        }

        impl ConfigFlags {
            pub fn apply(&self, c: &mut PipelineConfig) {
                $(if let Some(v) = self.$field {
                    c.$field = v;
                })*
            }

            pub fn any(&self) -> bool {
                false $(|| self.$field.is_some())*
            }
        }
    };
}

config_flags! {
    eps_delta: f64,
    eps_min: f64,
    eps_max: f64,
    tau: f64,
    eps_p: f64,
    eps_i: f64,
    eps_z: f64,
    eps: f64,
    soft_filter: bool,
    hard_filter: bool,
    percentile_clamp: bool,
    percentile_low: f64,
    percentile_high: f64,
    ransac_iterations: usize,
    ransac_top_k: usize,
    ransac_window: usize,
    ransac_stride: usize,
    ransac_refine_rounds: usize,
    keyframe_interval: usize,
    plane_angle_deg: f64,
    plane_offset: f64,
    dbscan_eps: f64,
    dbscan_min_pts: usize,
    min_volume: f64,
    downsample: usize,
    seed: u64,
}

/// Config file (if any) with flag overrides applied on top, validated.
pub fn resolve_config(file: Option<&PathBuf>, flags: &ConfigFlags) -> Result<PipelineConfig, CliError> {
    let mut c = match file {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    flags.apply(&mut c);
    c.validate()?;
    Ok(c)
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Sequence manifest (TOML).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Pipeline config file; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Continue from a saved state; config and intrinsics come from it.
    #[arg(long, value_name = "STATE")]
    pub resume: Option<PathBuf>,
    /// Write the pipeline state here after the last processed frame.
    #[arg(long, value_name = "STATE")]
    pub save_state: Option<PathBuf>,
    /// Stop after this frame index.
    #[arg(long, value_name = "FRAME")]
    pub until: Option<usize>,
    /// Skip the PLY exports.
    #[arg(long)]
    pub no_ply: bool,
    #[command(flatten)]
    pub flags: ConfigFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    /// Per-frame 2D boxes (CSV), DR / SR / IoU.
    #[value(name = "2d")]
    TwoD,
    /// 3D boxes (JSON), DR / SR / IoU.
    #[value(name = "3d")]
    ThreeD,
    /// Labeled points inside 3D boxes, AP / AR / F.
    Points,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub mode: EvalMode,
    /// Output boxes, one file per scene: `boxes.json` for 3d and points,
    /// `boxes_2d.csv` for 2d.
    #[arg(long, required = true, num_args = 1..)]
    pub boxes: Vec<PathBuf>,
    /// Ground truth, one file per scene in the same order. Defaults to the
    /// files named by `--manifest`.
    #[arg(long, num_args = 1..)]
    pub gt: Vec<PathBuf>,
    /// Manifests whose ground-truth entries are used when `--gt` is absent.
    #[arg(long, num_args = 1..)]
    pub manifest: Vec<PathBuf>,
    /// IoU threshold for DR and SR.
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    /// Distance tolerance of the point-in-box test, meters.
    #[arg(long, default_value_t = 0.0)]
    pub tolerance: f64,
    /// Directory for `report.json` and `report.txt`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Camera orbits a table with objects.
    Tabletop,
    /// Camera starts on the floor beside the table and pans onto it.
    Pan,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for the sequence.
    #[arg(long)]
    pub out: PathBuf,
    /// Full scene description (TOML); overrides the preset.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Tabletop)]
    pub preset: Preset,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub objects: usize,
    #[arg(long, default_value_t = 60)]
    pub frames: usize,
    /// Exact number of proposals per frame.
    #[arg(long)]
    pub proposals: Option<usize>,
    /// Render at 640×480 instead of 320×240.
    #[arg(long)]
    pub vga: bool,
}

#[derive(Debug, Args)]
pub struct DebugArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Frame index in the manifest.
    #[arg(long)]
    pub frame: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub flags: ConfigFlags,
}
