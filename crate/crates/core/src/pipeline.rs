//! The online driver: one call per frame, then a final extraction.
//!
//! Each frame goes through proposal filtering into the weighted heatmap,
//! supporting-plane suppression (re-estimated on keyframes), and fusion into
//! the global heatmap. A frame's effect on the state depends only on the
//! frames processed before it, so the state can be saved after any frame and
//! resumed with identical results.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, PipelineConfig};
use crate::dataio::{DataError, FrameRecord};
use crate::fusion::{FrameView, Fusion, GlobalHeatmap3D};
use crate::geometry::{FrameCloud, Intrinsics};
use crate::plane::{suppress_plane, track_keyframe, Plane, PlaneTrack};
use crate::proposals2d::{baseline_heatmap, weighted_heatmap, FilterSummary, Heatmap2D, Proposal2D};
use crate::proposals3d::{extract, Extraction};
use crate::raster::{downsample_area, downsample_nearest, ColorImage, DepthImage};

/// Per-frame timing, split into the stages of the online loop.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameTiming {
    pub frame: usize,
    pub proposals: usize,
    pub keyframe: bool,
    pub proposal_filtering_s: f64,
    pub plane_removal_s: f64,
    pub warp_s: f64,
    pub confidence_frequency_s: f64,
    pub location_color_s: f64,
    pub total_s: f64,
    pub matched: usize,
    pub inserted: usize,
    pub global_points: usize,
    pub filter: FilterSummary,
}

/// Frame inputs at the working resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkingFrame {
    pub color: ColorImage,
    pub depth: DepthImage,
    pub proposals: Vec<Proposal2D>,
}

/// Heatmaps of one frame at each stage.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapStages {
    /// Plain accumulation of all proposals, `Ĥ`.
    pub baseline: Heatmap2D,
    /// After soft and hard filtering, `H_2D`.
    pub weighted: Heatmap2D,
    /// After supporting-plane suppression, `H̃_2D`.
    pub suppressed: Heatmap2D,
    pub plane: Option<Plane>,
    pub filter: FilterSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub config: PipelineConfig,
    /// Intrinsics of the input frames.
    pub input_intrinsics: Intrinsics,
    /// Intrinsics at the working resolution.
    pub intrinsics: Intrinsics,
    pub fusion: Fusion,
    pub track: PlaneTrack,
    pub frames_processed: usize,
    /// Index of the last processed frame record.
    pub last_frame: Option<usize>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, intrinsics: Intrinsics) -> Result<Self, ConfigError> {
        config.validate()?;
        let k = intrinsics.downsampled(config.downsample);
        Ok(Self {
            config,
            input_intrinsics: intrinsics,
            intrinsics: k,
            fusion: Fusion::new(k, config.match_thresholds()),
            track: PlaneTrack::default(),
            frames_processed: 0,
            last_frame: None,
        })
    }

    pub fn global(&self) -> &GlobalHeatmap3D {
        &self.fusion.global
    }

    /// Brings a frame to the working resolution.
    pub fn working_frame(&self, frame: &FrameRecord) -> WorkingFrame {
        let f = self.config.downsample;
        if f == 1 {
            return WorkingFrame {
                color: frame.color.clone(),
                depth: frame.depth.clone(),
                proposals: frame.proposals.clone(),
            };
        }
        WorkingFrame {
            color: downsample_area(&frame.color, f),
            depth: downsample_nearest(&frame.depth, f),
            proposals: frame.proposals.iter().map(|p| p.downsampled(f)).collect(),
        }
    }

    /// Heatmaps of `frame` as the next frame would see them, without
    /// changing the state beyond the plane track.
    fn stages(&mut self, w: &WorkingFrame, frame: &FrameRecord, timing: &mut FrameTiming) -> (Heatmap2D, Option<Plane>) {
        let k = &self.intrinsics;
        let t0 = Instant::now();
        let weighted = weighted_heatmap(&w.proposals, &w.depth, k, &self.config.filter_params());
        timing.proposal_filtering_s = t0.elapsed().as_secs_f64();
        timing.filter = weighted.summary;

        let t1 = Instant::now();
        let interval = self.config.keyframe_interval;
        timing.keyframe = self.frames_processed % interval == 0;
        let cloud = FrameCloud::from_depth(k, &frame.pose, &w.depth);
        let plane = track_keyframe(
            &mut self.track,
            self.frames_processed,
            interval,
            &cloud,
            &weighted.heatmap,
            &self.config.ransac_params(),
        );
        let suppressed = match &plane {
            Some(p) => suppress_plane(&weighted.heatmap, p, &cloud, self.config.eps_p),
            None => weighted.heatmap,
        };
        timing.plane_removal_s = t1.elapsed().as_secs_f64();
        (suppressed, plane)
    }

    /// Processes the next frame of the sequence.
    pub fn process(&mut self, frame: &FrameRecord) -> FrameTiming {
        let start = Instant::now();
        let mut timing = FrameTiming {
            frame: frame.index,
            proposals: frame.proposals.len(),
            ..Default::default()
        };
        let w = self.working_frame(frame);
        let (suppressed, _) = self.stages(&w, frame, &mut timing);
        let stats = self.fusion.integrate(FrameView {
            heatmap: &suppressed,
            depth: &w.depth,
            color: &w.color,
            pose: &frame.pose,
        });
        self.frames_processed += 1;
        self.last_frame = Some(frame.index);
        timing.warp_s = stats.warp_s;
        timing.confidence_frequency_s = stats.confidence_frequency_s;
        timing.location_color_s = stats.location_color_s;
        timing.matched = stats.matched;
        timing.inserted = stats.inserted;
        timing.global_points = self.fusion.global.len();
        timing.total_s = start.elapsed().as_secs_f64();
        timing
    }

    /// All heatmap stages of `frame`, computed on a scratch copy so the
    /// pipeline state is untouched.
    pub fn heatmap_stages(&self, frame: &FrameRecord) -> HeatmapStages {
        let mut scratch = self.clone();
        let w = scratch.working_frame(frame);
        let mut timing = FrameTiming::default();
        let k = scratch.intrinsics;
        let baseline = baseline_heatmap(&w.proposals, k.width, k.height);
        let weighted = weighted_heatmap(&w.proposals, &w.depth, &k, &scratch.config.filter_params()).heatmap;
        let (suppressed, plane) = scratch.stages(&w, frame, &mut timing);
        HeatmapStages {
            baseline,
            weighted,
            suppressed,
            plane,
            filter: timing.filter,
        }
    }

    /// Boxes from everything seen so far.
    pub fn finish(&self) -> Extraction {
        extract(&self.fusion.global, &self.track, &self.config.extract_params())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        bincode::serialize(self).expect("pipeline state serializes")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DataError> {
        bincode::deserialize(bytes).map_err(|e| DataError::Invalid(format!("pipeline state: {e}")))
    }

    pub fn save_state(&self, path: &Path) -> Result<(), DataError> {
        std::fs::write(path, self.to_bytes()).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load_state(path: &Path) -> Result<Self, DataError> {
        let bytes = std::fs::read(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}
