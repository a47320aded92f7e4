//! Global 3D heatmap maintained by frame-to-frame warping.
//!
//! Instead of nearest-neighbour search or voxel grids, every valid pixel of
//! the previous frame is warped into the current view with the known poses.
//! Where the warped pixel agrees in color (`ΔI <= ε_I`) and depth
//! (`ΔZ <= ε_Z`) with the current pixel, the current pixel inherits the
//! global point index stored in the previous [`IndexMap`]. Matched points
//! accumulate confidence and frequency and their position and color become
//! the running mean of all observations; unmatched valid pixels start new
//! points.

use serde::{Deserialize, Serialize};

use crate::geometry::{backproject, warp_pixel, Intrinsics, Pixel, Point3, Pose};
use crate::proposals2d::Heatmap2D;
use crate::raster::{ColorImage, DepthImage, Raster, Rgb};

/// One row `[x, y, z, r, g, b, c, f]` of the global heatmap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalPoint {
    pub position: Point3,
    pub color: Rgb,
    /// Accumulated confidence.
    pub confidence: f64,
    /// Number of frames the point was observed in.
    pub frequency: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GlobalHeatmap3D {
    pub points: Vec<GlobalPoint>,
    pub frame_count: usize,
}

impl GlobalHeatmap3D {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_confidence(&self) -> f64 {
        self.points.iter().map(|p| p.confidence).sum()
    }
}

/// Per-pixel index into [`GlobalHeatmap3D::points`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexMap {
    pub entries: Raster<Option<u32>>,
}

impl IndexMap {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            entries: Raster::filled(width, height, None),
        }
    }

    pub fn get(&self, u: usize, v: usize) -> Option<usize> {
        self.entries.at(u, v).map(|i| i as usize)
    }

    pub fn assigned(&self) -> usize {
        self.entries.as_slice().iter().filter(|e| e.is_some()).count()
    }
}

/// Borrowed view of the per-frame inputs fusion needs.
#[derive(Debug, Clone, Copy)]
pub struct FrameView<'a> {
    /// Plane-suppressed heatmap `H̃_2D`.
    pub heatmap: &'a Heatmap2D,
    pub depth: &'a DepthImage,
    pub color: &'a ColorImage,
    pub pose: &'a Pose,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchThresholds {
    /// Color threshold on the Euclidean RGB distance.
    pub eps_i: f64,
    /// Depth threshold in meters.
    pub eps_z: f64,
}

impl Default for MatchThresholds {
    fn default() -> Self {
        Self {
            eps_i: 0.05,
            eps_z: 0.01,
        }
    }
}

#[inline]
fn valid(z: f64) -> bool {
    z > 0.0 && z.is_finite()
}

#[inline]
fn color_distance(a: &Rgb, b: &Rgb) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Seeds the global heatmap with one point per valid pixel of the first
/// frame, `f = 1` and `c = H̃_2D[u,v]`.
pub fn init_global(k: &Intrinsics, frame: FrameView<'_>) -> (GlobalHeatmap3D, IndexMap) {
    let mut global = GlobalHeatmap3D::default();
    let index = register_frame(k, &mut global, None, frame, &MatchTable::unmatched(frame.depth.width(), frame.depth.height()));
    (global, index)
}

/// Correspondence found for one current pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelMatch {
    /// Row-major pixel index in the previous frame.
    pub prev_pixel: usize,
    /// Depth of the previous point seen from the current camera.
    pub warped_depth: f64,
}

/// Per-pixel matches of the current frame against the previous one.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchTable {
    pub matches: Raster<Option<PixelMatch>>,
}

impl MatchTable {
    pub fn unmatched(width: usize, height: usize) -> Self {
        Self {
            matches: Raster::filled(width, height, None),
        }
    }

    pub fn matched(&self) -> usize {
        self.matches.as_slice().iter().filter(|m| m.is_some()).count()
    }
}

/// Previous-frame data kept between calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviousFrame {
    pub depth: DepthImage,
    pub color: ColorImage,
    pub pose: Pose,
}

/// Warps every valid previous pixel into the current frame and keeps the
/// ones whose color and depth agree. When several previous pixels land on the
/// same current pixel, the one with the smallest warped depth wins; earlier
/// pixels in row-major order win exact ties.
pub fn warp_match(
    k: &Intrinsics,
    prev_depth: &DepthImage,
    prev_color: &ColorImage,
    prev_pose: &Pose,
    cur_depth: &DepthImage,
    cur_color: &ColorImage,
    cur_pose: &Pose,
    thresholds: &MatchThresholds,
) -> MatchTable {
    let (width, height) = (cur_depth.width(), cur_depth.height());
    let mut table = MatchTable::unmatched(width, height);
    let prev = prev_depth.as_slice();
    for (idx, &z) in prev.iter().enumerate() {
        if !valid(z) {
            continue;
        }
        let (u, v) = (idx % prev_depth.width(), idx / prev_depth.width());
        let Some(w) = warp_pixel(k, prev_pose, cur_pose, Pixel::new(u as f64, v as f64), z) else {
            continue;
        };
        let z_cur = cur_depth.at(w.u, w.v);
        if !valid(z_cur) || (z_cur - w.depth).abs() > thresholds.eps_z {
            continue;
        }
        if color_distance(&cur_color.at(w.u, w.v), &prev_color.as_slice()[idx]) > thresholds.eps_i {
            continue;
        }
        let slot = table.matches.get_mut(w.u, w.v);
        match slot {
            Some(m) if m.warped_depth <= w.depth => {}
            _ => {
                *slot = Some(PixelMatch {
                    prev_pixel: idx,
                    warped_depth: w.depth,
                })
            }
        }
    }
    table
}

/// Timings of the two halves of [`register_frame`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RegisterStats {
    pub matched: usize,
    pub inserted: usize,
    pub confidence_frequency_s: f64,
    pub location_color_s: f64,
}

/// Folds one frame into the global heatmap and returns its index map.
///
/// Matched pixels add their heat to the point, bump its frequency, and move
/// its position and color to `(f·old + new) / (f + 1)`. Unmatched pixels with
/// valid depth become new points; pixels without depth are ignored. Points
/// are appended in row-major pixel order.
pub fn register_frame(
    k: &Intrinsics,
    global: &mut GlobalHeatmap3D,
    prev_index: Option<&IndexMap>,
    frame: FrameView<'_>,
    matches: &MatchTable,
) -> IndexMap {
    register_frame_timed(k, global, prev_index, frame, matches).0
}

pub fn register_frame_timed(
    k: &Intrinsics,
    global: &mut GlobalHeatmap3D,
    prev_index: Option<&IndexMap>,
    frame: FrameView<'_>,
    matches: &MatchTable,
) -> (IndexMap, RegisterStats) {
    use std::time::Instant;

    let (width, height) = (frame.depth.width(), frame.depth.height());
    let mut index = IndexMap::empty(width, height);
    let mut stats = RegisterStats::default();
    let depth = frame.depth.as_slice();
    let heat = frame.heatmap.as_slice();

    // Pass 1: resolve indices, accumulate confidence and frequency.
    let t0 = Instant::now();
    let mut targets: Vec<(usize, u32, u32)> = Vec::new(); // (pixel, point, previous frequency)
    let first_new = global.points.len();
    for idx in 0..width * height {
        let z = depth[idx];
        if !valid(z) {
            continue;
        }
        let inherited = matches.matches.as_slice()[idx].and_then(|m| {
            prev_index.and_then(|pi| pi.entries.as_slice()[m.prev_pixel])
        });
        match inherited {
            Some(pt) => {
                let p = &mut global.points[pt as usize];
                p.confidence += heat[idx];
                targets.push((idx, pt, p.frequency));
                p.frequency += 1;
                index.entries.as_mut_slice()[idx] = Some(pt);
                stats.matched += 1;
            }
            None => {
                let pt = global.points.len() as u32;
                global.points.push(GlobalPoint {
                    position: Point3::zeros(),
                    color: [0.0; 3],
                    confidence: heat[idx],
                    frequency: 1,
                });
                targets.push((idx, pt, 0));
                index.entries.as_mut_slice()[idx] = Some(pt);
                stats.inserted += 1;
            }
        }
    }
    stats.confidence_frequency_s = t0.elapsed().as_secs_f64();

    // Pass 2: location and color running means.
    let t1 = Instant::now();
    let color = frame.color.as_slice();
    for &(idx, pt, prev_f) in &targets {
        let (u, v) = (idx % width, idx / width);
        let Ok(x) = backproject(k, frame.pose, Pixel::new(u as f64, v as f64), depth[idx]) else {
            continue;
        };
        let p = &mut global.points[pt as usize];
        let c = color[idx];
        if (pt as usize) >= first_new {
            p.position = x;
            p.color = c;
        } else {
            let f = prev_f as f64;
            let w = 1.0 / (f + 1.0);
            p.position = (p.position * f + x) * w;
            for ch in 0..3 {
                p.color[ch] = (p.color[ch] * f + c[ch]) * w;
            }
        }
    }
    stats.location_color_s = t1.elapsed().as_secs_f64();
    global.frame_count += 1;
    (index, stats)
}

/// Stateful driver holding the global heatmap, the last index map and the
/// previous frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fusion {
    pub intrinsics: Intrinsics,
    pub thresholds: MatchThresholds,
    pub global: GlobalHeatmap3D,
    pub index: Option<IndexMap>,
    pub previous: Option<PreviousFrame>,
}

/// What one [`Fusion::integrate`] call did.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FusionStats {
    pub matched: usize,
    pub inserted: usize,
    pub warp_s: f64,
    pub confidence_frequency_s: f64,
    pub location_color_s: f64,
}

impl Fusion {
    pub fn new(intrinsics: Intrinsics, thresholds: MatchThresholds) -> Self {
        Self {
            intrinsics,
            thresholds,
            global: GlobalHeatmap3D::default(),
            index: None,
            previous: None,
        }
    }

    pub fn integrate(&mut self, frame: FrameView<'_>) -> FusionStats {
        use std::time::Instant;
        let k = &self.intrinsics;
        let t0 = Instant::now();
        let matches = match &self.previous {
            Some(prev) => warp_match(
                k,
                &prev.depth,
                &prev.color,
                &prev.pose,
                frame.depth,
                frame.color,
                frame.pose,
                &self.thresholds,
            ),
            None => MatchTable::unmatched(frame.depth.width(), frame.depth.height()),
        };
        let warp_s = t0.elapsed().as_secs_f64();
        let (index, stats) =
            register_frame_timed(k, &mut self.global, self.index.as_ref(), frame, &matches);
        self.index = Some(index);
        self.previous = Some(PreviousFrame {
            depth: frame.depth.clone(),
            color: frame.color.clone(),
            pose: *frame.pose,
        });
        FusionStats {
            matched: stats.matched,
            inserted: stats.inserted,
            warp_s,
            confidence_frequency_s: stats.confidence_frequency_s,
            location_color_s: stats.location_color_s,
        }
    }
}
