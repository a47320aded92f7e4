//! Per-frame objectness heatmaps built from 2D box proposals.
//!
//! The baseline heatmap sums the confidence of every proposal covering a
//! pixel. It is accumulated with a summed-area construction: each proposal
//! writes four corner deltas into a difference table, and one 2D prefix sum
//! turns the table into the heatmap, so the cost per proposal is constant.
//!
//! The weighted heatmap applies two depth-driven filters per proposal:
//!
//! * the soft filter masks pixels behind the midpoint depth `Z_μ` of a
//!   window whose depth range exceeds `ε_Δ`;
//! * the hard filter drops proposals whose metric extent (from `Z_μ` of the
//!   foreground and the focal lengths) is either below `ε_min` on both axes or
//!   above `ε_max` on both axes, and proposals with no depth at all.
//!
//! Proposals that pass the hard filter untouched by the soft filter still go
//! through the constant-time path; only masked windows are accumulated pixel
//! by pixel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::Intrinsics;
use crate::raster::{DepthImage, Raster};

/// Per-pixel objectness confidence.
pub type Heatmap2D = Raster<f64>;

/// One input box `[x, y, w, h, c]`, top-left corner in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proposal2D {
    pub x: i32,
    pub y: i32,
    pub w: i32,
    pub h: i32,
    pub c: f64,
}

impl Proposal2D {
    pub const fn new(x: i32, y: i32, w: i32, h: i32, c: f64) -> Self {
        Self { x, y, w, h, c }
    }

    /// Intersects the box with `[0,width) × [0,height)`. `None` when nothing
    /// of it remains inside the image.
    pub fn clipped(&self, width: usize, height: usize) -> Option<Self> {
        let x0 = (self.x as i64).max(0);
        let y0 = (self.y as i64).max(0);
        let x1 = (self.x as i64 + self.w as i64).min(width as i64);
        let y1 = (self.y as i64 + self.h as i64).min(height as i64);
        if x1 <= x0 || y1 <= y0 {
            return None;
        }
        Some(Self {
            x: x0 as i32,
            y: y0 as i32,
            w: (x1 - x0) as i32,
            h: (y1 - y0) as i32,
            c: self.c,
        })
    }

    pub fn is_inside(&self, width: usize, height: usize) -> bool {
        self.x >= 0
            && self.y >= 0
            && self.w >= 1
            && self.h >= 1
            && self.x as i64 + self.w as i64 <= width as i64
            && self.y as i64 + self.h as i64 <= height as i64
    }

    pub fn area(&self) -> i64 {
        self.w.max(0) as i64 * self.h.max(0) as i64
    }

    /// Pixel window `(x0, y0, x1, y1)` with exclusive upper bounds. Only
    /// meaningful for a clipped proposal.
    #[inline]
    fn window(&self) -> (usize, usize, usize, usize) {
        (
            self.x as usize,
            self.y as usize,
            (self.x + self.w) as usize,
            (self.y + self.h) as usize,
        )
    }

    /// Scales the box for an image decimated by `factor`, keeping coverage.
    pub fn downsampled(&self, factor: usize) -> Self {
        let f = factor as i32;
        let x0 = self.x.div_euclid(f);
        let y0 = self.y.div_euclid(f);
        let x1 = (self.x + self.w + f - 1).div_euclid(f);
        let y1 = (self.y + self.h + f - 1).div_euclid(f);
        Self {
            x: x0,
            y: y0,
            w: (x1 - x0).max(1),
            h: (y1 - y0).max(1),
            c: self.c,
        }
    }
}

/// Four-corner difference table; one prefix sum turns it into per-pixel sums
/// of every box that was added.
struct CornerDeltas {
    width: usize,
    height: usize,
    // (width + 1) × (height + 1) so the exclusive corners always fit.
    cells: Vec<f64>,
}

impl CornerDeltas {
    fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            cells: vec![0.0; (width + 1) * (height + 1)],
        }
    }

    #[inline]
    fn add(&mut self, p: &Proposal2D) {
        let (x0, y0, x1, y1) = p.window();
        let stride = self.width + 1;
        self.cells[y0 * stride + x0] += p.c;
        self.cells[y0 * stride + x1] -= p.c;
        self.cells[y1 * stride + x0] -= p.c;
        self.cells[y1 * stride + x1] += p.c;
    }

    fn integrate(self) -> Heatmap2D {
        let (w, h) = (self.width, self.height);
        let stride = w + 1;
        let mut out = vec![0.0; w * h];
        let mut above = vec![0.0; w];
        for v in 0..h {
            let mut row = 0.0;
            for u in 0..w {
                row += self.cells[v * stride + u];
                let val = above[u] + row;
                above[u] = val;
                // Cancellation of +c/-c pairs can leave values a few ulps
                // below zero.
                out[v * w + u] = val.max(0.0);
            }
        }
        Raster::from_vec(w, h, out)
    }
}

/// Baseline heatmap `Ĥ[u,v] = Σ_j c_j · [pixel inside box j]`, with boxes
/// covering `[x, x+w) × [y, y+h)`. Boxes are clipped to the image first.
pub fn baseline_heatmap(proposals: &[Proposal2D], width: usize, height: usize) -> Heatmap2D {
    let mut deltas = CornerDeltas::new(width, height);
    for p in proposals.iter().filter_map(|p| p.clipped(width, height)) {
        deltas.add(&p);
    }
    deltas.integrate()
}

/// Depth statistics over the valid (non-zero) pixels of a proposal window.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProposalDepthStats {
    pub z_min: f64,
    pub z_max: f64,
    /// Midpoint of the depth range, `(z_min + z_max) / 2`.
    pub z_mu: f64,
    pub delta_z: f64,
    pub valid_count: usize,
}

impl ProposalDepthStats {
    fn from_range(z_min: f64, z_max: f64, valid_count: usize) -> Self {
        if valid_count == 0 {
            return Self::default();
        }
        Self {
            z_min,
            z_max,
            z_mu: 0.5 * (z_min + z_max),
            delta_z: z_max - z_min,
            valid_count,
        }
    }

    pub fn has_depth(&self) -> bool {
        self.valid_count > 0
    }
}

/// Optional robust range: use these quantiles instead of the exact min/max.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercentileClamp {
    pub low: f64,
    pub high: f64,
}

impl Default for PercentileClamp {
    fn default() -> Self {
        Self {
            low: 0.01,
            high: 0.99,
        }
    }
}

#[inline]
fn valid_depth(z: f64) -> bool {
    z > 0.0 && z.is_finite()
}

/// Exact min/max depth statistics of a proposal window.
pub fn depth_stats(proposal: &Proposal2D, depth: &DepthImage) -> ProposalDepthStats {
    depth_stats_with(proposal, depth, None)
}

pub fn depth_stats_with(
    proposal: &Proposal2D,
    depth: &DepthImage,
    clamp: Option<PercentileClamp>,
) -> ProposalDepthStats {
    let Some(p) = proposal.clipped(depth.width(), depth.height()) else {
        return ProposalDepthStats::default();
    };
    window_stats(&p, depth, clamp, |_, _| true)
}

fn window_stats(
    p: &Proposal2D,
    depth: &DepthImage,
    clamp: Option<PercentileClamp>,
    mut keep: impl FnMut(usize, f64) -> bool,
) -> ProposalDepthStats {
    let (x0, y0, x1, y1) = p.window();
    let width = depth.width();
    let data = depth.as_slice();
    match clamp {
        None => {
            let (mut lo, mut hi, mut n) = (f64::INFINITY, f64::NEG_INFINITY, 0usize);
            for v in y0..y1 {
                let row = &data[v * width + x0..v * width + x1];
                for (i, &z) in row.iter().enumerate() {
                    if valid_depth(z) && keep(i + x0, z) {
                        lo = lo.min(z);
                        hi = hi.max(z);
                        n += 1;
                    }
                }
            }
            ProposalDepthStats::from_range(lo, hi, n)
        }
        Some(q) => {
            let mut values = Vec::with_capacity(p.area() as usize);
            for v in y0..y1 {
                for u in x0..x1 {
                    let z = data[v * width + u];
                    if valid_depth(z) && keep(u, z) {
                        values.push(z);
                    }
                }
            }
            if values.is_empty() {
                return ProposalDepthStats::default();
            }
            values.sort_by(f64::total_cmp);
            let pick = |f: f64| {
                let idx = (f.clamp(0.0, 1.0) * (values.len() - 1) as f64).round() as usize;
                values[idx]
            };
            ProposalDepthStats::from_range(pick(q.low), pick(q.high), values.len())
        }
    }
}

/// Whether a window is split into foreground and background, and where.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftSplit {
    /// Pixels deeper than this are background; `None` means nothing is
    /// masked (`ΔZ <= ε_Δ`).
    pub background_beyond: Option<f64>,
}

impl SoftSplit {
    pub fn new(stats: &ProposalDepthStats, eps_delta: f64) -> Self {
        let background_beyond = (stats.has_depth() && stats.delta_z > eps_delta).then_some(stats.z_mu);
        Self { background_beyond }
    }

    /// `δ_s` for one depth value. Missing depth is kept.
    #[inline]
    pub fn keeps(&self, z: f64) -> bool {
        match self.background_beyond {
            Some(mu) => !(z > mu),
            None => true,
        }
    }
}

/// Row-major `δ_s` mask over a proposal window.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub keep: Vec<bool>,
}

impl SoftMask {
    pub fn get(&self, u: usize, v: usize) -> bool {
        self.keep[(v - self.y) * self.w + (u - self.x)]
    }

    pub fn masked_count(&self) -> usize {
        self.keep.iter().filter(|k| !**k).count()
    }
}

/// Background mask `δ_s` of a proposal: a pixel is dropped iff its depth is
/// beyond `Z_μ` and the window depth range exceeds `eps_delta`.
pub fn soft_filter(
    proposal: &Proposal2D,
    depth: &DepthImage,
    stats: &ProposalDepthStats,
    eps_delta: f64,
) -> SoftMask {
    let Some(p) = proposal.clipped(depth.width(), depth.height()) else {
        return SoftMask {
            x: 0,
            y: 0,
            w: 0,
            h: 0,
            keep: Vec::new(),
        };
    };
    let split = SoftSplit::new(stats, eps_delta);
    let (x0, y0, x1, y1) = p.window();
    let mut keep = Vec::with_capacity(p.area() as usize);
    for v in y0..y1 {
        for u in x0..x1 {
            keep.push(split.keeps(depth.at(u, v)));
        }
    }
    SoftMask {
        x: x0,
        y: y0,
        w: x1 - x0,
        h: y1 - y0,
        keep,
    }
}

/// Depth statistics restricted to the pixels a soft split keeps.
pub fn foreground_stats(
    proposal: &Proposal2D,
    depth: &DepthImage,
    split: &SoftSplit,
    clamp: Option<PercentileClamp>,
) -> ProposalDepthStats {
    let Some(p) = proposal.clipped(depth.width(), depth.height()) else {
        return ProposalDepthStats::default();
    };
    window_stats(&p, depth, clamp, |_, z| split.keeps(z))
}

/// Metric width and height of a proposal seen at depth `z`.
#[inline]
pub fn metric_extent(proposal: &Proposal2D, z: f64, k: &Intrinsics) -> (f64, f64) {
    (
        proposal.w as f64 * z / k.fx,
        proposal.h as f64 * z / k.fy,
    )
}

/// `δ_h`: rejects a proposal when both metric extents are below `eps_min`,
/// or both are above `eps_max`, or when it has no foreground depth.
pub fn hard_filter(
    proposal: &Proposal2D,
    foreground: &ProposalDepthStats,
    k: &Intrinsics,
    eps_min: f64,
    eps_max: f64,
) -> bool {
    if !foreground.has_depth() {
        return false;
    }
    let (ew, eh) = metric_extent(proposal, foreground.z_mu, k);
    let too_small = ew < eps_min && eh < eps_min;
    let too_large = ew > eps_max && eh > eps_max;
    !(too_small || too_large)
}

/// Thresholds for the depth filters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub eps_delta: f64,
    pub eps_min: f64,
    pub eps_max: f64,
    pub percentile_clamp: Option<PercentileClamp>,
    pub soft_filter: bool,
    pub hard_filter: bool,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            eps_delta: 0.5,
            eps_min: 0.02,
            eps_max: 1.0,
            percentile_clamp: None,
            soft_filter: true,
            hard_filter: true,
        }
    }
}

/// Outcome of both filters for one proposal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterDecision {
    /// The clipped proposal, `None` when it falls outside the image.
    pub proposal: Option<Proposal2D>,
    /// `δ_h`.
    pub hard_accept: bool,
    pub split: SoftSplit,
    pub stats: ProposalDepthStats,
    pub foreground: ProposalDepthStats,
}

impl FilterDecision {
    /// Materializes the per-pixel `δ_s` mask.
    pub fn soft_mask(&self, depth: &DepthImage) -> Option<SoftMask> {
        let p = self.proposal?;
        let (x0, y0, x1, y1) = p.window();
        let mut keep = Vec::with_capacity(p.area() as usize);
        for v in y0..y1 {
            for u in x0..x1 {
                keep.push(self.split.keeps(depth.at(u, v)));
            }
        }
        Some(SoftMask {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
            keep,
        })
    }
}

pub fn filter_proposal(
    proposal: &Proposal2D,
    depth: &DepthImage,
    k: &Intrinsics,
    params: &FilterParams,
) -> FilterDecision {
    let Some(p) = proposal.clipped(depth.width(), depth.height()) else {
        return FilterDecision {
            proposal: None,
            hard_accept: false,
            split: SoftSplit {
                background_beyond: None,
            },
            stats: ProposalDepthStats::default(),
            foreground: ProposalDepthStats::default(),
        };
    };
    let stats = window_stats(&p, depth, params.percentile_clamp, |_, _| true);
    let split = if params.soft_filter {
        SoftSplit::new(&stats, params.eps_delta)
    } else {
        SoftSplit {
            background_beyond: None,
        }
    };
    let foreground = if split.background_beyond.is_some() {
        window_stats(&p, depth, params.percentile_clamp, |_, z| split.keeps(z))
    } else {
        stats
    };
    let hard_accept = if params.hard_filter {
        hard_filter(&p, &foreground, k, params.eps_min, params.eps_max)
    } else {
        true
    };
    FilterDecision {
        proposal: Some(p),
        hard_accept,
        split,
        stats,
        foreground,
    }
}

/// Counts of what the filters did to one frame's proposals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FilterSummary {
    pub total: usize,
    pub outside_image: usize,
    pub rejected: usize,
    pub masked: usize,
    pub untouched: usize,
}

#[derive(Debug, Clone)]
pub struct WeightedHeatmap {
    pub heatmap: Heatmap2D,
    pub summary: FilterSummary,
}

/// `H_2D[u,v] = Σ_j δ_h^j · δ_s^j[u,v] · c_j · [pixel inside box j]`.
///
/// Filter decisions are computed in parallel; accumulation is sequential in
/// input order so the result does not depend on the thread count.
pub fn weighted_heatmap(
    proposals: &[Proposal2D],
    depth: &DepthImage,
    k: &Intrinsics,
    params: &FilterParams,
) -> WeightedHeatmap {
    let (width, height) = (depth.width(), depth.height());
    let decisions: Vec<FilterDecision> = proposals
        .par_iter()
        .map(|p| filter_proposal(p, depth, k, params))
        .collect();

    let mut deltas = CornerDeltas::new(width, height);
    let mut dense: Option<Vec<f64>> = None;
    let mut summary = FilterSummary {
        total: proposals.len(),
        ..Default::default()
    };
    let data = depth.as_slice();
    for d in &decisions {
        let Some(p) = d.proposal else {
            summary.outside_image += 1;
            continue;
        };
        if !d.hard_accept {
            summary.rejected += 1;
            continue;
        }
        match d.split.background_beyond {
            None => {
                summary.untouched += 1;
                deltas.add(&p);
            }
            Some(mu) => {
                summary.masked += 1;
                let acc = dense.get_or_insert_with(|| vec![0.0; width * height]);
                let (x0, y0, x1, y1) = p.window();
                for v in y0..y1 {
                    let row = v * width;
                    for u in x0..x1 {
                        if !(data[row + u] > mu) {
                            acc[row + u] += p.c;
                        }
                    }
                }
            }
        }
    }
    let mut heatmap = deltas.integrate();
    if let Some(acc) = dense {
        for (h, a) in heatmap.as_mut_slice().iter_mut().zip(acc) {
            *h += a;
        }
    }
    WeightedHeatmap { heatmap, summary }
}

/// Intersection over union of two proposals as half-open pixel boxes.
pub fn proposal_iou(a: &Proposal2D, b: &Proposal2D) -> f64 {
    let ix = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0) as f64;
    let iy = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0) as f64;
    let inter = ix * iy;
    let union = (a.area() + b.area()) as f64 - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Greedy non-maximum suppression for visualization: walk proposals by
/// descending confidence and keep one unless it overlaps (IoU) an already
/// kept proposal by more than `overlap`.
pub fn nms_debug(proposals: &[Proposal2D], overlap: f64) -> Vec<Proposal2D> {
    let mut order: Vec<usize> = (0..proposals.len()).collect();
    order.sort_by(|&a, &b| proposals[b].c.total_cmp(&proposals[a].c).then(a.cmp(&b)));
    let mut kept: Vec<Proposal2D> = Vec::new();
    for i in order {
        let p = proposals[i];
        if kept.iter().all(|q| proposal_iou(&p, q) <= overlap) {
            kept.push(p);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// O(M·W·H) reference accumulation.
    fn naive_heatmap(proposals: &[Proposal2D], width: usize, height: usize) -> Heatmap2D {
        Raster::from_fn(width, height, |u, v| {
            let (u, v) = (u as i64, v as i64);
            proposals
                .iter()
                .filter(|p| {
                    u >= p.x as i64
                        && u < p.x as i64 + p.w as i64
                        && v >= p.y as i64
                        && v < p.y as i64 + p.h as i64
                })
                .map(|p| p.c)
                .sum()
        })
    }

    fn random_proposal(rng: &mut impl Rng, width: i32, height: i32) -> Proposal2D {
        let x = rng.random_range(-5..width);
        let y = rng.random_range(-5..height);
        Proposal2D::new(
            x,
            y,
            rng.random_range(1..=width),
            rng.random_range(1..=height),
            rng.random_range(0.0..2.0),
        )
    }

    fn k() -> Intrinsics {
        Intrinsics::new(500.0, 500.0, 8.0, 8.0, 16, 16).unwrap()
    }

    #[test]
    fn full_frame_box_is_uniform() {
        let h = baseline_heatmap(&[Proposal2D::new(0, 0, 7, 5, 3.0)], 7, 5);
        assert!(h.as_slice().iter().all(|&x| x == 3.0));
    }

    #[test]
    fn empty_is_zero() {
        let h = baseline_heatmap(&[], 4, 3);
        assert!(h.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn matches_naive_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let props: Vec<_> = (0..100).map(|_| random_proposal(&mut rng, 16, 16)).collect();
        let fast = baseline_heatmap(&props, 16, 16);
        let slow = naive_heatmap(&props, 16, 16);
        let scale = slow.max_value();
        for (a, b) in fast.as_slice().iter().zip(slow.as_slice()) {
            assert!((a - b).abs() <= 1e-9 * scale.max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn stats_uniform_and_split() {
        let depth = Raster::filled(16, 16, 1.0);
        let s = depth_stats(&Proposal2D::new(2, 2, 4, 4, 1.0), &depth);
        assert_eq!((s.z_min, s.z_max, s.z_mu, s.delta_z, s.valid_count), (1.0, 1.0, 1.0, 0.0, 16));

        let depth = Raster::from_fn(16, 16, |u, _| if u < 8 { 1.0 } else { 2.0 });
        let s = depth_stats(&Proposal2D::new(4, 0, 8, 16, 1.0), &depth);
        assert_eq!(s.z_mu, 1.5);
        assert_eq!(s.delta_z, 1.0);

        let depth = Raster::filled(16, 16, 0.0);
        assert_eq!(depth_stats(&Proposal2D::new(0, 0, 4, 4, 1.0), &depth).valid_count, 0);
    }

    #[test]
    fn percentile_clamp_ignores_outliers() {
        let mut depth = Raster::filled(10, 10, 1.0);
        *depth.get_mut(0, 0) = 9.0;
        let p = Proposal2D::new(0, 0, 10, 10, 1.0);
        assert_eq!(depth_stats(&p, &depth).z_max, 9.0);
        let s = depth_stats_with(&p, &depth, Some(PercentileClamp::default()));
        assert_eq!(s.z_max, 1.0);
    }

    #[test]
    fn soft_filter_masks_exactly_the_background() {
        // Foreground plateau at 1 m in the left half, background 2 m.
        let depth = Raster::from_fn(16, 16, |u, _| if u < 6 { 1.0 } else { 2.0 });
        let p = Proposal2D::new(2, 3, 10, 8, 1.0);
        let stats = depth_stats(&p, &depth);
        assert_eq!(stats.z_mu, 1.5);
        let mask = soft_filter(&p, &depth, &stats, 0.5);
        for v in 3..11 {
            for u in 2..12 {
                assert_eq!(mask.get(u, v), *depth.get(u, v) <= 1.5, "({u},{v})");
            }
        }
        assert_eq!(mask.masked_count(), 6 * 8);
    }

    #[test]
    fn soft_filter_inactive_for_small_range() {
        let depth = Raster::from_fn(16, 16, |u, _| 1.0 + 0.01 * u as f64);
        let p = Proposal2D::new(0, 0, 16, 16, 1.0);
        let stats = depth_stats(&p, &depth);
        let mask = soft_filter(&p, &depth, &stats, 0.5);
        assert_eq!(mask.masked_count(), 0);
    }

    #[test]
    fn hard_filter_cases() {
        let k = Intrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
        let stats = |z: f64| ProposalDepthStats::from_range(z, z, 10);
        // 100 px at 0.5 m with fx = 500 is 0.1 m.
        assert!(hard_filter(&Proposal2D::new(0, 0, 100, 100, 1.0), &stats(0.5), &k, 0.02, 1.0));
        // 3 m × 1 cm stick survives.
        assert!(hard_filter(&Proposal2D::new(0, 0, 600, 2, 1.0), &stats(2.5), &k, 0.02, 1.0));
        // both extents tiny / both huge
        assert!(!hard_filter(&Proposal2D::new(0, 0, 5, 5, 1.0), &stats(1.0), &k, 0.02, 1.0));
        assert!(!hard_filter(&Proposal2D::new(0, 0, 400, 400, 1.0), &stats(2.0), &k, 0.02, 1.0));
        // no depth
        assert!(!hard_filter(&Proposal2D::new(0, 0, 100, 100, 1.0), &ProposalDepthStats::default(), &k, 0.02, 1.0));
    }

    #[test]
    fn weighted_equals_baseline_when_filters_are_identity() {
        let depth = Raster::filled(16, 16, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // 4..16 px at 1 m with fx = 500 stays within [2 cm, 1 m] on some axis
        let props: Vec<_> = (0..40)
            .map(|_| {
                Proposal2D::new(
                    rng.random_range(0..8),
                    rng.random_range(0..8),
                    rng.random_range(10..=16),
                    rng.random_range(10..=16),
                    rng.random_range(0.0..1.0),
                )
            })
            .collect();
        let w = weighted_heatmap(&props, &depth, &k(), &FilterParams::default());
        assert_eq!(w.heatmap, baseline_heatmap(&props, 16, 16));
        assert_eq!(w.summary.untouched, 40);
    }

    #[test]
    fn spanning_proposal_loses_its_background() {
        // Table-spanning proposal: left part at 1 m (object), right at 2 m.
        let depth = Raster::from_fn(16, 16, |u, _| if u < 8 { 1.0 } else { 2.0 });
        let spanning = Proposal2D::new(0, 0, 16, 16, 1.0);
        let object = Proposal2D::new(1, 1, 6, 6, 0.5);
        // 6 px at 1 m is 6 cm under fx = 100
        let k = Intrinsics::new(100.0, 100.0, 8.0, 8.0, 16, 16).unwrap();
        let w = weighted_heatmap(&[spanning, object], &depth, &k, &FilterParams::default());
        for v in 0..16 {
            for u in 0..16 {
                let mut expect = if u < 8 { 1.0 } else { 0.0 };
                if (1..7).contains(&u) && (1..7).contains(&v) {
                    expect += 0.5;
                }
                assert_eq!(w.heatmap.at(u, v), expect);
            }
        }
        assert_eq!(w.summary.masked, 1);
    }

    #[test]
    fn no_depth_proposal_rejected() {
        let depth = Raster::from_fn(16, 16, |u, _| if u < 8 { 0.0 } else { 1.0 });
        let p = Proposal2D::new(0, 0, 8, 8, 1.0);
        let w = weighted_heatmap(&[p], &depth, &k(), &FilterParams::default());
        assert_eq!(w.summary.rejected, 1);
        assert_eq!(w.heatmap.max_value(), 0.0);
    }

    #[test]
    fn nms_basic() {
        let a = Proposal2D::new(0, 0, 10, 10, 0.9);
        let b = Proposal2D::new(0, 0, 10, 10, 0.5);
        assert_eq!(nms_debug(&[b, a], 0.1), vec![a]);
        let c = Proposal2D::new(20, 20, 5, 5, 0.1);
        assert_eq!(nms_debug(&[c, a], 0.1), vec![a, c]);
    }

    #[test]
    fn nms_matches_bruteforce_reference() {
        // Reference: repeatedly pick the best remaining proposal and discard
        // everything overlapping it.
        fn reference(props: &[Proposal2D], overlap: f64) -> Vec<Proposal2D> {
            let mut remaining: Vec<(usize, Proposal2D)> = props.iter().copied().enumerate().collect();
            let mut out = Vec::new();
            while !remaining.is_empty() {
                let best = (0..remaining.len())
                    .max_by(|&i, &j| {
                        remaining[i].1.c.total_cmp(&remaining[j].1.c).then(remaining[j].0.cmp(&remaining[i].0))
                    })
                    .unwrap();
                let (_, keep) = remaining.remove(best);
                remaining.retain(|(_, q)| proposal_iou(&keep, q) <= overlap);
                out.push(keep);
            }
            out
        }
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let props: Vec<_> = (0..60).map(|_| random_proposal(&mut rng, 64, 48)).collect();
            assert_eq!(nms_debug(&props, 0.1), reference(&props, 0.1));
        }
    }

    #[test]
    fn clipping() {
        let p = Proposal2D::new(-3, 5, 10, 10, 1.0).clipped(6, 8).unwrap();
        assert_eq!((p.x, p.y, p.w, p.h), (0, 5, 6, 3));
        assert!(Proposal2D::new(10, 0, 3, 3, 1.0).clipped(6, 8).is_none());
    }
}
