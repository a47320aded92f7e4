//! Supporting-plane detection and suppression.
//!
//! Every keyframe runs a RANSAC over locally sampled point triples, keeps the
//! top distinct planes by inlier count, and picks the one whose inliers carry
//! the most heatmap confidence. That plane is then zeroed out of the weighted
//! heatmap until the next keyframe. Keyframe planes are kept in a
//! [`PlaneTrack`] for the final clean-up of the fused cloud.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{FrameCloud, Point3, GRAVITY_UP};
use crate::proposals2d::Heatmap2D;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlaneError {
    #[error("degenerate sample: points are collinear")]
    Degenerate,
    #[error("no plane: {0}")]
    NoPlane(&'static str),
}

/// `n·x + b = 0` with `|n| = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl Plane {
    /// Normalizes `normal` and scales `offset` accordingly.
    pub fn new(normal: Vector3<f64>, offset: f64) -> Option<Self> {
        let n = normal.norm();
        if !(n > 0.0 && n.is_finite() && offset.is_finite()) {
            return None;
        }
        Some(Self {
            normal: normal / n,
            offset: offset / n,
        })
    }

    /// Plane through three points, normal `(x2-x1)×(x3-x1)` normalized and
    /// `b = -n·x1`.
    pub fn from_points(x1: &Point3, x2: &Point3, x3: &Point3) -> Result<Self, PlaneError> {
        let cross = (x2 - x1).cross(&(x3 - x1));
        let norm = cross.norm();
        if !(norm >= 1e-12) {
            return Err(PlaneError::Degenerate);
        }
        let normal = cross / norm;
        Ok(Self {
            normal,
            offset: -normal.dot(x1),
        })
    }

    /// Total least squares plane: centroid plus the direction of least
    /// variance. `None` for fewer than three points or a degenerate spread.
    pub fn least_squares<'a>(points: impl IntoIterator<Item = &'a Point3>) -> Option<Self> {
        let pts: Vec<&Point3> = points.into_iter().collect();
        if pts.len() < 3 {
            return None;
        }
        let n = pts.len() as f64;
        let centroid = pts.iter().fold(Vector3::zeros(), |acc, p| acc + *p) / n;
        let mut cov = Matrix3::zeros();
        for p in &pts {
            let d = *p - centroid;
            cov += d * d.transpose();
        }
        let eig = SymmetricEigen::new(cov);
        let (imin, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))?;
        let mut sorted = eig.eigenvalues.as_slice().to_vec();
        sorted.sort_by(f64::total_cmp);
        if !(sorted[1] > 0.0) {
            return None;
        }
        let normal: Vector3<f64> = eig.eigenvectors.column(imin).into_owned();
        Plane::new(normal, -normal.dot(&centroid))
    }

    #[inline]
    pub fn signed_distance(&self, x: &Point3) -> f64 {
        self.normal.dot(x) + self.offset
    }

    /// `|pᵀ[x;1]| < eps`.
    #[inline]
    pub fn is_inlier(&self, x: &Point3, eps: f64) -> bool {
        self.signed_distance(x).abs() < eps
    }

    /// Same plane with the sign fixed so the normal points up (`n·y >= 0`);
    /// vertical planes get their largest normal component positive.
    pub fn canonical(&self) -> Self {
        let d = self.normal.dot(&GRAVITY_UP);
        let flip = if d.abs() > 1e-12 {
            d < 0.0
        } else {
            let imax = self.normal.iamax();
            self.normal[imax] < 0.0
        };
        if flip {
            Self {
                normal: -self.normal,
                offset: -self.offset,
            }
        } else {
            *self
        }
    }

    /// Angle between the two normals in degrees, ignoring orientation.
    pub fn angle_deg(&self, other: &Plane) -> f64 {
        self.normal.dot(&other.normal).abs().min(1.0).acos().to_degrees()
    }

    /// Offset difference after bringing both planes to a common orientation.
    pub fn offset_gap(&self, other: &Plane) -> f64 {
        let s = if self.normal.dot(&other.normal) < 0.0 { -1.0 } else { 1.0 };
        (self.offset - s * other.offset).abs()
    }

    pub fn is_similar(&self, other: &Plane, angle_deg: f64, offset: f64) -> bool {
        self.angle_deg(other) <= angle_deg && self.offset_gap(other) <= offset
    }
}

/// Indices of the points within `eps` of the plane.
pub fn plane_inliers(plane: &Plane, points: &[Point3], eps: f64) -> Vec<usize> {
    points
        .iter()
        .enumerate()
        .filter(|(_, x)| plane.is_inlier(x, eps))
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacParams {
    pub iterations: usize,
    pub eps_p: f64,
    pub top_k: usize,
    /// Side of the square pixel window the three samples are drawn from.
    pub window: usize,
    /// Hypotheses are scored on every `stride`-th pixel in both directions.
    pub stride: usize,
    /// Least-squares re-fit rounds applied to each returned plane.
    pub refine_rounds: usize,
    pub distinct_angle_deg: f64,
    pub distinct_offset: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            eps_p: 0.005,
            top_k: 5,
            window: 11,
            stride: 2,
            refine_rounds: 2,
            distinct_angle_deg: 10.0,
            distinct_offset: 0.05,
            seed: 0,
        }
    }
}

/// One plane hypothesis with its support over the full frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneCandidate {
    pub plane: Plane,
    /// Indices into the frame cloud.
    pub inliers: Vec<usize>,
    /// `Σ H_2D` over the inlier pixels.
    pub heat: f64,
}

fn sample_triple(cloud: &FrameCloud, half: usize, rng: &mut ChaCha8Rng) -> Option<[usize; 3]> {
    let first = rng.random_range(0..cloud.len());
    let (u, v) = cloud.pixel_of(first);
    let u0 = u.saturating_sub(half);
    let v0 = v.saturating_sub(half);
    let u1 = (u + half).min(cloud.width - 1);
    let v1 = (v + half).min(cloud.height - 1);
    let mut picks = [first, first, first];
    for slot in 1..3 {
        let mut found = None;
        for _ in 0..32 {
            let su = rng.random_range(u0..=u1);
            let sv = rng.random_range(v0..=v1);
            if let Some(i) = cloud.point_at(su, sv) {
                if !picks[..slot].contains(&i) {
                    found = Some(i);
                    break;
                }
            }
        }
        picks[slot] = found?;
    }
    Some(picks)
}

/// Alternates a least-squares fit to the inliers with re-selecting them.
///
/// The fit is always taken: a hypothesis tilted within the `eps` band can
/// hold more points than the true plane, so the inlier count is no test of
/// which one is better.
fn refine(plane: Plane, cloud: &FrameCloud, eps: f64, rounds: usize) -> (Plane, Vec<usize>) {
    let mut plane = plane;
    let mut inliers = plane_inliers(&plane, &cloud.points, eps);
    for _ in 0..rounds {
        let Some(fit) = Plane::least_squares(inliers.iter().map(|&i| &cloud.points[i])) else {
            break;
        };
        let next = plane_inliers(&fit, &cloud.points, eps);
        if next.len() < 3 {
            break;
        }
        plane = fit;
        if next == inliers {
            break;
        }
        inliers = next;
    }
    (plane, inliers)
}

/// Heat-annotated top-`k` distinct planes of one frame.
///
/// Hypotheses are drawn sequentially from a seeded generator and scored in
/// parallel, so the result only depends on `params.seed`.
pub fn ransac_top_planes(
    cloud: &FrameCloud,
    heatmap: &Heatmap2D,
    params: &RansacParams,
) -> Result<Vec<PlaneCandidate>, PlaneError> {
    if cloud.len() < 3 {
        return Err(PlaneError::NoPlane("fewer than three valid depth pixels"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let half = params.window / 2;
    let hypotheses: Vec<Plane> = (0..params.iterations)
        .filter_map(|_| {
            let [a, b, c] = sample_triple(cloud, half, &mut rng)?;
            Plane::from_points(&cloud.points[a], &cloud.points[b], &cloud.points[c]).ok()
        })
        .collect();
    if hypotheses.is_empty() {
        return Err(PlaneError::NoPlane("no non-degenerate sample"));
    }

    let stride = params.stride.max(1);
    let subsample: Vec<Point3> = cloud
        .points
        .iter()
        .enumerate()
        .filter(|(i, _)| {
            let (u, v) = cloud.pixel_of(*i);
            u % stride == 0 && v % stride == 0
        })
        .map(|(_, p)| *p)
        .collect();
    let scoring = if subsample.len() >= 3 { &subsample } else { &cloud.points };
    let eps = params.eps_p;
    let scores: Vec<usize> = hypotheses
        .par_iter()
        .map(|h| scoring.iter().filter(|x| h.is_inlier(x, eps)).count())
        .collect();

    let mut order: Vec<usize> = (0..hypotheses.len()).collect();
    order.sort_by(|&a, &b| scores[b].cmp(&scores[a]).then(a.cmp(&b)));
    let mut chosen: Vec<Plane> = Vec::with_capacity(params.top_k);
    for i in order {
        if chosen.len() == params.top_k {
            break;
        }
        let h = hypotheses[i];
        if chosen
            .iter()
            .all(|c| !c.is_similar(&h, params.distinct_angle_deg, params.distinct_offset))
        {
            chosen.push(h);
        }
    }

    let heat = heatmap.as_slice();
    let mut candidates: Vec<PlaneCandidate> = chosen
        .into_par_iter()
        .map(|p| {
            let (plane, inliers) = refine(p, cloud, eps, params.refine_rounds);
            let heat = inliers.iter().map(|&i| heat[cloud.pixels[i] as usize]).sum();
            PlaneCandidate {
                plane: plane.canonical(),
                inliers,
                heat,
            }
        })
        .collect();
    candidates.sort_by(|a, b| b.inliers.len().cmp(&a.inliers.len()));
    // distinct hypotheses can converge onto the same surface
    let mut distinct: Vec<PlaneCandidate> = Vec::with_capacity(candidates.len());
    for c in candidates {
        if distinct
            .iter()
            .all(|d| !d.plane.is_similar(&c.plane, params.distinct_angle_deg, params.distinct_offset))
        {
            distinct.push(c);
        }
    }
    Ok(distinct)
}

/// Index of the candidate with the largest accumulated heat; ties go to the
/// larger inlier set, then the earlier candidate.
pub fn select_support_plane(candidates: &[PlaneCandidate]) -> Result<usize, PlaneError> {
    candidates
        .iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| {
            a.heat
                .total_cmp(&b.heat)
                .then(a.inliers.len().cmp(&b.inliers.len()))
                .then(j.cmp(i))
        })
        .map(|(i, _)| i)
        .ok_or(PlaneError::NoPlane("empty candidate list"))
}

/// Zeroes the heat of every pixel whose world point lies on `plane`.
pub fn suppress_plane(heatmap: &Heatmap2D, plane: &Plane, cloud: &FrameCloud, eps: f64) -> Heatmap2D {
    let mut out = heatmap.clone();
    let data = out.as_mut_slice();
    for (p, &pix) in cloud.points.iter().zip(&cloud.pixels) {
        if plane.is_inlier(p, eps) {
            data[pix as usize] = 0.0;
        }
    }
    out
}

/// Keyframe plane recorded in the track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackEntry {
    pub frame: usize,
    pub plane: Plane,
    pub heat: f64,
    pub inliers: usize,
}

/// Keyframe history of selected supporting planes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlaneTrack {
    pub entries: Vec<TrackEntry>,
}

impl PlaneTrack {
    pub fn current(&self) -> Option<&Plane> {
        self.entries.last().map(|e| &e.plane)
    }
}

/// Derives the RANSAC seed of one keyframe from the run seed.
pub fn keyframe_seed(seed: u64, frame: usize) -> u64 {
    seed ^ (frame as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Plane to suppress in frame `frame`.
///
/// Frames with `frame % interval == 0` are keyframes and re-run plane
/// selection; the result is appended to the track. Other frames reuse the
/// last keyframe plane, which lives in world coordinates and so applies to
/// the current view directly. `None` until a keyframe has found a plane.
pub fn track_keyframe(
    track: &mut PlaneTrack,
    frame: usize,
    interval: usize,
    cloud: &FrameCloud,
    heatmap: &Heatmap2D,
    params: &RansacParams,
) -> Option<Plane> {
    if frame % interval.max(1) == 0 {
        let p = RansacParams {
            seed: keyframe_seed(params.seed, frame),
            ..*params
        };
        if let Ok(candidates) = ransac_top_planes(cloud, heatmap, &p) {
            if let Ok(best) = select_support_plane(&candidates) {
                let c = &candidates[best];
                track.entries.push(TrackEntry {
                    frame,
                    plane: c.plane,
                    heat: c.heat,
                    inliers: c.inliers.len(),
                });
            }
        }
    }
    track.current().copied()
}
