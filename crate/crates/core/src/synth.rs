//! Deterministic synthetic tabletop scenes with exact ground truth.
//!
//! Depth is rendered by analytic ray casting against a floor plane, a table
//! block and box or sphere objects resting on the table top. Colors are flat
//! per primitive. Noise is applied after labeling, from random streams
//! derived from `(seed, frame)`, so every frame renders identically on every
//! run and in any order.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataio::{self, BoxRecord, CameraFile, DataError, FrameEntry, FrameRecord, GroundTruthPaths, GtBox2D, Label, SequenceManifest, StampedPose};
use crate::geometry::{Intrinsics, Point3, Pose};
use crate::metrics::EvalBox2D;
use crate::proposals2d::Proposal2D;
use crate::proposals3d::Box3D;
use crate::raster::{Raster, Rgb};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraSpec {
    /// 320 × 240 with the focal length of a VGA sensor halved.
    pub fn qvga() -> Self {
        Self {
            width: 320,
            height: 240,
            fx: 262.5,
            fy: 262.5,
            cx: 159.5,
            cy: 119.5,
        }
    }

    pub fn vga() -> Self {
        Self {
            width: 640,
            height: 480,
            fx: 525.0,
            fy: 525.0,
            cx: 319.5,
            cy: 239.5,
        }
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height).expect("valid camera spec")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSpec {
    /// Center of the footprint on the floor, `[x, z]`.
    pub center: [f64; 2],
    /// Footprint `[x, z]` extent.
    pub size: [f64; 2],
    /// Height of the top surface above the floor.
    pub height: f64,
    pub color: Rgb,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Shape {
    Box { size: [f64; 3] },
    Sphere { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub shape: Shape,
    /// Footprint center on the table top, `[x, z]`.
    pub position: [f64; 2],
    pub color: Rgb,
}

/// Orbit around `target` at fixed camera height; optionally the look-at
/// point slides from `pan_from` to `target` over the first `pan_frames`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub frames: usize,
    pub target: [f64; 3],
    pub radius: f64,
    pub height: f64,
    pub start_deg: f64,
    pub span_deg: f64,
    #[serde(default)]
    pub pan_from: Option<[f64; 3]>,
    #[serde(default)]
    pub pan_frames: usize,
    pub fps: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Gaussian depth noise in meters.
    pub depth_sigma: f64,
    /// Probability of a valid pixel losing its depth.
    pub missing_prob: f64,
    /// Reported pose perturbation, degrees and meters (standard deviations).
    #[serde(default)]
    pub pose_rot_deg: f64,
    #[serde(default)]
    pub pose_trans: f64,
}

/// Stand-in for an external 2D proposal generator.
///
/// Every visible object contributes `gt_copies` jittered copies of its true
/// box with confidence drawn from `gt_conf`; they come first. Distractors
/// follow with confidence `distractor_conf / (1 + j/decay)²` for the `j`-th
/// one, so the total distractor heat stays bounded as their number grows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalModel {
    pub gt_copies: usize,
    pub jitter_sigma: f64,
    pub gt_conf: [f64; 2],
    pub distractors: usize,
    /// When set, the list is truncated or padded with distractors to exactly
    /// this length and `distractors` is ignored.
    #[serde(default)]
    pub total: Option<usize>,
    pub distractor_conf: f64,
    #[serde(default)]
    pub distractor_decay: Option<f64>,
    /// Side range of distractors as a fraction of the image size.
    pub distractor_size: [f64; 2],
    /// Distractors whose IoU with a true box exceeds this are redrawn.
    #[serde(default)]
    pub distractor_max_iou: Option<f64>,
}

impl Default for ProposalModel {
    fn default() -> Self {
        Self {
            gt_copies: 6,
            jitter_sigma: 2.0,
            gt_conf: [0.6, 1.0],
            distractors: 100,
            total: None,
            distractor_conf: 0.2,
            distractor_decay: Some(10.0),
            distractor_size: [0.05, 0.4],
            distractor_max_iou: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    pub camera: CameraSpec,
    pub floor_color: Rgb,
    pub table: Option<TableSpec>,
    pub objects: Vec<ObjectSpec>,
    pub trajectory: Trajectory,
    pub noise: NoiseSpec,
    pub proposals: ProposalModel,
}

const PALETTE: [Rgb; 8] = [
    [0.85, 0.15, 0.15],
    [0.15, 0.65, 0.2],
    [0.2, 0.3, 0.85],
    [0.9, 0.8, 0.1],
    [0.7, 0.2, 0.75],
    [0.1, 0.75, 0.8],
    [0.95, 0.5, 0.1],
    [0.95, 0.95, 0.95],
];

impl SceneSpec {
    /// Table with `n_objects` randomly sized and placed objects, orbited by a
    /// QVGA camera for `frames` frames.
    pub fn tabletop(seed: u64, n_objects: usize, frames: usize) -> Self {
        let table = TableSpec {
            center: [0.0, 0.0],
            size: [1.2, 0.8],
            height: 0.75,
            color: [0.55, 0.4, 0.25],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let objects = place_objects(&mut rng, &table, n_objects);
        Self {
            seed,
            camera: CameraSpec::qvga(),
            floor_color: [0.45, 0.45, 0.5],
            table: Some(table),
            objects,
            trajectory: Trajectory {
                frames,
                target: [0.0, table.height, 0.0],
                radius: 1.0,
                height: 1.3,
                start_deg: -30.0,
                span_deg: 60.0,
                pan_from: None,
                pan_frames: 0,
                fps: 30.0,
            },
            noise: NoiseSpec {
                depth_sigma: 0.001,
                missing_prob: 0.01,
                pose_rot_deg: 0.0,
                pose_trans: 0.0,
            },
            proposals: ProposalModel::default(),
        }
    }

    /// Tabletop whose camera first looks at the floor beside the table and
    /// pans onto the table during the first half of the sequence.
    pub fn pan(seed: u64, n_objects: usize, frames: usize) -> Self {
        let mut s = Self::tabletop(seed, n_objects, frames);
        s.trajectory.pan_from = Some([0.0, 0.0, -1.2]);
        s.trajectory.pan_frames = frames / 2;
        s.trajectory.start_deg = -10.0;
        s.trajectory.span_deg = 20.0;
        s
    }

    pub fn intrinsics(&self) -> Intrinsics {
        self.camera.intrinsics()
    }

    pub fn frame_count(&self) -> usize {
        self.trajectory.frames
    }

    pub fn table_top(&self) -> f64 {
        self.table.map_or(0.0, |t| t.height)
    }

    /// World-space primitive of object `i`.
    pub fn object_primitive(&self, i: usize) -> Primitive {
        let o = &self.objects[i];
        let top = self.table_top();
        match o.shape {
            Shape::Box { size } => Primitive::Aabb {
                min: Vector3::new(o.position[0] - size[0] / 2.0, top, o.position[1] - size[2] / 2.0),
                max: Vector3::new(o.position[0] + size[0] / 2.0, top + size[1], o.position[1] + size[2] / 2.0),
            },
            Shape::Sphere { radius } => Primitive::Sphere {
                center: Vector3::new(o.position[0], top + radius, o.position[1]),
                radius,
            },
        }
    }

    pub fn table_primitive(&self) -> Option<Primitive> {
        self.table.map(|t| Primitive::Aabb {
            min: Vector3::new(t.center[0] - t.size[0] / 2.0, 0.0, t.center[1] - t.size[1] / 2.0),
            max: Vector3::new(t.center[0] + t.size[0] / 2.0, t.height, t.center[1] + t.size[1] / 2.0),
        })
    }

    /// True camera pose of frame `i`.
    pub fn pose(&self, i: usize) -> Pose {
        let t = &self.trajectory;
        let a = if t.frames > 1 { i as f64 / (t.frames - 1) as f64 } else { 0.0 };
        let theta = (t.start_deg + t.span_deg * a).to_radians();
        let target = Vector3::from(t.target);
        let look = match t.pan_from {
            Some(from) if i < t.pan_frames => {
                let s = i as f64 / t.pan_frames as f64;
                let s = s * s * (3.0 - 2.0 * s);
                Vector3::from(from) * (1.0 - s) + target * s
            }
            _ => target,
        };
        let eye = Vector3::new(target.x + t.radius * theta.sin(), t.height, target.z - t.radius * theta.cos());
        Pose::look_at(&eye, &look)
    }

    pub fn timestamp(&self, i: usize) -> f64 {
        i as f64 / self.trajectory.fps
    }
}

fn place_objects(rng: &mut ChaCha8Rng, table: &TableSpec, n: usize) -> Vec<ObjectSpec> {
    const MARGIN: f64 = 0.15;
    const GAP: f64 = 0.08;
    let mut out: Vec<(ObjectSpec, f64)> = Vec::new();
    let mut attempts = 0;
    while out.len() < n && attempts < 10_000 {
        attempts += 1;
        let shape = if rng.random_bool(0.7) {
            Shape::Box {
                size: [rng.random_range(0.06..0.15), rng.random_range(0.06..0.18), rng.random_range(0.06..0.15)],
            }
        } else {
            Shape::Sphere {
                radius: rng.random_range(0.035..0.07),
            }
        };
        // Bounding-circle radius of the footprint.
        let reach = match shape {
            Shape::Box { size } => 0.5 * (size[0].hypot(size[2])),
            Shape::Sphere { radius } => radius,
        };
        let hx = table.size[0] / 2.0 - MARGIN - reach;
        let hz = table.size[1] / 2.0 - MARGIN - reach;
        if hx <= 0.0 || hz <= 0.0 {
            continue;
        }
        let p = [
            table.center[0] + rng.random_range(-hx..hx),
            table.center[1] + rng.random_range(-hz..hz),
        ];
        if out
            .iter()
            .any(|(o, r)| (o.position[0] - p[0]).hypot(o.position[1] - p[1]) < r + reach + GAP)
        {
            continue;
        }
        let color = PALETTE[out.len() % PALETTE.len()];
        out.push((ObjectSpec { shape, position: p, color }, reach));
    }
    out.into_iter().map(|(o, _)| o).collect()
}

/// Analytic primitive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    Aabb { min: Vector3<f64>, max: Vector3<f64> },
    Sphere { center: Vector3<f64>, radius: f64 },
}

impl Primitive {
    /// Smallest `t > 0` with `o + t·d` on the surface.
    pub fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
        match *self {
            Primitive::Aabb { min, max } => {
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for k in 0..3 {
                    if d[k] == 0.0 {
                        if o[k] < min[k] || o[k] > max[k] {
                            return None;
                        }
                        continue;
                    }
                    let a = (min[k] - o[k]) / d[k];
                    let b = (max[k] - o[k]) / d[k];
                    t0 = t0.max(a.min(b));
                    t1 = t1.min(a.max(b));
                }
                (t0 <= t1 && t0 > 0.0).then_some(t0)
            }
            Primitive::Sphere { center, radius } => {
                let oc = o - center;
                let a = d.dot(d);
                let b = 2.0 * d.dot(&oc);
                let c = oc.dot(&oc) - radius * radius;
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return None;
                }
                let t = (-b - disc.sqrt()) / (2.0 * a);
                (t > 0.0).then_some(t)
            }
        }
    }

    pub fn bounds(&self) -> Box3D {
        match *self {
            Primitive::Aabb { min, max } => Box3D::axis_aligned(min, max),
            Primitive::Sphere { center, radius } => {
                Box3D::axis_aligned(center - Vector3::repeat(radius), center + Vector3::repeat(radius))
            }
        }
    }

    /// Distance from `x` to the surface.
    pub fn surface_distance(&self, x: &Point3) -> f64 {
        match *self {
            Primitive::Sphere { center, radius } => ((x - center).norm() - radius).abs(),
            Primitive::Aabb { min, max } => {
                let outside = Vector3::from_fn(|k, _| (min[k] - x[k]).max(x[k] - max[k]).max(0.0));
                if outside.norm() > 0.0 {
                    outside.norm()
                } else {
                    (0..3).map(|k| (x[k] - min[k]).min(max[k] - x[k])).fold(f64::INFINITY, f64::min)
                }
            }
        }
    }
}

/// Nearest hit of the camera ray through pixel `(u, v)`: `(depth, label)`.
pub fn cast(spec: &SceneSpec, k: &Intrinsics, pose: &Pose, u: f64, v: f64) -> (f64, Label) {
    let o = pose.center();
    let dc = Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
    let d = pose.rotation.transpose() * dc;
    let mut best = (f64::INFINITY, Label::Empty);
    if d.y != 0.0 {
        let t = -o.y / d.y;
        if t > 0.0 {
            best = (t, Label::Floor);
        }
    }
    if let Some(table) = spec.table_primitive() {
        if let Some(t) = table.intersect(&o, &d) {
            if t < best.0 {
                best = (t, Label::Table);
            }
        }
    }
    for i in 0..spec.objects.len() {
        if let Some(t) = spec.object_primitive(i).intersect(&o, &d) {
            if t < best.0 {
                best = (t, Label::Object(i as u16));
            }
        }
    }
    if best.0.is_finite() {
        best
    } else {
        (0.0, Label::Empty)
    }
}

/// Purpose tags for derived random streams.
const STREAM_NOISE: u64 = 0x6e6f_6973_6500_0000;
const STREAM_PROPOSALS: u64 = 0x7072_6f70_0000_0000;
const STREAM_POSE: u64 = 0x706f_7365_0000_0000;

fn stream(seed: u64, purpose: u64, frame: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ purpose);
    rng.set_stream(frame as u64);
    rng
}

/// Noise-free render of frame `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanFrame {
    pub pose: Pose,
    pub depth: Raster<f64>,
    pub labels: Raster<Label>,
}

pub fn render_clean(spec: &SceneSpec, i: usize) -> CleanFrame {
    let k = spec.intrinsics();
    let pose = spec.pose(i);
    let hits = Raster::from_fn(k.width, k.height, |u, v| cast(spec, &k, &pose, u as f64, v as f64));
    CleanFrame {
        pose,
        depth: hits.map(|h| h.0),
        labels: hits.map(|h| h.1),
    }
}

/// A rendered frame with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    pub record: FrameRecord,
    pub true_pose: Pose,
    pub labels: Raster<Label>,
    /// Tight box of each visible object's pixels.
    pub gt_boxes: Vec<(u16, EvalBox2D)>,
}

/// Tight half-open pixel box of every object label present.
pub fn label_boxes(labels: &Raster<Label>) -> Vec<(u16, EvalBox2D)> {
    let mut ext: HashMap<u16, [usize; 4]> = HashMap::new();
    for v in 0..labels.height() {
        for u in 0..labels.width() {
            if let Label::Object(i) = labels.at(u, v) {
                let e = ext.entry(i).or_insert([u, v, u, v]);
                e[0] = e[0].min(u);
                e[1] = e[1].min(v);
                e[2] = e[2].max(u);
                e[3] = e[3].max(v);
            }
        }
    }
    let mut out: Vec<(u16, EvalBox2D)> = ext
        .into_iter()
        .map(|(i, e)| {
            (
                i,
                EvalBox2D::new(e[0] as f64, e[1] as f64, (e[2] - e[0] + 1) as f64, (e[3] - e[1] + 1) as f64),
            )
        })
        .collect();
    out.sort_by_key(|b| b.0);
    out
}

fn proposal_from_box(b: &EvalBox2D, c: f64) -> Proposal2D {
    Proposal2D::new(b.x.round() as i32, b.y.round() as i32, b.w.round() as i32, b.h.round() as i32, c)
}

/// Synthetic proposals for one frame given its true object boxes.
pub fn emit_proposals(
    model: &ProposalModel,
    gt: &[(u16, EvalBox2D)],
    width: usize,
    height: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Proposal2D> {
    let mut out = Vec::new();
    let jitter = Normal::new(0.0, model.jitter_sigma.max(0.0)).expect("finite sigma");
    for (_, b) in gt {
        for _ in 0..model.gt_copies {
            let (dx0, dy0, dx1, dy1) = if model.jitter_sigma > 0.0 {
                (jitter.sample(rng), jitter.sample(rng), jitter.sample(rng), jitter.sample(rng))
            } else {
                (0.0, 0.0, 0.0, 0.0)
            };
            let x0 = b.x + dx0;
            let y0 = b.y + dy0;
            let x1 = (b.x + b.w + dx1).max(x0 + 1.0);
            let y1 = (b.y + b.h + dy1).max(y0 + 1.0);
            let c = if model.gt_conf[0] < model.gt_conf[1] {
                rng.random_range(model.gt_conf[0]..model.gt_conf[1])
            } else {
                model.gt_conf[0]
            };
            let p = proposal_from_box(&EvalBox2D::new(x0, y0, x1 - x0, y1 - y0), c);
            if let Some(q) = p.clipped(width, height) {
                out.push(q);
            }
        }
    }
    let n_distractors = match model.total {
        Some(t) => {
            out.truncate(t);
            t - out.len()
        }
        None => model.distractors,
    };
    let (smin, smax) = (model.distractor_size[0], model.distractor_size[1].max(model.distractor_size[0]));
    for j in 0..n_distractors {
        let c = match model.distractor_decay {
            Some(d) if d > 0.0 => model.distractor_conf / (1.0 + j as f64 / d).powi(2),
            _ => model.distractor_conf,
        };
        for _ in 0..1000 {
            let w = (rng.random_range(smin..=smax) * width as f64).round().clamp(1.0, width as f64);
            let h = (rng.random_range(smin..=smax) * height as f64).round().clamp(1.0, height as f64);
            let x = rng.random_range(0.0..=(width as f64 - w)).round();
            let y = rng.random_range(0.0..=(height as f64 - h)).round();
            let b = EvalBox2D::new(x, y, w, h);
            if let Some(max_iou) = model.distractor_max_iou {
                if gt.iter().any(|(_, g)| crate::metrics::iou2d(g, &b) > max_iou) {
                    continue;
                }
            }
            out.push(proposal_from_box(&b, c));
            break;
        }
    }
    out
}

fn perturb_pose(pose: &Pose, noise: &NoiseSpec, rng: &mut ChaCha8Rng) -> Pose {
    if noise.pose_rot_deg <= 0.0 && noise.pose_trans <= 0.0 {
        return *pose;
    }
    let n = Normal::new(0.0, 1.0).unwrap();
    let axis = Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng)) * noise.pose_rot_deg.to_radians();
    let dt = Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng)) * noise.pose_trans;
    let q = pose.camera_to_world_quaternion();
    let q = UnitQuaternion::from_scaled_axis(axis) * q;
    Pose::from_camera_to_world(&q, &(pose.center() + dt))
}

/// Renders frame `i` with noise, proposals and labels.
pub fn render_frame(spec: &SceneSpec, i: usize) -> RenderedFrame {
    assert!(i < spec.frame_count(), "frame {i} out of range");
    let k = spec.intrinsics();
    let clean = render_clean(spec, i);
    let gt_boxes = label_boxes(&clean.labels);

    let mut rng = stream(spec.seed, STREAM_NOISE, i);
    let sigma = Normal::new(0.0, spec.noise.depth_sigma.max(0.0)).unwrap();
    let mut depth = clean.depth.clone();
    for z in depth.as_mut_slice() {
        if *z <= 0.0 {
            continue;
        }
        if spec.noise.missing_prob > 0.0 && rng.random_bool(spec.noise.missing_prob.min(1.0)) {
            *z = 0.0;
        } else if spec.noise.depth_sigma > 0.0 {
            *z = (*z + sigma.sample(&mut rng)).max(1e-3);
        }
    }
    let color = clean.labels.map(|l| match l {
        Label::Object(o) => spec.objects[*o as usize].color,
        Label::Table => spec.table.map_or([0.0; 3], |t| t.color),
        Label::Floor => spec.floor_color,
        Label::Empty => [0.0; 3],
    });
    let mut prng = stream(spec.seed, STREAM_PROPOSALS, i);
    let proposals = emit_proposals(&spec.proposals, &gt_boxes, k.width, k.height, &mut prng);
    let mut pose_rng = stream(spec.seed, STREAM_POSE, i);
    let reported = perturb_pose(&clean.pose, &spec.noise, &mut pose_rng);
    RenderedFrame {
        record: FrameRecord {
            index: i,
            timestamp: spec.timestamp(i),
            color,
            depth,
            pose: reported,
            proposals,
        },
        true_pose: clean.pose,
        labels: clean.labels,
        gt_boxes,
    }
}

/// Exact boxes and a labeled cloud of the visible surfaces.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Object id and its gravity-aligned box.
    pub boxes: Vec<(u16, Box3D)>,
    pub points: Vec<Point3>,
    pub labels: Vec<Label>,
}

impl GroundTruth {
    pub fn positives(&self) -> Vec<bool> {
        self.labels.iter().map(|l| l.is_object()).collect()
    }
}

/// Ground truth of the whole sequence. The cloud backprojects every
/// noise-free frame and keeps the first point per `voxel`-sized cell.
pub fn emit_ground_truth(spec: &SceneSpec, voxel: f64) -> GroundTruth {
    let boxes = (0..spec.objects.len())
        .map(|i| (i as u16, spec.object_primitive(i).bounds()))
        .collect();
    let k = spec.intrinsics();
    let mut seen: HashMap<[i64; 3], ()> = HashMap::new();
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for i in 0..spec.frame_count() {
        let clean = render_clean(spec, i);
        for v in 0..k.height {
            for u in 0..k.width {
                let z = clean.depth.at(u, v);
                if z <= 0.0 {
                    continue;
                }
                let x = clean.pose.to_world(&k.unproject(crate::geometry::Pixel::new(u as f64, v as f64), z));
                let key = [(x.x / voxel).floor() as i64, (x.y / voxel).floor() as i64, (x.z / voxel).floor() as i64];
                if seen.insert(key, ()).is_none() {
                    points.push(x);
                    labels.push(clean.labels.at(u, v));
                }
            }
        }
    }
    GroundTruth { boxes, points, labels }
}

/// Depth scale used for synthetic sequences on disk.
pub const DEPTH_SCALE: f64 = 5000.0;

/// Writes the full sequence and its ground truth under `dir`.
pub fn write_sequence(spec: &SceneSpec, dir: &Path) -> Result<(), DataError> {
    let k = spec.intrinsics();
    dataio::write_camera(
        &dir.join("intrinsics.toml"),
        &CameraFile {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
            depth_scale: DEPTH_SCALE,
        },
    )?;
    let mut frames = Vec::new();
    let mut poses = Vec::new();
    let mut gt2d = Vec::new();
    for i in 0..spec.frame_count() {
        let f = render_frame(spec, i);
        let color = format!("color/{i:06}.png");
        let depth = format!("depth/{i:06}.png");
        dataio::write_color_png(&dir.join(&color), &f.record.color)?;
        dataio::write_depth_png(&dir.join(&depth), &f.record.depth, DEPTH_SCALE)?;
        dataio::write_proposals(&dataio::proposals_path(&dir.join("proposals"), i), &f.record.proposals)?;
        frames.push(FrameEntry {
            timestamp: f.record.timestamp,
            color: color.into(),
            depth: depth.into(),
        });
        poses.push(StampedPose {
            timestamp: f.record.timestamp,
            pose: f.record.pose,
        });
        gt2d.extend(f.gt_boxes.iter().map(|(o, b)| GtBox2D {
            frame: i,
            object: *o,
            x: b.x,
            y: b.y,
            w: b.w,
            h: b.h,
        }));
    }
    dataio::write_trajectory(&dir.join("trajectory.txt"), &poses)?;
    let gt = emit_ground_truth(spec, 0.005);
    let boxes: Vec<BoxRecord> = gt.boxes.iter().map(|(_, b)| BoxRecord::new(b, 0, 1.0)).collect();
    dataio::write_boxes(&dir.join("gt_boxes.json"), &boxes)?;
    dataio::write_labeled_cloud(&dir.join("gt_points.csv"), &gt.points, &gt.labels)?;
    dataio::write_gt_boxes_2d(&dir.join("gt_boxes_2d.csv"), &gt2d)?;
    let spec_text = toml::to_string(spec).map_err(|e| DataError::Invalid(e.to_string()))?;
    dataio::write_text(&dir.join("scene.toml"), &spec_text)?;
    dataio::write_manifest(
        &dir.join("manifest.toml"),
        &SequenceManifest {
            intrinsics: "intrinsics.toml".into(),
            trajectory: "trajectory.txt".into(),
            proposals_dir: Some("proposals".into()),
            pose_tolerance: 0.5 / spec.trajectory.fps,
            ground_truth: GroundTruthPaths {
                boxes: Some("gt_boxes.json".into()),
                labeled_cloud: Some("gt_points.csv".into()),
                boxes_2d: Some("gt_boxes_2d.csv".into()),
            },
            frames,
        },
    )
}
