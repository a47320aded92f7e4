//! Evaluation: 2D/3D IoU, detection and success rates, point-level
//! precision and recall, and the F-measure.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::geometry::{project, Intrinsics, Point3, Pose};
use crate::proposals3d::Box3D;

/// Half-open pixel box `[x, x+w) × [y, y+h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalBox2D {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl EvalBox2D {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w: w.max(0.0), h: h.max(0.0) }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

pub fn iou2d(a: &EvalBox2D, b: &EvalBox2D) -> f64 {
    let iw = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let ih = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Overlap over union of two boxes in a shared gravity frame. When the
/// rotations differ, `b` is first replaced by its enclosing box in `a`'s
/// frame.
pub fn iou3d(a: &Box3D, b: &Box3D) -> f64 {
    let b = if rotations_match(&a.rotation, &b.rotation) {
        *b
    } else {
        b.reframed(&a.rotation)
    };
    let inter = a.overlap_volume(&b);
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

fn rotations_match(a: &Matrix3<f64>, b: &Matrix3<f64>) -> bool {
    (a - b).amax() <= 1e-12
}

/// Largest IoU of `query` against any of `others`, `0` when there are none.
pub fn best_iou<T>(query: &T, others: &[T], iou: impl Fn(&T, &T) -> f64) -> f64 {
    others.iter().map(|o| iou(query, o)).fold(0.0, f64::max)
}

/// Boxes of one scene (or frame).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneBoxes<T> {
    pub ground_truth: Vec<T>,
    pub outputs: Vec<T>,
}

/// Per-scene rate and how many scenes were skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    /// Mean over the evaluated scenes; `None` when every scene was skipped.
    pub value: Option<f64>,
    pub per_scene: Vec<Option<f64>>,
    pub skipped: usize,
}

fn average_rate(per_scene: Vec<Option<f64>>) -> Rate {
    let vals: Vec<f64> = per_scene.iter().flatten().copied().collect();
    let skipped = per_scene.len() - vals.len();
    Rate {
        value: (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64),
        per_scene,
        skipped,
    }
}

/// Fraction of ground-truth boxes whose best match reaches `threshold`,
/// averaged over scenes. Scenes without ground truth are skipped.
pub fn detection_rate<T>(scenes: &[SceneBoxes<T>], threshold: f64, iou: impl Fn(&T, &T) -> f64) -> Rate {
    let per_scene = scenes
        .iter()
        .map(|s| {
            if s.ground_truth.is_empty() {
                log::warn!("scene without ground truth skipped for DR");
                return None;
            }
            let hits = s
                .ground_truth
                .iter()
                .filter(|g| best_iou(*g, &s.outputs, &iou) >= threshold)
                .count();
            Some(hits as f64 / s.ground_truth.len() as f64)
        })
        .collect();
    average_rate(per_scene)
}

/// Fraction of output boxes whose modified IoU (best match over the ground
/// truth) reaches `threshold`, averaged over scenes. Scenes without outputs
/// are skipped.
pub fn success_rate<T>(scenes: &[SceneBoxes<T>], threshold: f64, iou: impl Fn(&T, &T) -> f64) -> Rate {
    let per_scene = scenes
        .iter()
        .map(|s| {
            if s.outputs.is_empty() {
                log::warn!("scene without outputs skipped for SR");
                return None;
            }
            let hits = s
                .outputs
                .iter()
                .filter(|o| best_iou(*o, &s.ground_truth, &iou) >= threshold)
                .count();
            Some(hits as f64 / s.outputs.len() as f64)
        })
        .collect();
    average_rate(per_scene)
}

/// Mean of the per-ground-truth best IoU and of the per-output modified IoU.
pub fn mean_ious<T>(scene: &SceneBoxes<T>, iou: impl Fn(&T, &T) -> f64) -> (Option<f64>, Option<f64>) {
    let mean = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    (
        mean(scene.ground_truth.iter().map(|g| best_iou(g, &scene.outputs, &iou)).collect()),
        mean(scene.outputs.iter().map(|o| best_iou(o, &scene.ground_truth, &iou)).collect()),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointPr {
    pub tp: usize,
    pub fp: usize,
    pub positives: usize,
    /// `TP / (TP + FP)`, `0` when no labeled point is inside any box.
    pub ap: f64,
    /// Set when `TP + FP = 0`.
    pub ap_empty: bool,
    /// `TP / |P̂|`, `None` without positives.
    pub ar: Option<f64>,
}

/// Point-level precision and recall. `positive[i]` marks an object point;
/// every point counts at most once however many boxes contain it.
pub fn point_pr(points: &[Point3], positive: &[bool], boxes: &[Box3D], tol: f64) -> PointPr {
    assert_eq!(points.len(), positive.len());
    let mut tp = 0;
    let mut fp = 0;
    for (p, &pos) in points.iter().zip(positive) {
        if boxes.iter().any(|b| b.contains(p, tol)) {
            if pos {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    let positives = positive.iter().filter(|&&p| p).count();
    PointPr {
        tp,
        fp,
        positives,
        ap: if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 },
        ap_empty: tp + fp == 0,
        ar: (positives > 0).then(|| tp as f64 / positives as f64),
    }
}

/// Harmonic mean of precision and recall, `0` when both are zero.
pub fn f_measure(ap: f64, ar: f64) -> f64 {
    if ap + ar <= 0.0 {
        0.0
    } else {
        2.0 * ap * ar / (ap + ar)
    }
}

/// Tight pixel box around the in-view projections of `members`. A single
/// pixel gives a `1 × 1` box. `None` when nothing projects into the image.
pub fn project_box_to_2d(members: &[Point3], k: &Intrinsics, pose: &Pose) -> Option<EvalBox2D> {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for x in members {
        let Some(px) = project(k, pose, x) else {
            continue;
        };
        let (u, v) = (px.u.round(), px.v.round());
        if u < 0.0 || v < 0.0 || u >= k.width as f64 || v >= k.height as f64 {
            continue;
        }
        lo = [lo[0].min(u), lo[1].min(v)];
        hi = [hi[0].max(u), hi[1].max(v)];
    }
    lo[0].is_finite().then(|| EvalBox2D::new(lo[0], lo[1], hi[0] - lo[0] + 1.0, hi[1] - lo[1] + 1.0))
}

/// One evaluated scene.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneReport {
    pub name: String,
    pub ground_truth: usize,
    pub outputs: usize,
    pub dr: Option<f64>,
    pub sr: Option<f64>,
    pub iou: Option<f64>,
    pub iou_o: Option<f64>,
    pub points: Option<PointPr>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: String,
    pub threshold: f64,
    pub scenes: Vec<SceneReport>,
    pub dr: Option<f64>,
    pub sr: Option<f64>,
    pub iou: Option<f64>,
    pub iou_o: Option<f64>,
    pub ap: Option<f64>,
    pub ar: Option<f64>,
    pub f: Option<f64>,
}

fn mean_of(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let vals: Vec<f64> = v.flatten().collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

impl EvalReport {
    /// Box-level report over scenes, with IoU function `iou`.
    pub fn boxes<T>(mode: &str, names: &[String], scenes: &[SceneBoxes<T>], threshold: f64, iou: impl Fn(&T, &T) -> f64 + Copy) -> Self {
        let dr = detection_rate(scenes, threshold, iou);
        let sr = success_rate(scenes, threshold, iou);
        let reports: Vec<SceneReport> = scenes
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let (m, mo) = mean_ious(s, iou);
                SceneReport {
                    name: names.get(i).cloned().unwrap_or_else(|| format!("scene{i}")),
                    ground_truth: s.ground_truth.len(),
                    outputs: s.outputs.len(),
                    dr: dr.per_scene[i],
                    sr: sr.per_scene[i],
                    iou: m,
                    iou_o: mo,
                    points: None,
                }
            })
            .collect();
        Self {
            mode: mode.to_string(),
            threshold,
            dr: dr.value,
            sr: sr.value,
            iou: mean_of(reports.iter().map(|r| r.iou)),
            iou_o: mean_of(reports.iter().map(|r| r.iou_o)),
            scenes: reports,
            ..Default::default()
        }
    }

    /// Point-level report; AP and AR are pooled over all scenes.
    pub fn points(names: &[String], per_scene: &[PointPr]) -> Self {
        let tp: usize = per_scene.iter().map(|p| p.tp).sum();
        let fp: usize = per_scene.iter().map(|p| p.fp).sum();
        let pos: usize = per_scene.iter().map(|p| p.positives).sum();
        let ap = (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64).or(Some(0.0));
        let ar = (pos > 0).then(|| tp as f64 / pos as f64);
        let f = match (ap, ar) {
            (Some(p), Some(r)) => Some(f_measure(p, r)),
            _ => None,
        };
        Self {
            mode: "points".into(),
            scenes: per_scene
                .iter()
                .enumerate()
                .map(|(i, p)| SceneReport {
                    name: names.get(i).cloned().unwrap_or_else(|| format!("scene{i}")),
                    points: Some(*p),
                    ..Default::default()
                })
                .collect(),
            ap,
            ar,
            f,
            ..Default::default()
        }
    }

    /// Plain-text table with rates in percent.
    pub fn to_table(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{:.2}", 100.0 * x));
        let mut s = String::new();
        if self.mode == "points" {
            s.push_str(&format!("{:<20} {:>8} {:>8} {:>8}\n", "scene", "AP", "AR", "F"));
            for r in &self.scenes {
                let p = r.points.unwrap();
                let f = p.ar.map(|ar| f_measure(p.ap, ar));
                s.push_str(&format!("{:<20} {:>8} {:>8} {:>8}\n", r.name, pct(Some(p.ap)), pct(p.ar), pct(f)));
            }
            s.push_str(&format!("{:<20} {:>8} {:>8} {:>8}\n", "all", pct(self.ap), pct(self.ar), pct(self.f)));
        } else {
            s.push_str(&format!("{:<20} {:>6} {:>6} {:>8} {:>8} {:>8} {:>8}\n", "scene", "N", "M", "DR", "SR", "IoU", "IoU_o"));
            for r in &self.scenes {
                s.push_str(&format!(
                    "{:<20} {:>6} {:>6} {:>8} {:>8} {:>8} {:>8}\n",
                    r.name, r.ground_truth, r.outputs, pct(r.dr), pct(r.sr), pct(r.iou), pct(r.iou_o)
                ));
            }
            s.push_str(&format!(
                "{:<20} {:>6} {:>6} {:>8} {:>8} {:>8} {:>8}\n",
                "all", "", "", pct(self.dr), pct(self.sr), pct(self.iou), pct(self.iou_o)
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube(o: f64) -> Box3D {
        Box3D::axis_aligned(Vector3::repeat(o), Vector3::repeat(o + 1.0))
    }

    #[test]
    fn iou2d_examples() {
        let a = EvalBox2D::new(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou2d(&a, &a), 1.0);
        assert_eq!(iou2d(&a, &EvalBox2D::new(5.0, 5.0, 1.0, 1.0)), 0.0);
        assert_eq!(iou2d(&a, &EvalBox2D::new(1.0, 1.0, 2.0, 2.0)), 1.0 / 7.0);
        let z = EvalBox2D::new(0.0, 0.0, 0.0, 0.0);
        assert_eq!(iou2d(&z, &z), 0.0);
    }

    #[test]
    fn iou3d_examples() {
        assert_eq!(iou3d(&cube(0.0), &cube(0.0)), 1.0);
        assert_eq!(iou3d(&cube(0.0), &cube(2.0)), 0.0);
        // (1-s)^3 / (2 - (1-s)^3)
        let s = 0.5;
        assert!((iou3d(&cube(0.0), &cube(s)) - 0.125 / 1.875).abs() < 1e-15);
    }

    #[test]
    fn iou3d_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rand_box = |rng: &mut ChaCha8Rng| {
            let o = Vector3::new(rng.random_range(0.0..0.5), rng.random_range(0.0..0.5), rng.random_range(0.0..0.5));
            let e = Vector3::new(rng.random_range(0.3..1.0), rng.random_range(0.3..1.0), rng.random_range(0.3..1.0));
            Box3D::axis_aligned(o, o + e)
        };
        for _ in 0..10 {
            let a = rand_box(&mut rng);
            let b = rand_box(&mut rng);
            let lo = a.min.inf(&b.min);
            let hi = a.max.sup(&b.max);
            let (mut both, mut either) = (0usize, 0usize);
            for _ in 0..100_000 {
                let p = Vector3::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y), rng.random_range(lo.z..hi.z));
                let (ia, ib) = (a.contains(&p, 0.0), b.contains(&p, 0.0));
                both += (ia && ib) as usize;
                either += (ia || ib) as usize;
            }
            let mc = both as f64 / either as f64;
            let exact = iou3d(&a, &b);
            assert!((mc - exact).abs() <= 0.01, "mc {mc} exact {exact}");
        }
    }

    proptest! {
        #[test]
        fn iou_symmetric_bounded(ax in 0.0f64..10.0, ay in 0.0f64..10.0, aw in 0.0f64..10.0, ah in 0.0f64..10.0,
                                 bx in 0.0f64..10.0, by in 0.0f64..10.0, bw in 0.0f64..10.0, bh in 0.0f64..10.0) {
            let a = EvalBox2D::new(ax, ay, aw, ah);
            let b = EvalBox2D::new(bx, by, bw, bh);
            let i = iou2d(&a, &b);
            prop_assert_eq!(i, iou2d(&b, &a));
            prop_assert!((0.0..=1.0).contains(&i));
            let ba = Box3D::axis_aligned(Vector3::new(ax, ay, 0.0), Vector3::new(ax + aw, ay + ah, 1.0));
            let bb = Box3D::axis_aligned(Vector3::new(bx, by, 0.0), Vector3::new(bx + bw, by + bh, 1.0));
            let j = iou3d(&ba, &bb);
            prop_assert!((j - iou3d(&bb, &ba)).abs() < 1e-15);
            prop_assert!((0.0..=1.0 + 1e-15).contains(&j));
        }

        #[test]
        fn rates_permutation_invariant(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let boxes = |n: usize, rng: &mut ChaCha8Rng| -> Vec<EvalBox2D> {
                (0..n).map(|_| EvalBox2D::new(rng.random_range(0.0..20.0), rng.random_range(0.0..20.0), rng.random_range(1.0..10.0), rng.random_range(1.0..10.0))).collect()
            };
            let gt = boxes(5, &mut rng);
            let out = boxes(8, &mut rng);
            let mut gt_r = gt.clone();
            gt_r.reverse();
            let mut out_r = out.clone();
            out_r.rotate_left(3);
            let a = [SceneBoxes { ground_truth: gt, outputs: out }];
            let b = [SceneBoxes { ground_truth: gt_r, outputs: out_r }];
            prop_assert_eq!(detection_rate(&a, 0.5, iou2d).value, detection_rate(&b, 0.5, iou2d).value);
            prop_assert_eq!(success_rate(&a, 0.5, iou2d).value, success_rate(&b, 0.5, iou2d).value);
        }
    }

    #[test]
    fn rate_examples() {
        let gt = vec![EvalBox2D::new(0.0, 0.0, 10.0, 10.0), EvalBox2D::new(20.0, 0.0, 10.0, 10.0)];
        let same = [SceneBoxes { ground_truth: gt.clone(), outputs: gt.clone() }];
        assert_eq!(detection_rate(&same, 0.5, iou2d).value, Some(1.0));
        assert_eq!(success_rate(&same, 0.5, iou2d).value, Some(1.0));

        let none = [SceneBoxes { ground_truth: gt.clone(), outputs: vec![] }];
        assert_eq!(detection_rate(&none, 0.5, iou2d).value, Some(0.0));
        assert_eq!(success_rate(&none, 0.5, iou2d).value, None);

        let mut dup = vec![gt[0]];
        dup.extend((0..3).map(|i| EvalBox2D::new(100.0 + 20.0 * i as f64, 100.0, 5.0, 5.0)));
        let s = [SceneBoxes { ground_truth: vec![gt[0]], outputs: dup }];
        assert_eq!(success_rate(&s, 0.5, iou2d).value, Some(0.25));

        let skip = [SceneBoxes::<EvalBox2D> { ground_truth: vec![], outputs: vec![] }, same[0].clone()];
        let r = detection_rate(&skip, 0.5, iou2d);
        assert_eq!((r.value, r.skipped), (Some(1.0), 1));
    }

    #[test]
    fn point_pr_examples() {
        let b = cube(0.0);
        let pts = vec![Vector3::repeat(0.5), Vector3::repeat(0.2), Vector3::repeat(3.0)];
        let r = point_pr(&pts, &[true, true, false], &[b], 0.0);
        assert_eq!((r.tp, r.fp, r.ap, r.ar), (2, 0, 1.0, Some(1.0)));

        let r = point_pr(&pts, &[true, true, false], &[cube(10.0)], 0.0);
        assert!(r.ap_empty);
        assert_eq!((r.ap, r.ar), (0.0, Some(0.0)));

        // Overlapping boxes count a point once.
        let r = point_pr(&pts, &[true, false, false], &[b, b, cube(0.1)], 0.0);
        assert_eq!((r.tp, r.fp), (1, 1));

        let r = point_pr(&pts, &[false; 3], &[b], 0.0);
        assert_eq!(r.ar, None);
    }

    #[test]
    fn point_pr_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Point3> = (0..2000).map(|_| Vector3::new(rng.random_range(0.0..3.0), rng.random_range(0.0..3.0), rng.random_range(0.0..3.0))).collect();
        let pos: Vec<bool> = (0..2000).map(|_| rng.random_bool(0.4)).collect();
        let boxes: Vec<Box3D> = (0..4).map(|_| {
            let o = Vector3::new(rng.random_range(0.0..2.0), rng.random_range(0.0..2.0), rng.random_range(0.0..2.0));
            Box3D::axis_aligned(o, o + Vector3::repeat(rng.random_range(0.2..1.0)))
        }).collect();
        let inside = |p: &Point3| boxes.iter().any(|b| (0..3).all(|k| p[k] >= b.min[k] && p[k] <= b.max[k]));
        let tp = pts.iter().zip(&pos).filter(|(p, &l)| l && inside(p)).count();
        let fp = pts.iter().zip(&pos).filter(|(p, &l)| !l && inside(p)).count();
        let r = point_pr(&pts, &pos, &boxes, 0.0);
        assert_eq!((r.tp, r.fp), (tp, fp));
    }

    #[test]
    fn f_measure_examples() {
        assert!((f_measure(93.46, 76.19) - 83.95).abs() <= 0.01);
        assert!((f_measure(92.8, 95.3) - 94.03).abs() <= 0.01);
        assert_eq!(f_measure(0.37, 0.37), 0.37);
        assert_eq!(f_measure(1.0, 0.0), 0.0);
        assert_eq!(f_measure(0.0, 0.0), 0.0);
    }

    #[test]
    fn projection_examples() {
        let k = Intrinsics::new(100.0, 100.0, 50.0, 40.0, 100, 80).unwrap();
        let pose = Pose::identity();
        let on_axis = vec![Vector3::new(0.0, 0.0, 1.0); 3];
        assert_eq!(project_box_to_2d(&on_axis, &k, &pose), Some(EvalBox2D::new(50.0, 40.0, 1.0, 1.0)));
        assert_eq!(project_box_to_2d(&[Vector3::new(0.0, 0.0, -1.0)], &k, &pose), None);
        let sq = vec![Vector3::new(-0.1, -0.1, 1.0), Vector3::new(0.1, 0.1, 1.0)];
        assert_eq!(project_box_to_2d(&sq, &k, &pose), Some(EvalBox2D::new(40.0, 30.0, 21.0, 21.0)));
    }

    #[test]
    fn report_table_lists_scenes() {
        let gt = vec![EvalBox2D::new(0.0, 0.0, 10.0, 10.0)];
        let scenes = [SceneBoxes { ground_truth: gt.clone(), outputs: gt }];
        let r = EvalReport::boxes("2d", &["a".into()], &scenes, 0.5, iou2d);
        let t = r.to_table();
        assert!(t.contains("100.00"));
        assert!(t.lines().count() == 3);
        let p = EvalReport::points(&[], &[point_pr(&[Vector3::zeros()], &[true], &[cube(-0.5)], 0.0)]);
        assert_eq!(p.f, Some(1.0));
    }
}
