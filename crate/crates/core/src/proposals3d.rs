//! From the global heatmap to gravity-aligned 3D boxes.
//!
//! Points seen too rarely are dropped, the rest are ranked by the
//! pseudo-average confidence `c̄ = c / (f + τ)`, leftover supporting-plane
//! points are stripped, DBSCAN groups the survivors, and each cluster gets a
//! tight box in the frame where the supporting plane is horizontal.
//! Intersecting boxes are merged and boxes under the volume floor dropped.

use std::collections::{HashMap, VecDeque};

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fusion::GlobalHeatmap3D;
use crate::geometry::{rotation_to_gravity, Point3, GRAVITY_UP};
use crate::plane::{Plane, PlaneTrack};

/// `min(5, ⌈0.05·N⌉)`, never below 1.
pub fn frequency_threshold(frames: usize) -> u32 {
    let pct = (frames as f64 * 0.05).ceil() as u32;
    pct.min(5).max(1)
}

/// Indices of points observed at least [`frequency_threshold`] times.
pub fn frequency_filter(global: &GlobalHeatmap3D, frames: usize) -> Vec<usize> {
    let t = frequency_threshold(frames);
    (0..global.points.len())
        .filter(|&i| global.points[i].frequency >= t)
        .collect()
}

/// `c / (f + τ)`.
#[inline]
pub fn pseudo_average(c: f64, f: u32, tau: f64) -> f64 {
    c / (f as f64 + tau)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedCloud {
    pub indices: Vec<usize>,
    pub scores: Vec<f64>,
}

impl RankedCloud {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn retain(&mut self, mut keep: impl FnMut(usize) -> bool) {
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut scores = Vec::with_capacity(self.scores.len());
        for (&i, &s) in self.indices.iter().zip(&self.scores) {
            if keep(i) {
                indices.push(i);
                scores.push(s);
            }
        }
        self.indices = indices;
        self.scores = scores;
    }
}

/// Keeps the candidates with `c̄ >= eps`, preserving their order.
pub fn rank_points(global: &GlobalHeatmap3D, candidates: &[usize], tau: f64, eps: f64) -> RankedCloud {
    let mut out = RankedCloud::default();
    for &i in candidates {
        let p = &global.points[i];
        let s = pseudo_average(p.confidence, p.frequency, tau);
        if s >= eps {
            out.indices.push(i);
            out.scores.push(s);
        }
    }
    out
}

/// Keyframe planes that describe the same physical surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneGroup {
    /// Indices into [`PlaneTrack::entries`].
    pub members: Vec<usize>,
    /// Least-squares representative in plane-parameter space.
    pub plane: Plane,
    /// Sum of the members' selection heat.
    pub heat: f64,
}

/// Mean of the canonical `[n, d]` 4-vectors, rescaled to a unit normal. This
/// minimizes the summed squared parameter distance to the members.
fn representative(planes: &[Plane]) -> Plane {
    let mut n = Vector3::zeros();
    let mut d = 0.0;
    for p in planes {
        let c = p.canonical();
        n += c.normal;
        d += c.offset;
    }
    let k = planes.len() as f64;
    Plane::new(n / k, d / k).unwrap_or(planes[0].canonical())
}

/// Greedy agglomerative grouping of the track: each entry joins the first
/// group whose representative is within `angle_deg` and `offset`, otherwise it
/// opens a new group. Representatives are refit after every join.
pub fn group_planes(track: &PlaneTrack, angle_deg: f64, offset: f64) -> Vec<PlaneGroup> {
    let mut groups: Vec<PlaneGroup> = Vec::new();
    for (i, e) in track.entries.iter().enumerate() {
        match groups
            .iter_mut()
            .find(|g| g.plane.is_similar(&e.plane, angle_deg, offset))
        {
            Some(g) => {
                g.members.push(i);
                g.heat += e.heat;
                let planes: Vec<Plane> = g.members.iter().map(|&m| track.entries[m].plane).collect();
                g.plane = representative(&planes);
            }
            None => groups.push(PlaneGroup {
                members: vec![i],
                plane: e.plane.canonical(),
                heat: e.heat,
            }),
        }
    }
    groups
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneRemoval {
    pub groups: Vec<PlaneGroup>,
    /// Index of the support group, the one with the most accumulated heat.
    pub support_group: Option<usize>,
    pub support: Option<Plane>,
    pub removed: usize,
}

/// Strips ranked points lying within `eps_p` of the support plane. An empty
/// track leaves the cloud unchanged and reports no support plane.
pub fn final_plane_removal(
    global: &GlobalHeatmap3D,
    ranked: &mut RankedCloud,
    track: &PlaneTrack,
    eps_p: f64,
    angle_deg: f64,
    offset: f64,
) -> PlaneRemoval {
    let groups = group_planes(track, angle_deg, offset);
    let support_group = groups
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.heat.total_cmp(&b.1.heat).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i);
    let Some(sg) = support_group else {
        log::warn!("plane track is empty; skipping final plane removal");
        return PlaneRemoval {
            groups,
            support_group: None,
            support: None,
            removed: 0,
        };
    };
    let support = groups[sg].plane;
    let before = ranked.len();
    ranked.retain(|i| !support.is_inlier(&global.points[i].position, eps_p));
    PlaneRemoval {
        removed: before - ranked.len(),
        groups,
        support_group,
        support: Some(support),
    }
}

/// Upward normal of the support plane, or world up when there is none.
pub fn support_normal(support: Option<&Plane>) -> Vector3<f64> {
    match support {
        Some(p) => {
            let n = p.normal.normalize();
            if n.dot(&GRAVITY_UP) < 0.0 {
                -n
            } else {
                n
            }
        }
        None => GRAVITY_UP,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    /// Cluster id per input point, `None` for noise.
    pub labels: Vec<Option<usize>>,
    pub clusters: Vec<Vec<usize>>,
}

impl Clustering {
    pub fn noise(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }
}

/// Uniform hash grid with cell size equal to the query radius.
pub struct GridIndex<'a> {
    points: &'a [Point3],
    cell: f64,
    cells: HashMap<[i64; 3], Vec<u32>>,
}

impl<'a> GridIndex<'a> {
    pub fn new(points: &'a [Point3], cell: f64) -> Self {
        let mut cells: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i as u32);
        }
        Self { points, cell, cells }
    }

    fn key(p: &Point3, cell: f64) -> [i64; 3] {
        [
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        ]
    }

    /// Points within `radius <= cell` of `q`, in ascending index order.
    pub fn within(&self, q: &Point3, radius: f64, out: &mut Vec<usize>) {
        out.clear();
        let r2 = radius * radius;
        let k = Self::key(q, self.cell);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        for &i in ids {
                            if (self.points[i as usize] - q).norm_squared() <= r2 {
                                out.push(i as usize);
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable();
    }

    /// Number of points within `radius`, stopping once `cap` is reached.
    pub fn count_within(&self, q: &Point3, radius: f64, cap: usize) -> usize {
        let r2 = radius * radius;
        let k = Self::key(q, self.cell);
        let mut n = 0;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        for &i in ids {
                            if (self.points[i as usize] - q).norm_squared() <= r2 {
                                n += 1;
                                if n >= cap {
                                    return n;
                                }
                            }
                        }
                    }
                }
            }
        }
        n
    }
}

/// DBSCAN with a hash-grid neighbour index.
///
/// A point is core when at least `min_pts` points, itself included, lie within
/// `eps` (inclusive). Clusters are seeded from points in ascending index order
/// and grown breadth-first; a border point reachable from several clusters
/// joins the first one that reaches it.
pub fn dbscan(points: &[Point3], eps: f64, min_pts: usize) -> Clustering {
    let n = points.len();
    if n == 0 {
        return Clustering::default();
    }
    let grid = GridIndex::new(points, eps);
    let core: Vec<bool> = points
        .par_iter()
        .map(|p| grid.count_within(p, eps, min_pts) >= min_pts)
        .collect();

    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut neigh = Vec::new();
    let mut queue = VecDeque::new();
    for seed in 0..n {
        if visited[seed] || !core[seed] {
            continue;
        }
        let id = clusters.len();
        let mut members = vec![seed];
        visited[seed] = true;
        labels[seed] = Some(id);
        queue.push_back(seed);
        while let Some(q) = queue.pop_front() {
            grid.within(&points[q], eps, &mut neigh);
            for &r in &neigh {
                if labels[r].is_none() {
                    labels[r] = Some(id);
                    members.push(r);
                }
                if !visited[r] && core[r] {
                    visited[r] = true;
                    queue.push_back(r);
                }
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }
    Clustering { labels, clusters }
}

/// Box aligned with the gravity frame `rotation` (world to aligned).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub rotation: Matrix3<f64>,
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Box3D {
    pub fn axis_aligned(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            min,
            max,
        }
    }

    pub fn extents(&self) -> Vector3<f64> {
        (self.max - self.min).map(|e| e.max(0.0))
    }

    pub fn volume(&self) -> f64 {
        let e = self.extents();
        e.x * e.y * e.z
    }

    /// Center in world coordinates.
    pub fn center(&self) -> Point3 {
        self.rotation.transpose() * ((self.min + self.max) * 0.5)
    }

    /// The 8 world-frame corners; bit `k` of the index selects max on axis `k`.
    pub fn corners(&self) -> [Point3; 8] {
        let rt = self.rotation.transpose();
        std::array::from_fn(|i| {
            let c = Vector3::new(
                if i & 1 == 0 { self.min.x } else { self.max.x },
                if i & 2 == 0 { self.min.y } else { self.max.y },
                if i & 4 == 0 { self.min.z } else { self.max.z },
            );
            rt * c
        })
    }

    /// Inclusive containment of a world point, with slack `tol`.
    pub fn contains(&self, x: &Point3, tol: f64) -> bool {
        let a = self.rotation * x;
        (0..3).all(|k| a[k] >= self.min[k] - tol && a[k] <= self.max[k] + tol)
    }

    /// Overlap volume of two boxes in the same gravity frame.
    pub fn overlap_volume(&self, other: &Box3D) -> f64 {
        (0..3)
            .map(|k| (self.max[k].min(other.max[k]) - self.min[k].max(other.min[k])).max(0.0))
            .product()
    }

    /// Smallest box in frame `rotation` that contains this box.
    pub fn reframed(&self, rotation: &Matrix3<f64>) -> Box3D {
        let pts: Vec<Point3> = self.corners().to_vec();
        fit_box_rotated(&pts, rotation).unwrap_or(*self)
    }

    pub fn union(&self, other: &Box3D) -> Box3D {
        Box3D {
            rotation: self.rotation,
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }
}

fn fit_box_rotated(points: &[Point3], rotation: &Matrix3<f64>) -> Option<Box3D> {
    let mut it = points.iter().map(|p| rotation * p);
    let first = it.next()?;
    let (mut min, mut max) = (first, first);
    for a in it {
        min = min.inf(&a);
        max = max.sup(&a);
    }
    Some(Box3D {
        rotation: *rotation,
        min,
        max,
    })
}

/// Tight box around `points` after rotating the support normal `nc` onto
/// world up. `None` for an empty cluster.
pub fn fit_box(points: &[Point3], nc: &Vector3<f64>) -> Option<Box3D> {
    fit_box_rotated(points, &rotation_to_gravity(nc))
}

/// A box together with the global point indices it was fit to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal3D {
    pub bbox: Box3D,
    pub members: Vec<usize>,
    /// Mean `c̄` of the members.
    pub score: f64,
}

/// Merges boxes with strictly positive overlap volume until none intersect.
/// Merged boxes keep the position of the lower-indexed box.
pub fn merge_boxes(mut boxes: Vec<Proposal3D>) -> Vec<Proposal3D> {
    'outer: loop {
        for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                if boxes[i].bbox.overlap_volume(&boxes[j].bbox) > 0.0 {
                    let b = boxes.remove(j);
                    let a = &mut boxes[i];
                    let (na, nb) = (a.members.len() as f64, b.members.len() as f64);
                    let total = na + nb;
                    a.score = if total > 0.0 {
                        (a.score * na + b.score * nb) / total
                    } else {
                        0.0
                    };
                    a.bbox = a.bbox.union(&b.bbox);
                    a.members.extend(b.members);
                    a.members.sort_unstable();
                    continue 'outer;
                }
            }
        }
        return boxes;
    }
}

/// Keeps boxes with `volume >= min_volume`.
pub fn volume_filter(boxes: Vec<Proposal3D>, min_volume: f64) -> Vec<Proposal3D> {
    boxes
        .into_iter()
        .filter(|b| b.bbox.volume() >= min_volume)
        .collect()
}

/// Parameters of the offline extraction stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractParams {
    pub tau: f64,
    pub eps: f64,
    pub eps_p: f64,
    pub group_angle_deg: f64,
    pub group_offset: f64,
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
    pub min_volume: f64,
}

impl Default for ExtractParams {
    fn default() -> Self {
        Self {
            tau: 10.0,
            eps: 0.25,
            eps_p: 0.005,
            group_angle_deg: 10.0,
            group_offset: 0.05,
            dbscan_eps: 0.02,
            dbscan_min_pts: 10,
            min_volume: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub frequency_threshold: u32,
    pub ranked: RankedCloud,
    pub removal: PlaneRemoval,
    pub support_normal: Vector3<f64>,
    pub clusters: usize,
    pub noise: usize,
    pub proposals: Vec<Proposal3D>,
}

/// Runs ranking, final plane removal, clustering, box fitting, merging and
/// the volume filter over the global heatmap.
pub fn extract(global: &GlobalHeatmap3D, track: &PlaneTrack, params: &ExtractParams) -> Extraction {
    let frames = global.frame_count.max(1);
    let candidates = frequency_filter(global, frames);
    let mut ranked = rank_points(global, &candidates, params.tau, params.eps);
    let removal = final_plane_removal(
        global,
        &mut ranked,
        track,
        params.eps_p,
        params.group_angle_deg,
        params.group_offset,
    );
    let nc = support_normal(removal.support.as_ref());
    let positions: Vec<Point3> = ranked.indices.iter().map(|&i| global.points[i].position).collect();
    let clustering = dbscan(&positions, params.dbscan_eps, params.dbscan_min_pts);
    let rotation = rotation_to_gravity(&nc);
    let boxes: Vec<Proposal3D> = clustering
        .clusters
        .iter()
        .filter_map(|members| {
            let pts: Vec<Point3> = members.iter().map(|&m| positions[m]).collect();
            let bbox = fit_box_rotated(&pts, &rotation)?;
            let score = members.iter().map(|&m| ranked.scores[m]).sum::<f64>() / members.len() as f64;
            Some(Proposal3D {
                bbox,
                members: members.iter().map(|&m| ranked.indices[m]).collect(),
                score,
            })
        })
        .collect();
    let merged = merge_boxes(boxes);
    let proposals = volume_filter(merged, params.min_volume);
    Extraction {
        frequency_threshold: frequency_threshold(frames),
        clusters: clustering.clusters.len(),
        noise: clustering.noise(),
        ranked,
        removal,
        support_normal: nc,
        proposals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::GlobalPoint;
    use crate::plane::TrackEntry;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gp(c: f64, f: u32) -> GlobalPoint {
        GlobalPoint {
            position: Point3::zeros(),
            color: [0.0; 3],
            confidence: c,
            frequency: f,
        }
    }

    fn cloud(points: Vec<GlobalPoint>, frames: usize) -> GlobalHeatmap3D {
        GlobalHeatmap3D {
            points,
            frame_count: frames,
        }
    }

    #[test]
    fn frequency_floor() {
        assert_eq!(frequency_threshold(200), 5);
        assert_eq!(frequency_threshold(40), 2);
        assert_eq!(frequency_threshold(1), 1);
        assert_eq!(frequency_threshold(0), 1);
        let g = cloud(vec![gp(1.0, 4), gp(1.0, 5)], 200);
        assert_eq!(frequency_filter(&g, 200), vec![1]);
        let g = cloud(vec![gp(1.0, 2), gp(1.0, 1)], 40);
        assert_eq!(frequency_filter(&g, 40), vec![0]);
    }

    #[test]
    fn ranking_threshold() {
        assert_eq!(pseudo_average(110.0, 1, 10.0), 10.0);
        let g = cloud(vec![gp(0.0, 3), gp(110.0, 1), gp(2.75, 1), gp(2.74, 1)], 1);
        let r = rank_points(&g, &[0, 1, 2, 3], 10.0, 0.25);
        assert_eq!(r.indices, vec![1, 2]);
        assert_eq!(r.scores, vec![10.0, 0.25]);
    }

    proptest! {
        #[test]
        fn ranking_scale_covariant_and_monotone(
            pts in prop::collection::vec((0.0f64..50.0, 1u32..40), 0..60),
            scale in 0.5f64..8.0,
            eps in 0.0f64..3.0,
            bump in 0.0f64..1.0,
        ) {
            let g = cloud(pts.iter().map(|&(c, f)| gp(c, f)).collect(), 40);
            let all: Vec<usize> = (0..g.len()).collect();
            // Power-of-two scaling is exact; others can tie-break differently
            // at the boundary, so compare with a scaled copy of each score.
            let s = scale.log2().round().exp2();
            let gs = cloud(pts.iter().map(|&(c, f)| gp(c * s, f)).collect(), 40);
            prop_assert_eq!(rank_points(&g, &all, 10.0, eps).indices, rank_points(&gs, &all, 10.0, eps * s).indices);
            let hi = rank_points(&g, &all, 10.0, eps + bump).indices;
            let lo = rank_points(&g, &all, 10.0, eps).indices;
            prop_assert!(hi.iter().all(|i| lo.contains(i)));
        }
    }

    fn entry(frame: usize, normal: Vector3<f64>, offset: f64, heat: f64) -> TrackEntry {
        TrackEntry {
            frame,
            plane: Plane::new(normal, offset).unwrap(),
            heat,
            inliers: 100,
        }
    }

    #[test]
    fn grouping_single_and_two_surfaces() {
        let up = Vector3::new(0.0, 1.0, 0.0);
        let tilt = Vector3::new(0.02, 1.0, 0.0);
        let table_only = PlaneTrack {
            entries: vec![entry(0, up, -0.7, 5.0), entry(10, tilt, -0.705, 5.0), entry(20, -up, 0.702, 5.0)],
        };
        let g = group_planes(&table_only, 10.0, 0.05);
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].members, vec![0, 1, 2]);

        let pan = PlaneTrack {
            entries: vec![
                entry(0, up, 0.0, 2.0),
                entry(10, up, 0.0, 2.0),
                entry(20, up, -0.7, 9.0),
                entry(30, up, -0.7, 9.0),
            ],
        };
        let g = group_planes(&pan, 10.0, 0.05);
        assert_eq!(g.len(), 2);
        let mut ranked = RankedCloud::default();
        let global = cloud(vec![], 1);
        let r = final_plane_removal(&global, &mut ranked, &pan, 0.005, 10.0, 0.05);
        assert_eq!(r.support_group, Some(1));
        assert!((r.support.unwrap().offset + 0.7).abs() < 1e-12);
    }

    #[test]
    fn plane_removal_strips_rim_points() {
        let mut pts = Vec::new();
        for i in 0..10 {
            let mut p = gp(10.0, 5);
            p.position = Vector3::new(i as f64 * 0.01, 0.7 + 0.001 * (i % 3) as f64, 0.0);
            pts.push(p);
        }
        for i in 0..10 {
            let mut p = gp(10.0, 5);
            p.position = Vector3::new(i as f64 * 0.01, 0.75, 0.0);
            pts.push(p);
        }
        let g = cloud(pts, 10);
        let track = PlaneTrack {
            entries: vec![entry(0, Vector3::new(0.0, 1.0, 0.0), -0.7, 1.0)],
        };
        let mut ranked = rank_points(&g, &(0..20).collect::<Vec<_>>(), 10.0, 0.25);
        let r = final_plane_removal(&g, &mut ranked, &track, 0.005, 10.0, 0.05);
        assert_eq!(r.removed, 10);
        assert_eq!(ranked.indices, (10..20).collect::<Vec<_>>());

        // No point near the plane: unchanged.
        let far = PlaneTrack {
            entries: vec![entry(0, Vector3::new(0.0, 1.0, 0.0), 3.0, 1.0)],
        };
        let mut ranked2 = rank_points(&g, &(0..20).collect::<Vec<_>>(), 10.0, 0.25);
        final_plane_removal(&g, &mut ranked2, &far, 0.005, 10.0, 0.05);
        assert_eq!(ranked2.len(), 20);

        let mut ranked3 = ranked2.clone();
        let r = final_plane_removal(&g, &mut ranked3, &PlaneTrack::default(), 0.005, 10.0, 0.05);
        assert_eq!(r.support, None);
        assert_eq!(ranked3, ranked2);
    }

    /// Core flags by brute force, clusters as connected components of the
    /// core graph (union-find), borders checked against adjacent cores.
    fn check_against_reference(points: &[Point3], eps: f64, min_pts: usize, got: &Clustering) {
        let n = points.len();
        let near = |a: usize, b: usize| (points[a] - points[b]).norm_squared() <= eps * eps;
        let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts).collect();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut Vec<usize>, x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut y = x;
            while p[y] != r {
                let nx = p[y];
                p[y] = r;
                y = nx;
            }
            r
        }
        for i in 0..n {
            if !core[i] {
                continue;
            }
            for j in i + 1..n {
                if core[j] && near(i, j) {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        // Core partition must match exactly (up to relabeling).
        let mut map: HashMap<usize, usize> = HashMap::new();
        let mut back: HashMap<usize, usize> = HashMap::new();
        for i in 0..n {
            if core[i] {
                let root = find(&mut parent, i);
                let lab = got.labels[i].expect("core point labeled noise");
                assert_eq!(*map.entry(root).or_insert(lab), lab);
                assert_eq!(*back.entry(lab).or_insert(root), root);
            }
        }
        assert_eq!(map.len(), got.clusters.len());
        for i in 0..n {
            if core[i] {
                continue;
            }
            let neighbours: Vec<usize> = (0..n).filter(|&j| core[j] && near(i, j)).collect();
            match got.labels[i] {
                None => assert!(neighbours.is_empty(), "reachable border labeled noise"),
                Some(l) => assert!(neighbours.iter().any(|&j| got.labels[j] == Some(l))),
            }
        }
        for (id, members) in got.clusters.iter().enumerate() {
            assert!(members.iter().all(|&m| got.labels[m] == Some(id)));
        }
        assert_eq!(got.clusters.iter().map(Vec::len).sum::<usize>() + got.noise(), n);
    }

    #[test]
    fn dbscan_examples() {
        assert!(dbscan(&[], 0.02, 10).clusters.is_empty());
        let one = dbscan(&[Point3::zeros()], 0.02, 10);
        assert_eq!(one.labels, vec![None]);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pts = Vec::new();
        for c in [0.0, 1.0] {
            for _ in 0..500 {
                pts.push(Vector3::new(
                    c + rng.random_range(0.0..0.05),
                    rng.random_range(0.0..0.05),
                    rng.random_range(0.0..0.05),
                ));
            }
        }
        let d = dbscan(&pts, 0.02, 10);
        assert_eq!(d.clusters.len(), 2);
        assert_eq!(d.noise(), 0);
        check_against_reference(&pts, 0.02, 10, &d);
    }

    #[test]
    fn dbscan_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.random_range(1..400);
            let blobs = rng.random_range(1..5);
            let centers: Vec<Point3> = (0..blobs)
                .map(|_| Vector3::new(rng.random_range(0.0..0.3), rng.random_range(0.0..0.3), 0.0))
                .collect();
            let pts: Vec<Point3> = (0..n)
                .map(|_| centers[rng.random_range(0..blobs)] + Vector3::new(rng.random_range(-0.04..0.04), rng.random_range(-0.04..0.04), rng.random_range(-0.01..0.01)))
                .collect();
            let min_pts = rng.random_range(1..12);
            let d = dbscan(&pts, 0.02, min_pts);
            check_against_reference(&pts, 0.02, min_pts, &d);
        }
    }

    fn cube_points(origin: Vector3<f64>, side: f64) -> Vec<Point3> {
        let mut pts = Vec::new();
        for i in 0..=4 {
            for j in 0..=4 {
                for k in 0..=4 {
                    pts.push(origin + Vector3::new(i as f64, j as f64, k as f64) * side / 4.0);
                }
            }
        }
        pts
    }

    #[test]
    fn fit_box_examples() {
        let pts = cube_points(Vector3::zeros(), 1.0);
        let b = fit_box(&pts, &GRAVITY_UP).unwrap();
        assert_eq!(b.min, Vector3::zeros());
        assert_eq!(b.max, Vector3::new(1.0, 1.0, 1.0));
        assert!(pts.iter().all(|p| b.contains(p, 1e-12)));

        // Tilt the cube by 30° about z together with its support normal.
        let r = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), 30f64.to_radians());
        let tilted: Vec<Point3> = pts.iter().map(|p| r * p).collect();
        let nc = r * GRAVITY_UP;
        let b = fit_box(&tilted, &nc).unwrap();
        assert!((b.volume() - 1.0).abs() < 1e-9);
        let naive = fit_box(&tilted, &GRAVITY_UP).unwrap();
        assert!(b.volume() <= naive.volume());
        assert!(tilted.iter().all(|p| b.contains(p, 1e-9)));

        let single = fit_box(&[Vector3::new(1.0, 2.0, 3.0)], &GRAVITY_UP).unwrap();
        assert_eq!(single.volume(), 0.0);
        assert!(fit_box(&[], &GRAVITY_UP).is_none());
    }

    fn prop_box(min: [f64; 3], max: [f64; 3]) -> Proposal3D {
        Proposal3D {
            bbox: Box3D::axis_aligned(Vector3::from(min), Vector3::from(max)),
            members: vec![],
            score: 0.0,
        }
    }

    #[test]
    fn merging() {
        let disjoint = vec![prop_box([0.0; 3], [1.0; 3]), prop_box([2.0; 3], [3.0; 3])];
        assert_eq!(merge_boxes(disjoint.clone()), disjoint);
        // Touching faces do not merge.
        let touching = vec![prop_box([0.0; 3], [1.0; 3]), prop_box([1.0, 0.0, 0.0], [2.0, 1.0, 1.0])];
        assert_eq!(merge_boxes(touching).len(), 2);
        // A∩B, B∩C, A∩C = ∅.
        let chain = vec![
            prop_box([0.0; 3], [1.0; 3]),
            prop_box([2.0, 0.0, 0.0], [3.0, 1.0, 1.0]),
            prop_box([0.5, 0.0, 0.0], [2.5, 1.0, 1.0]),
        ];
        let m = merge_boxes(chain);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].bbox.min, Vector3::zeros());
        assert_eq!(m[0].bbox.max, Vector3::new(3.0, 1.0, 1.0));
    }

    proptest! {
        #[test]
        fn merged_boxes_pairwise_disjoint(
            raw in prop::collection::vec(([0.0f64..5.0, 0.0f64..5.0, 0.0f64..5.0], [0.1f64..1.5, 0.1f64..1.5, 0.1f64..1.5]), 0..20)
        ) {
            let boxes: Vec<Proposal3D> = raw.iter().map(|(o, e)| prop_box(*o, [o[0] + e[0], o[1] + e[1], o[2] + e[2]])).collect();
            let m = merge_boxes(boxes.clone());
            for i in 0..m.len() {
                for j in i + 1..m.len() {
                    prop_assert_eq!(m[i].bbox.overlap_volume(&m[j].bbox), 0.0);
                }
            }
            for b in &boxes {
                let covered = m.iter().any(|c| (0..3).all(|k| c.bbox.min[k] <= b.bbox.min[k] && c.bbox.max[k] >= b.bbox.max[k]));
                prop_assert!(covered);
            }
        }
    }

    #[test]
    fn volume_floor_inclusive() {
        let cm = 0.01;
        let half = prop_box([0.0; 3], [cm, cm, cm * 0.5]);
        let exact = prop_box([0.0; 3], [0.5, 0.5, 4e-6]);
        let big = prop_box([0.0; 3], [1.0; 3]);
        assert_eq!(exact.bbox.volume(), 1e-6);
        let kept = volume_filter(vec![half, exact.clone(), big.clone()], 1e-6);
        assert_eq!(kept, vec![exact, big]);
    }

    #[test]
    fn corners_round_trip() {
        let r = rotation_to_gravity(&Vector3::new(0.1, 1.0, -0.2));
        let b = Box3D {
            rotation: r,
            min: Vector3::new(-1.0, 0.0, 2.0),
            max: Vector3::new(0.5, 0.3, 2.4),
        };
        for c in b.corners() {
            assert!(b.contains(&c, 1e-12));
        }
        let back = b.reframed(&r);
        assert!((back.min - b.min).norm() < 1e-12 && (back.max - b.max).norm() < 1e-12);
    }
}
