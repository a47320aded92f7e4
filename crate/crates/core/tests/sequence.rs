use std::collections::HashSet;

use prop3d::config::PipelineConfig;
use prop3d::dataio::{load_sequence, read_boxes, read_labeled_cloud};
use prop3d::fusion::{warp_match, MatchThresholds};
use prop3d::pipeline::Pipeline;
use prop3d::synth::{render_frame, write_sequence, SceneSpec};

/// Current pixels that some previous pixel lands on with agreeing depth,
/// computed directly from the poses.
fn covisible(spec: &SceneSpec, a: usize, b: usize) -> HashSet<(usize, usize)> {
    let k = spec.intrinsics();
    let (fa, fb) = (render_frame(spec, a).record, render_frame(spec, b).record);
    let mut out = HashSet::new();
    for v in 0..k.height {
        for u in 0..k.width {
            let z = *fa.depth.get(u, v);
            if z <= 0.0 {
                continue;
            }
            let xa = nalgebra::Vector3::new((u as f64 - k.cx) * z / k.fx, (v as f64 - k.cy) * z / k.fy, z);
            let xw = fa.pose.rotation.transpose() * (xa - fa.pose.translation);
            let xb = fb.pose.rotation * xw + fb.pose.translation;
            if xb.z <= 0.0 {
                continue;
            }
            let (ub, vb) = ((k.fx * xb.x / xb.z + k.cx).round(), (k.fy * xb.y / xb.z + k.cy).round());
            if ub < 0.0 || vb < 0.0 || ub >= k.width as f64 || vb >= k.height as f64 {
                continue;
            }
            let (ub, vb) = (ub as usize, vb as usize);
            let zb = *fb.depth.get(ub, vb);
            if zb > 0.0 && (zb - xb.z).abs() < 0.01 {
                out.insert((ub, vb));
            }
        }
    }
    out
}

#[test]
fn consecutive_frames_match_almost_every_overlapping_pixel() {
    let spec = SceneSpec::tabletop(2, 3, 60);
    let k = spec.intrinsics();
    for (a, b) in [(10, 11), (30, 31)] {
        let (fa, fb) = (render_frame(&spec, a).record, render_frame(&spec, b).record);
        let table = warp_match(&k, &fa.depth, &fa.color, &fa.pose, &fb.depth, &fb.color, &fb.pose, &MatchThresholds::default());
        let oracle = covisible(&spec, a, b);
        let mut hit = 0;
        for &(u, v) in &oracle {
            if table.matches.get(u, v).is_some() {
                hit += 1;
            }
        }
        let ratio = hit as f64 / oracle.len() as f64;
        assert!(oracle.len() > k.width * k.height / 2, "fixture overlaps too little");
        assert!(ratio > 0.95, "frames {a}->{b}: matched {ratio:.4} of {} overlapping pixels", oracle.len());
    }
}

#[test]
fn sequence_on_disk_reproduces_the_in_memory_run() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SceneSpec::tabletop(6, 3, 12);
    write_sequence(&spec, dir.path()).unwrap();
    let seq = load_sequence(&dir.path().join("manifest.toml")).unwrap();
    assert_eq!(seq.len(), 12);
    assert_eq!(seq.skipped(), 0);

    let config = PipelineConfig::default();
    let mut from_disk = Pipeline::new(config, seq.intrinsics).unwrap();
    let mut in_memory = Pipeline::new(config, spec.intrinsics()).unwrap();
    for (i, record) in seq.records().enumerate() {
        let record = record.unwrap();
        let original = render_frame(&spec, i).record;
        assert_eq!(record.proposals, original.proposals);
        // 16-bit depth at 1/5000 m keeps every sample within 0.1 mm up to
        // 13.1 m; farther samples read back as missing
        for (a, b) in record.depth.as_slice().iter().zip(original.depth.as_slice()) {
            if *b * 5000.0 > u16::MAX as f64 {
                assert_eq!(*a, 0.0);
            } else {
                assert!((a - b).abs() <= 0.5 / 5000.0 + 1e-12, "{a} vs {b}");
            }
        }
        from_disk.process(&record);
        in_memory.process(&original);
    }
    let (a, b) = (from_disk.finish(), in_memory.finish());
    assert_eq!(a.proposals.len(), 3);
    assert_eq!(a.proposals.len(), b.proposals.len());

    let gt = read_boxes(&dir.path().join("gt_boxes.json")).unwrap();
    assert_eq!(gt.len(), 3);
    let (points, labels) = read_labeled_cloud(&dir.path().join("gt_points.csv")).unwrap();
    assert_eq!(points.len(), labels.len());
    assert!(labels.iter().any(|l| l.is_object()));
}
