use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::Vector3;
use prop3d::dataio::{read_boxes, read_depth_png, read_json, write_labeled_cloud, Label};
use prop3d::metrics::EvalReport;
use tempfile::TempDir;

fn prop3d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prop3d"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = prop3d(args);
    assert!(
        out.status.success(),
        "prop3d {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthetic sequence under `dir/seq`; returns the manifest path.
fn synth(dir: &Path, frames: &str, extra: &[&str]) -> PathBuf {
    let seq = dir.join("seq");
    let mut args = vec!["synth", "--out", s(&seq), "--seed", "4", "--objects", "3", "--frames", frames];
    args.extend_from_slice(extra);
    ok(&args);
    seq.join("manifest.toml")
}

fn mean_frame_time(timing: &Path) -> f64 {
    let mut rdr = csv::Reader::from_path(timing).unwrap();
    let col = rdr.headers().unwrap().iter().position(|h| h == "total_s").unwrap();
    let v: Vec<f64> = rdr.records().map(|r| r.unwrap()[col].parse().unwrap()).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn run_finds_every_object_and_eval_scores_it() {
    let dir = TempDir::new().unwrap();
    let manifest = synth(dir.path(), "20", &[]);
    let out = dir.path().join("run");
    ok(&["run", "--manifest", s(&manifest), "--out", s(&out)]);
    for f in ["boxes.json", "boxes_2d.csv", "cloud.ply", "heat.ply", "clusters.ply", "timing.csv", "config.toml"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    assert_eq!(read_boxes(&out.join("boxes.json")).unwrap().len(), 3);

    let timing = std::fs::read_to_string(out.join("timing.csv")).unwrap();
    let header = timing.lines().next().unwrap();
    for stage in ["proposal_filtering_s", "plane_removal_s", "confidence_frequency_s", "location_color_s"] {
        assert!(header.contains(stage), "{header}");
    }
    assert_eq!(timing.lines().count(), 21);

    let report_dir = dir.path().join("eval");
    ok(&[
        "eval", "--mode", "3d", "--boxes", s(&out.join("boxes.json")), "--manifest", s(&manifest), "--out", s(&report_dir),
    ]);
    let r: EvalReport = read_json(&report_dir.join("report.json")).unwrap();
    assert_eq!(r.dr, Some(1.0));
    assert_eq!(r.sr, Some(1.0));

    let printed = ok(&["eval", "--mode", "points", "--boxes", s(&out.join("boxes.json")), "--manifest", s(&manifest)]);
    assert!(String::from_utf8_lossy(&printed.stdout).contains("AP"));
    ok(&["eval", "--mode", "2d", "--boxes", s(&out.join("boxes_2d.csv")), "--manifest", s(&manifest)]);
}

#[test]
fn ground_truth_against_itself_scores_one_and_no_boxes_score_zero() {
    let dir = TempDir::new().unwrap();
    let manifest = synth(dir.path(), "2", &[]);
    let seq = manifest.parent().unwrap();
    let gt = seq.join("gt_boxes.json");
    let report = dir.path().join("r");
    ok(&["eval", "--mode", "3d", "--boxes", s(&gt), "--gt", s(&gt), "--out", s(&report)]);
    let r: EvalReport = read_json(&report.join("report.json")).unwrap();
    assert_eq!((r.dr, r.sr, r.iou, r.iou_o), (Some(1.0), Some(1.0), Some(1.0), Some(1.0)));

    // object points strictly inside the boxes, table points outside
    let boxes = read_boxes(&gt).unwrap();
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (i, b) in boxes.iter().enumerate() {
        let c = b.bbox().center();
        points.push(c);
        labels.push(Label::Object(i as u16));
        points.push(c + Vector3::new(0.0, -1.0, 0.0));
        labels.push(Label::Table);
    }
    let cloud = dir.path().join("cloud.csv");
    write_labeled_cloud(&cloud, &points, &labels).unwrap();
    ok(&["eval", "--mode", "points", "--boxes", s(&gt), "--gt", s(&cloud), "--out", s(&report)]);
    let r: EvalReport = read_json(&report.join("report.json")).unwrap();
    assert_eq!((r.ap, r.ar, r.f), (Some(1.0), Some(1.0), Some(1.0)));

    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, "[]").unwrap();
    ok(&["eval", "--mode", "3d", "--boxes", s(&empty), "--gt", s(&gt), "--out", s(&report)]);
    let r: EvalReport = read_json(&report.join("report.json")).unwrap();
    assert_eq!(r.dr, Some(0.0));
    ok(&["eval", "--mode", "points", "--boxes", s(&empty), "--manifest", s(&manifest), "--out", s(&report)]);
    let r: EvalReport = read_json(&report.join("report.json")).unwrap();
    assert_eq!(r.ar, Some(0.0));
}

#[test]
fn empty_proposals_exit_cleanly_with_no_boxes() {
    let dir = TempDir::new().unwrap();
    let manifest = synth(dir.path(), "6", &["--proposals", "0"]);
    let out = dir.path().join("run");
    ok(&["run", "--manifest", s(&manifest), "--out", s(&out)]);
    assert!(read_boxes(&out.join("boxes.json")).unwrap().is_empty());
}

#[test]
fn resuming_reproduces_the_uninterrupted_state() {
    let dir = TempDir::new().unwrap();
    let manifest = synth(dir.path(), "12", &[]);
    let m = s(&manifest);
    let p = |name: &str| dir.path().join(name);

    ok(&["run", "--manifest", m, "--out", s(&p("full")), "--until", "8", "--save-state", s(&p("full.state")), "--no-ply"]);
    ok(&["run", "--manifest", m, "--out", s(&p("part")), "--until", "4", "--save-state", s(&p("a.state")), "--no-ply"]);
    ok(&[
        "run", "--manifest", m, "--out", s(&p("part")), "--resume", s(&p("a.state")), "--until", "8", "--save-state", s(&p("b.state")), "--no-ply",
    ]);
    assert_eq!(std::fs::read(p("full.state")).unwrap(), std::fs::read(p("b.state")).unwrap());
    assert_eq!(
        std::fs::read(p("full/boxes.json")).unwrap(),
        std::fs::read(p("part/boxes.json")).unwrap()
    );
    let timing = std::fs::read_to_string(p("part/timing.csv")).unwrap();
    assert_eq!(timing.lines().count(), 10);

    let out = prop3d(&["run", "--manifest", m, "--out", s(&p("x")), "--resume", s(&p("a.state")), "--tau", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn downsampling_reduces_frame_time() {
    let dir = TempDir::new().unwrap();
    let manifest = synth(dir.path(), "10", &["--vga"]);
    let full = dir.path().join("full");
    let half = dir.path().join("half");
    let common = ["--threads", "1", "--no-ply", "--manifest", s(&manifest)];
    let mut a = vec!["run", "--out", s(&full)];
    a.extend_from_slice(&common);
    ok(&a);
    let mut b = vec!["run", "--out", s(&half), "--downsample", "2"];
    b.extend_from_slice(&common);
    ok(&b);
    let (t1, t2) = (mean_frame_time(&full.join("timing.csv")), mean_frame_time(&half.join("timing.csv")));
    assert!(t2 < t1, "downsampled {t2} s vs full {t1} s");
}

#[test]
fn debug_heatmap_stages_are_ordered_and_deterministic() {
    let dir = TempDir::new().unwrap();
    let manifest = synth(dir.path(), "3", &[]);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        ok(&["debug-heatmap", "--manifest", s(&manifest), "--frame", "1", "--out", s(out)]);
    }
    let load = |name: &str| read_depth_png(&a.join(name), 1.0).unwrap();
    let (base, weighted, suppressed) = (load("baseline.png"), load("weighted.png"), load("suppressed.png"));
    let triples = base.as_slice().iter().zip(weighted.as_slice()).zip(suppressed.as_slice());
    assert!(triples.clone().all(|((b, w), t)| b >= w && w >= t));
    assert!(triples.clone().any(|((_, w), t)| w > t), "plane suppression removed nothing");
    for f in ["baseline.png", "weighted.png", "suppressed.png", "overlay.png", "stages.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.toml");
    let out = dir.path().join("o");
    let r = prop3d(&["run", "--manifest", s(&missing), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));

    let manifest = synth(dir.path(), "1", &[]);
    let r = prop3d(&["run", "--manifest", s(&manifest), "--out", s(&out), "--downsample", "3"]);
    assert_eq!(r.status.code(), Some(2));
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "eps_p = -0.1\n").unwrap();
    let r = prop3d(&["run", "--manifest", s(&manifest), "--out", s(&out), "--config", s(&cfg)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("eps_p"));
    std::fs::write(&cfg, "unknown_key = 1\n").unwrap();
    let r = prop3d(&["run", "--manifest", s(&manifest), "--out", s(&out), "--config", s(&cfg)]);
    assert_eq!(r.status.code(), Some(2));
    let r = prop3d(&["frobnicate"]);
    assert_eq!(r.status.code(), Some(2));
}
