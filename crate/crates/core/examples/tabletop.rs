//! Runs the pipeline over a synthetic tabletop scene and prints the metrics.
//!
//! `cargo run --release --example tabletop -- [seed] [objects] [frames]`

use prop3d::config::PipelineConfig;
use prop3d::metrics::{iou3d, point_pr};
use prop3d::pipeline::Pipeline;
use prop3d::synth::{emit_ground_truth, render_frame, SceneSpec};

fn main() {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let seed = args.first().copied().unwrap_or(1);
    let n = args.get(1).copied().unwrap_or(4) as usize;
    let frames = args.get(2).copied().unwrap_or(60) as usize;

    let spec = SceneSpec::tabletop(seed, n, frames);
    let mut pipeline = Pipeline::new(PipelineConfig::default(), spec.intrinsics()).expect("default config is valid");
    let start = std::time::Instant::now();
    for i in 0..frames {
        pipeline.process(&render_frame(&spec, i).record);
    }
    let out = pipeline.finish();
    println!(
        "{} frames in {:.2}s, {} global points, {} ranked, {} clusters, {} boxes",
        frames,
        start.elapsed().as_secs_f64(),
        pipeline.global().len(),
        out.ranked.len(),
        out.clusters,
        out.proposals.len()
    );

    let gt = emit_ground_truth(&spec, 0.005);
    for (id, b) in &gt.boxes {
        let best = out.proposals.iter().map(|p| iou3d(b, &p.bbox)).fold(0.0, f64::max);
        println!("object {id}: best IoU {best:.3}");
    }
    for p in &out.proposals {
        println!("box {:?} .. {:?} members {} score {:.3}", p.bbox.min.as_slice(), p.bbox.max.as_slice(), p.members.len(), p.score);
    }
    let boxes: Vec<_> = out.proposals.iter().map(|p| p.bbox).collect();
    let pr = point_pr(&gt.points, &gt.positives(), &boxes, 0.0);
    println!("AP {:.4} AR {:?} tp {} fp {} positives {}", pr.ap, pr.ar, pr.tp, pr.fp, pr.positives);
}
