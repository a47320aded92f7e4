//! Success rate of single-frame proposals against raw 2D proposals as the
//! number of input proposals grows.
//!
//! `cargo run --release --example proposal_counts -- [seed] [frames]`

use prop3d::config::PipelineConfig;
use prop3d::metrics::{detection_rate, iou2d, project_box_to_2d, success_rate, EvalBox2D, SceneBoxes};
use prop3d::pipeline::Pipeline;
use prop3d::synth::{render_frame, SceneSpec};

fn main() {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let seed = args.first().copied().unwrap_or(1);
    let frames = args.get(1).copied().unwrap_or(10) as usize;
    for m in [50, 100, 500, 1000, 2000] {
        let mut spec = SceneSpec::tabletop(seed, 4, frames);
        spec.proposals.total = Some(m);
        let k = spec.intrinsics();
        let mut ours = Vec::new();
        let mut raw = Vec::new();
        for i in 0..frames {
            let f = render_frame(&spec, i);
            let gt: Vec<EvalBox2D> = f.gt_boxes.iter().map(|b| b.1).collect();
            let mut p = Pipeline::new(PipelineConfig::default(), k).unwrap();
            p.process(&f.record);
            let ex = p.finish();
            let g = p.global();
            let outputs = ex
                .proposals
                .iter()
                .filter_map(|b| {
                    let pts: Vec<_> = b.members.iter().map(|&j| g.points[j].position).collect();
                    project_box_to_2d(&pts, &k, &f.record.pose)
                })
                .collect();
            ours.push(SceneBoxes { ground_truth: gt.clone(), outputs });
            let mut props = f.record.proposals.clone();
            props.sort_by(|a, b| b.c.total_cmp(&a.c));
            let outputs = props.iter().map(|p| EvalBox2D::new(p.x as f64, p.y as f64, p.w as f64, p.h as f64)).collect();
            raw.push(SceneBoxes { ground_truth: gt, outputs });
        }
        let n_out: usize = ours.iter().map(|s| s.outputs.len()).sum();
        println!(
            "M {m:5}: ours SR {:.3?} DR {:.3?} ({} boxes) | raw SR {:.4?} DR {:.3?}",
            success_rate(&ours, 0.5, iou2d).value,
            detection_rate(&ours, 0.5, iou2d).value,
            n_out,
            success_rate(&raw, 0.5, iou2d).value,
            detection_rate(&raw, 0.5, iou2d).value,
        );
    }
}
