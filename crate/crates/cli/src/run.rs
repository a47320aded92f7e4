use std::fs::OpenOptions;
use std::path::Path;

use prop3d::dataio::{self, load_sequence, BoxRecord, DataError, GtBox2D, PlyColoring, Sequence};
use prop3d::geometry::Point3;
use prop3d::metrics::project_box_to_2d;
use prop3d::pipeline::{FrameTiming, Pipeline};
use prop3d::proposals3d::{frequency_filter, pseudo_average, Extraction};
use serde::Serialize;

use crate::args::{resolve_config, RunArgs};
use crate::error::CliError;

/// One line of `timing.csv`, seconds per stage.
#[derive(Debug, Serialize)]
struct TimingRow {
    frame: usize,
    proposals: usize,
    keyframe: bool,
    proposal_filtering_s: f64,
    plane_removal_s: f64,
    warp_s: f64,
    confidence_frequency_s: f64,
    location_color_s: f64,
    total_s: f64,
    matched: usize,
    inserted: usize,
    global_points: usize,
    rejected_proposals: usize,
    masked_proposals: usize,
}

impl From<&FrameTiming> for TimingRow {
    fn from(t: &FrameTiming) -> Self {
        Self {
            frame: t.frame,
            proposals: t.proposals,
            keyframe: t.keyframe,
            proposal_filtering_s: t.proposal_filtering_s,
            plane_removal_s: t.plane_removal_s,
            warp_s: t.warp_s,
            confidence_frequency_s: t.confidence_frequency_s,
            location_color_s: t.location_color_s,
            total_s: t.total_s,
            matched: t.matched,
            inserted: t.inserted,
            global_points: t.global_points,
            rejected_proposals: t.filter.rejected,
            masked_proposals: t.filter.masked,
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Appends to an existing log when resuming so the file covers the whole run.
fn write_timing(path: &Path, rows: &[TimingRow], append: bool) -> Result<(), DataError> {
    let append = append && path.exists();
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new().has_headers(!append).from_writer(file);
    for r in rows {
        w.serialize(r).map_err(|e| DataError::Invalid(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn run(args: &RunArgs) -> Result<(), CliError> {
    let seq = load_sequence(&args.manifest)?;
    let mut pipeline = match &args.resume {
        Some(state) => {
            if args.config.is_some() || args.flags.any() {
                return Err(CliError::Usage("--resume takes its config from the saved state; drop --config and overrides".into()));
            }
            let p = Pipeline::load_state(state)?;
            if p.input_intrinsics != seq.intrinsics {
                return Err(CliError::Usage(format!("{}: state was saved for different intrinsics", state.display())));
            }
            p
        }
        None => Pipeline::new(resolve_config(args.config.as_ref(), &args.flags)?, seq.intrinsics)?,
    };
    std::fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;

    let start = pipeline.last_frame.map_or(0, |i| i + 1);
    let end = args.until.map_or(seq.len(), |u| (u + 1).min(seq.len()));
    let mut rows = Vec::new();
    for i in start..end {
        match seq.load_frame(i) {
            Ok(Some(frame)) => {
                let t = pipeline.process(&frame);
                log::info!(
                    "frame {i}: {} proposals, {} matched, {} new, {:.3} s",
                    t.proposals,
                    t.matched,
                    t.inserted,
                    t.total_s
                );
                rows.push(TimingRow::from(&t));
            }
            Ok(None) => log::warn!("frame {i}: no pose within tolerance, skipped"),
            Err(e) => log::warn!("frame {i}: {e}; skipped"),
        }
    }
    if let Some(state) = &args.save_state {
        pipeline.save_state(state)?;
    }

    let ex = pipeline.finish();
    write_timing(&args.out.join("timing.csv"), &rows, args.resume.is_some())?;
    dataio::write_text(&args.out.join("config.toml"), &pipeline.config.to_toml_string())?;
    let boxes: Vec<BoxRecord> = ex.proposals.iter().map(BoxRecord::from_proposal).collect();
    dataio::write_boxes(&args.out.join("boxes.json"), &boxes)?;
    dataio::write_gt_boxes_2d(&args.out.join("boxes_2d.csv"), &project_boxes(&pipeline, &ex, &seq, end))?;
    if !args.no_ply {
        export_clouds(&args.out, &pipeline, &ex)?;
    }

    let mean = if rows.is_empty() {
        0.0
    } else {
        rows.iter().map(|r| r.total_s).sum::<f64>() / rows.len() as f64
    };
    println!(
        "{} frames processed ({} this run, {:.3} s/frame), {} global points, {} boxes",
        pipeline.frames_processed,
        rows.len(),
        mean,
        pipeline.global().len(),
        boxes.len()
    );
    Ok(())
}

/// Final boxes seen from every posed frame before `end`: the tight pixel box
/// of each box's member points.
fn project_boxes(pipeline: &Pipeline, ex: &Extraction, seq: &Sequence, end: usize) -> Vec<GtBox2D> {
    let g = pipeline.global();
    let k = &pipeline.input_intrinsics;
    let members: Vec<Vec<Point3>> = ex
        .proposals
        .iter()
        .map(|p| p.members.iter().map(|&m| g.points[m].position).collect())
        .collect();
    let mut out = Vec::new();
    for (frame, pose) in seq.poses.iter().enumerate().take(end) {
        let Some(pose) = pose else { continue };
        for (object, pts) in members.iter().enumerate() {
            if let Some(b) = project_box_to_2d(pts, k, pose) {
                out.push(GtBox2D {
                    frame,
                    object: object as u16,
                    x: b.x,
                    y: b.y,
                    w: b.w,
                    h: b.h,
                });
            }
        }
    }
    out
}

/// `cloud.ply`: ranked object points in their fused color. `heat.ply`:
/// frequency-filtered points colored by `c̄`. `clusters.ply`: ranked points
/// colored by the box they ended up in.
fn export_clouds(out: &Path, pipeline: &Pipeline, ex: &Extraction) -> Result<(), DataError> {
    let g = pipeline.global();
    let ranked: Vec<Point3> = ex.ranked.indices.iter().map(|&i| g.points[i].position).collect();
    let colors: Vec<[f64; 3]> = ex.ranked.indices.iter().map(|&i| g.points[i].color).collect();
    dataio::export_ply(&out.join("cloud.ply"), &ranked, PlyColoring::Rgb(&colors))?;

    let frequent = frequency_filter(g, g.frame_count.max(1));
    let pts: Vec<Point3> = frequent.iter().map(|&i| g.points[i].position).collect();
    let heat: Vec<f64> = frequent
        .iter()
        .map(|&i| pseudo_average(g.points[i].confidence, g.points[i].frequency, pipeline.config.tau))
        .collect();
    dataio::export_ply(&out.join("heat.ply"), &pts, PlyColoring::Heat(&heat))?;

    let mut owner = vec![None; g.len()];
    for (b, p) in ex.proposals.iter().enumerate() {
        for &m in &p.members {
            owner[m] = Some(b);
        }
    }
    let labels: Vec<Option<usize>> = ex.ranked.indices.iter().map(|&i| owner[i]).collect();
    dataio::export_ply(&out.join("clusters.ply"), &ranked, PlyColoring::Clusters(&labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timing_log_appends_without_repeating_the_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("timing.csv");
        let row = |frame| TimingRow::from(&FrameTiming {
            frame,
            total_s: 0.5,
            ..Default::default()
        });
        write_timing(&path, &[row(0), row(1)], false).unwrap();
        write_timing(&path, &[row(2)], true).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(text.lines().filter(|l| l.starts_with("frame,")).count(), 1);
        write_timing(&path, &[row(5)], false).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 2);
    }
}
