use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use prop3d::dataio::{self, read_boxes, read_gt_boxes_2d, read_labeled_cloud, read_manifest, GtBox2D};
use prop3d::metrics::{iou2d, iou3d, point_pr, EvalBox2D, EvalReport, SceneBoxes};
use prop3d::proposals3d::Box3D;

use crate::args::{EvalArgs, EvalMode};
use crate::error::CliError;

fn scene_name(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    match path.parent().and_then(Path::file_name) {
        Some(dir) => format!("{}/{stem}", dir.to_string_lossy()),
        None => stem,
    }
}

/// Ground-truth file per scene, from `--gt` or the manifests.
fn ground_truth_paths(args: &EvalArgs) -> Result<Vec<PathBuf>, CliError> {
    let paths = if !args.gt.is_empty() {
        args.gt.clone()
    } else if !args.manifest.is_empty() {
        let mut out = Vec::new();
        for m in &args.manifest {
            let manifest = read_manifest(m)?;
            let gt = &manifest.ground_truth;
            let rel = match args.mode {
                EvalMode::TwoD => gt.boxes_2d.as_ref(),
                EvalMode::ThreeD => gt.boxes.as_ref(),
                EvalMode::Points => gt.labeled_cloud.as_ref(),
            };
            let rel = rel.ok_or_else(|| CliError::Usage(format!("{}: no ground truth for this mode", m.display())))?;
            out.push(m.parent().unwrap_or(Path::new("")).join(rel));
        }
        out
    } else {
        return Err(CliError::Usage("need --gt or --manifest".into()));
    };
    if paths.len() != args.boxes.len() {
        return Err(CliError::Usage(format!(
            "{} box files but {} ground-truth files",
            args.boxes.len(),
            paths.len()
        )));
    }
    Ok(paths)
}

fn boxes_3d(path: &Path) -> Result<Vec<Box3D>, CliError> {
    Ok(read_boxes(path)?.iter().map(|b| b.bbox()).collect())
}

fn by_frame(boxes: Vec<GtBox2D>) -> BTreeMap<usize, Vec<EvalBox2D>> {
    let mut m: BTreeMap<usize, Vec<EvalBox2D>> = BTreeMap::new();
    for b in boxes {
        m.entry(b.frame).or_default().push(EvalBox2D::new(b.x, b.y, b.w, b.h));
    }
    m
}

pub fn evaluate(args: &EvalArgs) -> Result<EvalReport, CliError> {
    if !(args.iou > 0.0 && args.iou <= 1.0) {
        return Err(CliError::Usage("--iou must be in (0, 1]".into()));
    }
    let gt_paths = ground_truth_paths(args)?;
    let pairs = args.boxes.iter().zip(&gt_paths);
    Ok(match args.mode {
        EvalMode::ThreeD => {
            let mut names = Vec::new();
            let mut scenes = Vec::new();
            for (b, g) in pairs {
                names.push(scene_name(b));
                scenes.push(SceneBoxes {
                    ground_truth: boxes_3d(g)?,
                    outputs: boxes_3d(b)?,
                });
            }
            EvalReport::boxes("3d", &names, &scenes, args.iou, iou3d)
        }
        EvalMode::TwoD => {
            let mut names = Vec::new();
            let mut scenes = Vec::new();
            for (b, g) in pairs {
                let mut outputs = by_frame(read_gt_boxes_2d(b)?);
                let gt = by_frame(read_gt_boxes_2d(g)?);
                let frames: Vec<usize> = gt.keys().chain(outputs.keys()).copied().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
                for f in frames {
                    names.push(format!("{}:{f}", scene_name(b)));
                    scenes.push(SceneBoxes {
                        ground_truth: gt.get(&f).cloned().unwrap_or_default(),
                        outputs: outputs.remove(&f).unwrap_or_default(),
                    });
                }
            }
            EvalReport::boxes("2d", &names, &scenes, args.iou, iou2d)
        }
        EvalMode::Points => {
            let mut names = Vec::new();
            let mut per_scene = Vec::new();
            for (b, g) in pairs {
                let (points, labels) = read_labeled_cloud(g)?;
                let positive: Vec<bool> = labels.iter().map(|l| l.is_object()).collect();
                names.push(scene_name(b));
                per_scene.push(point_pr(&points, &positive, &boxes_3d(b)?, args.tolerance));
            }
            EvalReport::points(&names, &per_scene)
        }
    })
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let report = evaluate(args)?;
    let table = report.to_table();
    print!("{table}");
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out).map_err(|source| dataio::DataError::Io {
            path: out.clone(),
            source,
        })?;
        dataio::write_json(&out.join("report.json"), &report)?;
        dataio::write_text(&out.join("report.txt"), &table)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_names_keep_the_run_directory() {
        assert_eq!(scene_name(Path::new("/x/run3/boxes.json")), "run3/boxes");
        assert_eq!(scene_name(Path::new("boxes.json")), "boxes");
    }

    #[test]
    fn boxes_group_by_frame() {
        let b = |frame, x| GtBox2D {
            frame,
            object: 0,
            x,
            y: 0.0,
            w: 1.0,
            h: 1.0,
        };
        let m = by_frame(vec![b(3, 1.0), b(1, 2.0), b(3, 4.0)]);
        assert_eq!(m.keys().copied().collect::<Vec<_>>(), vec![1, 3]);
        assert_eq!(m[&3].len(), 2);
    }
}
