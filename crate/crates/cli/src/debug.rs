use prop3d::dataio::{self, load_sequence, DataError};
use prop3d::pipeline::Pipeline;
use serde::Serialize;

use crate::args::{resolve_config, DebugArgs};
use crate::error::CliError;

#[derive(Serialize)]
struct StageSummary {
    frame: usize,
    /// Heat mapped to full scale in every PNG.
    scale: f64,
    /// `[nx, ny, nz, b]` of the suppressed plane.
    plane: Option<[f64; 4]>,
    proposals: usize,
    outside_image: usize,
    rejected: usize,
    masked: usize,
    untouched: usize,
}

/// Writes `baseline.png` (`Ĥ`), `weighted.png` (`H_2D`), `suppressed.png`
/// (`H̃_2D`) as 16-bit gray on one common scale, `overlay.png` and
/// `stages.json`.
pub fn debug_heatmap(args: &DebugArgs) -> Result<(), CliError> {
    let config = resolve_config(args.config.as_ref(), &args.flags)?;
    let seq = load_sequence(&args.manifest)?;
    if args.frame >= seq.len() {
        return Err(CliError::Usage(format!("frame {} out of range (sequence has {})", args.frame, seq.len())));
    }
    let frame = seq
        .load_frame(args.frame)?
        .ok_or_else(|| CliError::Usage(format!("frame {} has no pose within tolerance", args.frame)))?;
    let pipeline = Pipeline::new(config, seq.intrinsics)?;
    let s = pipeline.heatmap_stages(&frame);
    let scale = s.baseline.as_slice().iter().copied().fold(0.0, f64::max);
    std::fs::create_dir_all(&args.out).map_err(|source| DataError::Io {
        path: args.out.clone(),
        source,
    })?;
    dataio::write_heatmap_png(&args.out.join("baseline.png"), &s.baseline, scale)?;
    dataio::write_heatmap_png(&args.out.join("weighted.png"), &s.weighted, scale)?;
    dataio::write_heatmap_png(&args.out.join("suppressed.png"), &s.suppressed, scale)?;
    let color = pipeline.working_frame(&frame).color;
    let top = s.suppressed.as_slice().iter().copied().fold(0.0, f64::max);
    dataio::write_overlay_png(&args.out.join("overlay.png"), &color, &s.suppressed, top)?;
    dataio::write_json(
        &args.out.join("stages.json"),
        &StageSummary {
            frame: args.frame,
            scale,
            plane: s.plane.map(|p| [p.normal.x, p.normal.y, p.normal.z, p.offset]),
            proposals: s.filter.total,
            outside_image: s.filter.outside_image,
            rejected: s.filter.rejected,
            masked: s.filter.masked,
            untouched: s.filter.untouched,
        },
    )?;
    println!("heatmap stages of frame {} written to {}", args.frame, args.out.display());
    Ok(())
}
