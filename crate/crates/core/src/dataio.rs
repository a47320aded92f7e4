//! Reading and writing sequences and results.
//!
//! On-disk layout of a sequence:
//!
//! - `manifest.toml` lists the frames (timestamp, color and depth PNG paths)
//!   and points at the other files, all relative to the manifest directory.
//! - The intrinsics file holds `fx, fy, cx, cy, width, height, depth_scale`.
//! - The trajectory has one line `timestamp tx ty tz qx qy qz qw` per pose,
//!   camera-to-world; it is inverted on load to the world-to-camera [`Pose`].
//! - Depth PNGs are 16-bit grayscale, divided by `depth_scale` to get meters.
//! - Proposals are one CSV per frame, `proposals/NNNNNN.csv`, columns
//!   `x,y,w,h,c`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb as ImgRgb};
use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use ply_rs::ply::{
    Addable, ElementDef, Encoding, Ply, Property, PropertyAccess, PropertyDef, PropertyType,
    ScalarType,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Intrinsics, Point3, Pose};
use crate::proposals2d::Proposal2D;
use crate::proposals3d::{Box3D, Proposal3D};
use crate::raster::{ColorImage, DepthImage, Raster};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Image { path: PathBuf, msg: String },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{path}: field `{field}`: {msg}")]
    Schema { path: PathBuf, field: String, msg: String },
    #[error("frame {index}: {source}")]
    Frame {
        index: usize,
        #[source]
        source: Box<DataError>,
    },
    #[error("{0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, DataError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn read_string(path: &Path) -> Result<String, DataError> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

/// Parses TOML, reporting the offending field path.
fn parse_toml<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, DataError> {
    let de = toml::Deserializer::parse(text).map_err(|e| DataError::Schema {
        path: path.to_path_buf(),
        field: String::new(),
        msg: e.to_string(),
    })?;
    serde_path_to_error::deserialize(de).map_err(|e| DataError::Schema {
        path: path.to_path_buf(),
        field: e.path().to_string(),
        msg: e.inner().to_string(),
    })
}

fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<(), DataError> {
    let text = toml::to_string(value).map_err(|e| DataError::Invalid(e.to_string()))?;
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Contents of the intrinsics file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraFile {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Stored depth units per meter, e.g. 1000 or 5000.
    pub depth_scale: f64,
}

impl CameraFile {
    pub fn intrinsics(&self) -> Result<Intrinsics, DataError> {
        Intrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)
            .map_err(|e| DataError::Invalid(e.to_string()))
    }
}

pub fn read_camera(path: &Path) -> Result<CameraFile, DataError> {
    let c: CameraFile = parse_toml(path, &read_string(path)?)?;
    c.intrinsics()?;
    if !(c.depth_scale > 0.0 && c.depth_scale.is_finite()) {
        return Err(DataError::Schema {
            path: path.to_path_buf(),
            field: "depth_scale".into(),
            msg: "must be positive".into(),
        });
    }
    Ok(c)
}

pub fn write_camera(path: &Path, camera: &CameraFile) -> Result<(), DataError> {
    write_toml(path, camera)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub timestamp: f64,
    pub color: PathBuf,
    pub depth: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthPaths {
    /// Boxes JSON in the same schema as pipeline output.
    pub boxes: Option<PathBuf>,
    /// CSV `x,y,z,label`.
    pub labeled_cloud: Option<PathBuf>,
    /// CSV `frame,object,x,y,w,h`.
    pub boxes_2d: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceManifest {
    pub intrinsics: PathBuf,
    pub trajectory: PathBuf,
    pub proposals_dir: Option<PathBuf>,
    /// Largest accepted gap between a frame and its nearest pose, seconds.
    #[serde(default = "default_pose_tolerance")]
    pub pose_tolerance: f64,
    #[serde(default)]
    pub ground_truth: GroundTruthPaths,
    pub frames: Vec<FrameEntry>,
}

fn default_pose_tolerance() -> f64 {
    0.02
}

pub fn read_manifest(path: &Path) -> Result<SequenceManifest, DataError> {
    let m: SequenceManifest = parse_toml(path, &read_string(path)?)?;
    if m.frames.is_empty() {
        return Err(DataError::Schema {
            path: path.to_path_buf(),
            field: "frames".into(),
            msg: "frame list is empty".into(),
        });
    }
    if let Some(i) = (1..m.frames.len()).find(|&i| m.frames[i].timestamp < m.frames[i - 1].timestamp) {
        return Err(DataError::Schema {
            path: path.to_path_buf(),
            field: format!("frames[{i}].timestamp"),
            msg: "frames are not time-ordered".into(),
        });
    }
    Ok(m)
}

pub fn write_manifest(path: &Path, manifest: &SequenceManifest) -> Result<(), DataError> {
    write_toml(path, manifest)
}

/// One input frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    pub timestamp: f64,
    pub color: ColorImage,
    pub depth: DepthImage,
    pub pose: Pose,
    pub proposals: Vec<Proposal2D>,
}

/// A stamped camera-to-world pose line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StampedPose {
    pub timestamp: f64,
    pub pose: Pose,
}

pub fn read_trajectory(path: &Path) -> Result<Vec<StampedPose>, DataError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let perr = |msg: String| DataError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let vals: Vec<f64> = t
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|e| perr(format!("`{s}`: {e}"))))
            .collect::<Result<_, _>>()?;
        if vals.len() != 8 || vals.iter().any(|v| !v.is_finite()) {
            return Err(perr("expected 8 finite values: timestamp tx ty tz qx qy qz qw".into()));
        }
        let q = Quaternion::new(vals[7], vals[4], vals[5], vals[6]);
        if q.norm() < 1e-9 {
            return Err(perr("zero quaternion".into()));
        }
        let center = Vector3::new(vals[1], vals[2], vals[3]);
        out.push(StampedPose {
            timestamp: vals[0],
            pose: Pose::from_camera_to_world(&UnitQuaternion::from_quaternion(q), &center),
        });
    }
    Ok(out)
}

pub fn write_trajectory(path: &Path, poses: &[StampedPose]) -> Result<(), DataError> {
    let mut w = create(path)?;
    writeln!(w, "# timestamp tx ty tz qx qy qz qw").map_err(io_err(path))?;
    for p in poses {
        let c = p.pose.center();
        let q = p.pose.camera_to_world_quaternion();
        writeln!(w, "{} {} {} {} {} {} {} {}", p.timestamp, c.x, c.y, c.z, q.i, q.j, q.k, q.w)
            .map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Nearest pose by timestamp, if within `tolerance`.
pub fn match_pose(poses: &[StampedPose], timestamp: f64, tolerance: f64) -> Option<Pose> {
    poses
        .iter()
        .min_by(|a, b| (a.timestamp - timestamp).abs().total_cmp(&(b.timestamp - timestamp).abs()))
        .filter(|p| (p.timestamp - timestamp).abs() <= tolerance)
        .map(|p| p.pose)
}

pub fn read_depth_png(path: &Path, depth_scale: f64) -> Result<DepthImage, DataError> {
    let img = image::open(path).map_err(|e| DataError::Image {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let g = img.into_luma16();
    let (w, h) = (g.width() as usize, g.height() as usize);
    Ok(Raster::from_vec(
        w,
        h,
        g.into_raw().into_iter().map(|d| d as f64 / depth_scale).collect(),
    ))
}

/// Stores `round(z · depth_scale)`. Depths past the 16-bit range are stored
/// as missing rather than clamped to a wrong distance.
pub fn write_depth_png(path: &Path, depth: &DepthImage, depth_scale: f64) -> Result<(), DataError> {
    let data: Vec<u16> = depth
        .as_slice()
        .iter()
        .map(|&z| {
            let d = (z * depth_scale).round();
            if z > 0.0 && d <= u16::MAX as f64 {
                d as u16
            } else {
                0
            }
        })
        .collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(depth.width() as u32, depth.height() as u32, data).unwrap();
    save_image(path, |p| img.save(p))
}

pub fn read_color_png(path: &Path) -> Result<ColorImage, DataError> {
    let img = image::open(path).map_err(|e| DataError::Image {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let rgb = img.into_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let data = rgb
        .pixels()
        .map(|p| [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0])
        .collect();
    Ok(Raster::from_vec(w, h, data))
}

fn to_u8(x: f64) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_color_png(path: &Path, color: &ColorImage) -> Result<(), DataError> {
    let data: Vec<u8> = color
        .as_slice()
        .iter()
        .flat_map(|c| [to_u8(c[0]), to_u8(c[1]), to_u8(c[2])])
        .collect();
    let img: ImageBuffer<ImgRgb<u8>, Vec<u8>> =
        ImageBuffer::from_raw(color.width() as u32, color.height() as u32, data).unwrap();
    save_image(path, |p| img.save(p))
}

fn save_image(path: &Path, save: impl FnOnce(&Path) -> image::ImageResult<()>) -> Result<(), DataError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    save(path).map_err(|e| DataError::Image {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// Proposals read from one CSV file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProposalFile {
    pub proposals: Vec<Proposal2D>,
    /// Rows whose box extended past the image and was clipped.
    pub clipped: usize,
    /// Rows entirely outside the image.
    pub dropped: usize,
}

/// Path of the proposals CSV of frame `index`.
pub fn proposals_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("{index:06}.csv"))
}

/// Reads `x,y,w,h,c` rows; a header line is optional. Boxes are clipped to
/// the `width × height` image.
pub fn read_proposals(path: &Path, width: usize, height: usize) -> Result<ProposalFile, DataError> {
    let file = File::open(path).map_err(io_err(path))?;
    parse_proposals(file, path, width, height)
}

pub fn parse_proposals(reader: impl Read, path: &Path, width: usize, height: usize) -> Result<ProposalFile, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut out = ProposalFile::default();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| DataError::Parse {
            path: path.to_path_buf(),
            line,
            msg: e.to_string(),
        })?;
        if i == 0 && rec.get(0).is_some_and(|f| f.eq_ignore_ascii_case("x")) {
            continue;
        }
        let perr = |msg: String| DataError::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        if rec.len() != 5 {
            return Err(perr(format!("expected 5 columns x,y,w,h,c, found {}", rec.len())));
        }
        let num = |k: usize| -> Result<f64, DataError> {
            let s = &rec[k];
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| perr(format!("column {} is not a finite number: `{s}`", k + 1)))
        };
        let (x, y, w, h, c) = (num(0)?, num(1)?, num(2)?, num(3)?, num(4)?);
        if w < 0.0 || h < 0.0 {
            return Err(perr("negative width or height".into()));
        }
        if c < 0.0 {
            return Err(perr("negative confidence".into()));
        }
        let p = Proposal2D::new(x.round() as i32, y.round() as i32, w.round() as i32, h.round() as i32, c);
        match p.clipped(width, height) {
            None => out.dropped += 1,
            Some(q) => {
                if q != p {
                    out.clipped += 1;
                }
                out.proposals.push(q);
            }
        }
    }
    Ok(out)
}

pub fn write_proposals(path: &Path, proposals: &[Proposal2D]) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let csv_err = |e: csv::Error| DataError::Invalid(format!("{}: {e}", path.display()));
    w.write_record(["x", "y", "w", "h", "c"]).map_err(csv_err)?;
    for p in proposals {
        w.write_record([p.x.to_string(), p.y.to_string(), p.w.to_string(), p.h.to_string(), p.c.to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

/// An opened sequence: manifest, camera and per-frame pose matches.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub root: PathBuf,
    pub manifest: SequenceManifest,
    pub camera: CameraFile,
    pub intrinsics: Intrinsics,
    /// Pose of each manifest frame, `None` when no pose is within tolerance.
    pub poses: Vec<Option<Pose>>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.manifest.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.frames.is_empty()
    }

    /// Frames skipped for lack of a matching pose.
    pub fn skipped(&self) -> usize {
        self.poses.iter().filter(|p| p.is_none()).count()
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.root.join(p)
    }

    /// Loads frame `index`; `Ok(None)` when it has no pose.
    pub fn load_frame(&self, index: usize) -> Result<Option<FrameRecord>, DataError> {
        let Some(pose) = self.poses[index] else {
            return Ok(None);
        };
        let wrap = |e: DataError| DataError::Frame {
            index,
            source: Box::new(e),
        };
        let entry = &self.manifest.frames[index];
        let color = read_color_png(&self.resolve(&entry.color)).map_err(wrap)?;
        let depth = read_depth_png(&self.resolve(&entry.depth), self.camera.depth_scale).map_err(wrap)?;
        let k = &self.intrinsics;
        if color.width() != k.width || color.height() != k.height || !depth.same_shape(&color) {
            return Err(wrap(DataError::Invalid(format!(
                "image size {}x{} / {}x{} does not match intrinsics {}x{}",
                color.width(),
                color.height(),
                depth.width(),
                depth.height(),
                k.width,
                k.height
            ))));
        }
        let proposals = match &self.manifest.proposals_dir {
            Some(dir) => read_proposals(&proposals_path(&self.resolve(dir), index), k.width, k.height)
                .map_err(wrap)?
                .proposals,
            None => Vec::new(),
        };
        Ok(Some(FrameRecord {
            index,
            timestamp: entry.timestamp,
            color,
            depth,
            pose,
            proposals,
        }))
    }

    /// Frames with a pose, in manifest order.
    pub fn records(&self) -> impl Iterator<Item = Result<FrameRecord, DataError>> + '_ {
        (0..self.len()).filter_map(move |i| self.load_frame(i).transpose())
    }
}

/// Opens the manifest at `path` and matches frames to poses.
pub fn load_sequence(path: &Path) -> Result<Sequence, DataError> {
    let manifest = read_manifest(path)?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let camera = read_camera(&root.join(&manifest.intrinsics))?;
    let intrinsics = camera.intrinsics()?;
    let traj = read_trajectory(&root.join(&manifest.trajectory))?;
    let poses: Vec<Option<Pose>> = manifest
        .frames
        .iter()
        .map(|f| match_pose(&traj, f.timestamp, manifest.pose_tolerance))
        .collect();
    let skipped = poses.iter().filter(|p| p.is_none()).count();
    if skipped > 0 {
        log::warn!("{skipped} frame(s) have no pose within {} s and are skipped", manifest.pose_tolerance);
    }
    Ok(Sequence {
        root,
        manifest,
        camera,
        intrinsics,
        poses,
    })
}

/// Serialized form of one output box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxRecord {
    /// World-to-gravity-frame rotation, row-major.
    pub rotation: [f64; 9],
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub corners: [[f64; 3]; 8],
    pub cluster_size: usize,
    #[serde(default)]
    pub score: f64,
}

impl BoxRecord {
    pub fn new(bbox: &Box3D, cluster_size: usize, score: f64) -> Self {
        let r = &bbox.rotation;
        Self {
            rotation: std::array::from_fn(|i| r[(i / 3, i % 3)]),
            min: bbox.min.into(),
            max: bbox.max.into(),
            corners: bbox.corners().map(|c| c.into()),
            cluster_size,
            score,
        }
    }

    pub fn from_proposal(p: &Proposal3D) -> Self {
        Self::new(&p.bbox, p.members.len(), p.score)
    }

    pub fn bbox(&self) -> Box3D {
        Box3D {
            rotation: Matrix3::from_row_slice(&self.rotation),
            min: self.min.into(),
            max: self.max.into(),
        }
    }

    /// First non-finite or inconsistent field, as a field path.
    fn invalid_field(&self) -> Option<(String, &'static str)> {
        let check = |name: &str, v: &[f64]| v.iter().position(|x| !x.is_finite()).map(|i| (format!("{name}[{i}]"), "not a finite number"));
        check("rotation", &self.rotation)
            .or_else(|| check("min", &self.min))
            .or_else(|| check("max", &self.max))
            .or_else(|| {
                self.corners
                    .iter()
                    .enumerate()
                    .find_map(|(c, v)| check(&format!("corners[{c}]"), v))
            })
            .or_else(|| (0..3).find(|&k| self.min[k] > self.max[k]).map(|k| (format!("min[{k}]"), "exceeds max")))
    }
}

fn validate_boxes(path: &Path, boxes: &[BoxRecord]) -> Result<(), DataError> {
    for (i, b) in boxes.iter().enumerate() {
        if let Some((field, msg)) = b.invalid_field() {
            return Err(DataError::Schema {
                path: path.to_path_buf(),
                field: format!("[{i}].{field}"),
                msg: msg.into(),
            });
        }
    }
    Ok(())
}

pub fn write_boxes(path: &Path, boxes: &[BoxRecord]) -> Result<(), DataError> {
    validate_boxes(path, boxes)?;
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, boxes).map_err(|e| DataError::Invalid(e.to_string()))?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn parse_boxes(text: &str, path: &Path) -> Result<Vec<BoxRecord>, DataError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let boxes: Vec<BoxRecord> = serde_path_to_error::deserialize(de).map_err(|e| DataError::Schema {
        path: path.to_path_buf(),
        field: e.path().to_string(),
        msg: e.inner().to_string(),
    })?;
    validate_boxes(path, &boxes)?;
    Ok(boxes)
}

pub fn read_boxes(path: &Path) -> Result<Vec<BoxRecord>, DataError> {
    parse_boxes(&read_string(path)?, path)
}

/// Ground-truth label of a cloud point or pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Empty,
    Floor,
    Table,
    Object(u16),
}

impl Label {
    /// CSV code: object id, `-1` table, `-2` floor, `-3` empty.
    pub fn code(self) -> i32 {
        match self {
            Label::Object(i) => i as i32,
            Label::Table => -1,
            Label::Floor => -2,
            Label::Empty => -3,
        }
    }

    pub fn from_code(c: i32) -> Option<Self> {
        match c {
            -1 => Some(Label::Table),
            -2 => Some(Label::Floor),
            -3 => Some(Label::Empty),
            i if (0..=u16::MAX as i32).contains(&i) => Some(Label::Object(i as u16)),
            _ => None,
        }
    }

    pub fn is_object(self) -> bool {
        matches!(self, Label::Object(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct LabeledRow {
    x: f64,
    y: f64,
    z: f64,
    label: i32,
}

pub fn write_labeled_cloud(path: &Path, points: &[Point3], labels: &[Label]) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for (p, l) in points.iter().zip(labels) {
        w.serialize(LabeledRow {
            x: p.x,
            y: p.y,
            z: p.z,
            label: l.code(),
        })
        .map_err(|e| DataError::Invalid(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_labeled_cloud(path: &Path) -> Result<(Vec<Point3>, Vec<Label>), DataError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| DataError::Invalid(format!("{}: {e}", path.display())))?;
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    for (i, row) in rdr.deserialize::<LabeledRow>().enumerate() {
        let perr = |msg: String| DataError::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            msg,
        };
        let r = row.map_err(|e| perr(e.to_string()))?;
        pts.push(Vector3::new(r.x, r.y, r.z));
        labels.push(Label::from_code(r.label).ok_or_else(|| perr(format!("bad label {}", r.label)))?);
    }
    Ok((pts, labels))
}

/// Ground-truth 2D box of one object in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtBox2D {
    pub frame: usize,
    pub object: u16,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

pub fn write_gt_boxes_2d(path: &Path, boxes: &[GtBox2D]) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for b in boxes {
        w.serialize(b).map_err(|e| DataError::Invalid(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_gt_boxes_2d(path: &Path) -> Result<Vec<GtBox2D>, DataError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| DataError::Invalid(format!("{}: {e}", path.display())))?;
    rdr.deserialize::<GtBox2D>()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| DataError::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                msg: e.to_string(),
            })
        })
        .collect()
}

/// One PLY vertex.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PlyVertex {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub red: u8,
    pub green: u8,
    pub blue: u8,
}

impl PropertyAccess for PlyVertex {
    fn new() -> Self {
        Self::default()
    }

    fn set_property(&mut self, name: String, property: Property) {
        match (name.as_str(), property) {
            ("x", Property::Float(v)) => self.x = v,
            ("y", Property::Float(v)) => self.y = v,
            ("z", Property::Float(v)) => self.z = v,
            ("red", Property::UChar(v)) => self.red = v,
            ("green", Property::UChar(v)) => self.green = v,
            ("blue", Property::UChar(v)) => self.blue = v,
            _ => {}
        }
    }

    fn get_float(&self, name: &String) -> Option<f32> {
        match name.as_str() {
            "x" => Some(self.x),
            "y" => Some(self.y),
            "z" => Some(self.z),
            _ => None,
        }
    }

    fn get_uchar(&self, name: &String) -> Option<u8> {
        match name.as_str() {
            "red" => Some(self.red),
            "green" => Some(self.green),
            "blue" => Some(self.blue),
            _ => None,
        }
    }
}

/// How to color exported points.
#[derive(Debug, Clone, PartialEq)]
pub enum PlyColoring<'a> {
    /// RGB in `[0, 1]` per point.
    Rgb(&'a [[f64; 3]]),
    /// Scalar per point mapped through [`heat_color`], normalized to the max.
    Heat(&'a [f64]),
    /// Cluster id per point; `None` is drawn gray.
    Clusters(&'a [Option<usize>]),
}

/// Blue → cyan → green → yellow → red ramp over `t ∈ [0, 1]`.
pub fn heat_color(t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let s = t * 4.0;
    let (r, g, b) = match s {
        s if s < 1.0 => (0.0, s, 1.0),
        s if s < 2.0 => (0.0, 1.0, 2.0 - s),
        s if s < 3.0 => (s - 2.0, 1.0, 0.0),
        s => (1.0, (4.0 - s).max(0.0), 0.0),
    };
    [to_u8(r), to_u8(g), to_u8(b)]
}

/// Deterministic distinct-ish color per cluster id.
pub fn cluster_color(id: usize) -> [u8; 3] {
    // golden-ratio hue stepping
    let h = (id as f64 * 0.618_033_988_749_895).fract();
    let s = h * 6.0;
    let x = 1.0 - (s % 2.0 - 1.0).abs();
    let (r, g, b) = match s as usize {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    [to_u8(0.2 + 0.8 * r), to_u8(0.2 + 0.8 * g), to_u8(0.2 + 0.8 * b)]
}

/// Writes a binary little-endian PLY with `x y z red green blue`.
pub fn export_ply(path: &Path, points: &[Point3], coloring: PlyColoring<'_>) -> Result<(), DataError> {
    let max_heat = match coloring {
        PlyColoring::Heat(v) => v.iter().copied().fold(0.0, f64::max),
        _ => 0.0,
    };
    let vertices: Vec<PlyVertex> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let [red, green, blue] = match coloring {
                PlyColoring::Rgb(c) => c[i].map(to_u8),
                PlyColoring::Heat(v) => heat_color(if max_heat > 0.0 { v[i] / max_heat } else { 0.0 }),
                PlyColoring::Clusters(l) => l[i].map_or([128, 128, 128], cluster_color),
            };
            PlyVertex {
                x: p.x as f32,
                y: p.y as f32,
                z: p.z as f32,
                red,
                green,
                blue,
            }
        })
        .collect();
    let mut ply = Ply::<PlyVertex>::new();
    ply.header.encoding = Encoding::BinaryLittleEndian;
    let mut vertex = ElementDef::new("vertex".into());
    for name in ["x", "y", "z"] {
        vertex
            .properties
            .add(PropertyDef::new(name.into(), PropertyType::Scalar(ScalarType::Float)));
    }
    for name in ["red", "green", "blue"] {
        vertex
            .properties
            .add(PropertyDef::new(name.into(), PropertyType::Scalar(ScalarType::UChar)));
    }
    ply.header.elements.add(vertex);
    ply.payload.insert("vertex".into(), vertices);
    ply.make_consistent()
        .map_err(|e| DataError::Invalid(format!("{}: {e:?}", path.display())))?;
    let mut w = create(path)?;
    ply_rs::writer::Writer::new()
        .write_ply(&mut w, &mut ply)
        .map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_ply(path: &Path) -> Result<Vec<PlyVertex>, DataError> {
    let mut r = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut ply = ply_rs::parser::Parser::<PlyVertex>::new()
        .read_ply(&mut r)
        .map_err(io_err(path))?;
    Ok(ply.payload.remove("vertex").unwrap_or_default())
}

/// 16-bit grayscale dump of a heatmap, `value / scale` mapped to full range.
pub fn write_heatmap_png(path: &Path, heat: &Raster<f64>, scale: f64) -> Result<(), DataError> {
    let s = if scale > 0.0 { scale } else { 1.0 };
    let data: Vec<u16> = heat
        .as_slice()
        .iter()
        .map(|&h| ((h / s).clamp(0.0, 1.0) * u16::MAX as f64).round() as u16)
        .collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(heat.width() as u32, heat.height() as u32, data).unwrap();
    save_image(path, |p| img.save(p))
}

/// Color image with the heatmap blended in through [`heat_color`].
pub fn write_overlay_png(path: &Path, color: &ColorImage, heat: &Raster<f64>, scale: f64) -> Result<(), DataError> {
    let s = if scale > 0.0 { scale } else { 1.0 };
    let out = Raster::from_fn(color.width(), color.height(), |u, v| {
        let t = (heat.at(u, v) / s).clamp(0.0, 1.0);
        let hc = heat_color(t);
        let c = color.at(u, v);
        let a = 0.6 * t;
        std::array::from_fn(|k| (1.0 - a) * c[k] + a * hc[k] as f64 / 255.0)
    });
    write_color_png(path, &out)
}

/// Writes any serializable value as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DataError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| DataError::Invalid(e.to_string()))?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, DataError> {
    let text = read_string(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| DataError::Schema {
        path: path.to_path_buf(),
        field: e.path().to_string(),
        msg: e.inner().to_string(),
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), DataError> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}
