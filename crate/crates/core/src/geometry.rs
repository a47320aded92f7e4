//! Pinhole camera model, rigid world-to-camera poses, projection,
//! backprojection, frame-to-frame pixel warping and the gravity alignment
//! rotation used for box fitting.
//!
//! Conventions: camera frame is x right, y down, z forward. A [`Pose`] maps
//! world points into the camera frame, `x_cam = R·x_world + t`. The world
//! "up" direction is `+y`.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::DepthImage;

pub type Point3 = Vector3<f64>;

/// World up axis that supporting-plane normals are rotated onto.
pub const GRAVITY_UP: Vector3<f64> = Vector3::new(0.0, 1.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("rotation is not orthonormal with det 1 (orthogonality error {ortho:.3e}, det {det})")]
    InvalidRotation { ortho: f64, det: f64 },
    #[error("invalid depth {0}")]
    InvalidDepth(f64),
}

/// Pinhole intrinsics plus the image size they apply to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: &str| Err(GeometryError::InvalidIntrinsics(m.to_owned()));
        if !(self.fx.is_finite() && self.fx > 0.0) {
            return bad("fx must be positive");
        }
        if !(self.fy.is_finite() && self.fy > 0.0) {
            return bad("fy must be positive");
        }
        if self.width == 0 || self.height == 0 {
            return bad("image size must be non-zero");
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return bad("cx must lie in [0, width)");
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return bad("cy must lie in [0, height)");
        }
        Ok(())
    }

    /// Intrinsics for images decimated by `factor` with nearest-neighbour
    /// sampling at pixel `(factor·u, factor·v)`.
    pub fn downsampled(&self, factor: usize) -> Self {
        let f = factor as f64;
        Self {
            fx: self.fx / f,
            fy: self.fy / f,
            cx: self.cx / f,
            cy: self.cy / f,
            width: self.width.div_ceil(factor),
            height: self.height.div_ceil(factor),
        }
    }

    #[inline]
    pub fn contains(&self, px: Pixel) -> bool {
        px.u >= 0.0 && px.v >= 0.0 && px.u < self.width as f64 && px.v < self.height as f64
    }

    /// Camera-frame point for pixel `(u, v)` at depth `z`.
    #[inline]
    pub fn unproject(&self, px: Pixel, z: f64) -> Point3 {
        Vector3::new(z * (px.u - self.cx) / self.fx, z * (px.v - self.cy) / self.fy, z)
    }
}

/// World-to-camera rigid transform `[R | t]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Checked constructor: `RᵀR = I` and `det R = 1` within 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if !(ortho <= 1e-9 && (det - 1.0).abs() <= 1e-9) || !translation.iter().all(|x| x.is_finite())
        {
            return Err(GeometryError::InvalidRotation { ortho, det });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Builds the world-to-camera pose from a camera-to-world orientation and
    /// camera center, the form trajectory files store.
    pub fn from_camera_to_world(orientation: &UnitQuaternion<f64>, center: &Vector3<f64>) -> Self {
        let r_cw = orientation.to_rotation_matrix().into_inner();
        let rotation = r_cw.transpose();
        Self {
            rotation,
            translation: -(rotation * center),
        }
    }

    /// Camera looking from `eye` towards `target`, with image "up" roughly
    /// along world `+y`.
    pub fn look_at(eye: &Point3, target: &Point3) -> Self {
        let forward = (target - eye).normalize();
        let mut right = forward.cross(&GRAVITY_UP);
        if right.norm() < 1e-9 {
            // Looking straight up or down: pick any perpendicular.
            right = forward.cross(&Vector3::z());
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        // Rows of the world-to-camera rotation are the camera axes in world
        // coordinates.
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        Self {
            rotation,
            translation: -(rotation * eye),
        }
    }

    /// Camera center in world coordinates, `-Rᵀt`.
    pub fn center(&self) -> Point3 {
        -(self.rotation.transpose() * self.translation)
    }

    /// Camera-to-world orientation as a unit quaternion.
    pub fn camera_to_world_quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_matrix(&self.rotation.transpose())
    }

    #[inline]
    pub fn to_camera(&self, xw: &Point3) -> Point3 {
        self.rotation * xw + self.translation
    }

    #[inline]
    pub fn to_world(&self, xp: &Point3) -> Point3 {
        self.rotation.transpose() * (xp - self.translation)
    }
}

/// Continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// Projects a world point. Returns `None` when the point is not in front of
/// the camera (camera-frame `z <= 0`); image bounds are not checked.
#[inline]
pub fn project(k: &Intrinsics, pose: &Pose, xw: &Point3) -> Option<Pixel> {
    project_camera(k, &pose.to_camera(xw))
}

#[inline]
pub fn project_camera(k: &Intrinsics, xp: &Point3) -> Option<Pixel> {
    if !(xp.z > 0.0) {
        return None;
    }
    Some(Pixel {
        u: k.fx * xp.x / xp.z + k.cx,
        v: k.fy * xp.y / xp.z + k.cy,
    })
}

/// Lifts pixel `xc` at metric depth `z` into the world frame.
#[inline]
pub fn backproject(k: &Intrinsics, pose: &Pose, xc: Pixel, z: f64) -> Result<Point3, GeometryError> {
    if !(z.is_finite() && z > 0.0) {
        return Err(GeometryError::InvalidDepth(z));
    }
    Ok(pose.to_world(&k.unproject(xc, z)))
}

/// Result of warping one pixel of the previous frame into the current one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpedPixel {
    pub u: usize,
    pub v: usize,
    /// Depth of the warped point in the current camera frame.
    pub depth: f64,
}

/// Warps `xc_prev` (with depth `z_prev`) from the previous camera into the
/// current one and rounds to the nearest pixel (ties away from zero).
///
/// Returns `None` for invalid depth, points behind the current camera and
/// pixels that land outside the image.
pub fn warp_pixel(
    k: &Intrinsics,
    prev: &Pose,
    cur: &Pose,
    xc_prev: Pixel,
    z_prev: f64,
) -> Option<WarpedPixel> {
    let xw = backproject(k, prev, xc_prev, z_prev).ok()?;
    let xp = cur.to_camera(&xw);
    let px = project_camera(k, &xp)?;
    let u = px.u.round();
    let v = px.v.round();
    if u < 0.0 || v < 0.0 || u >= k.width as f64 || v >= k.height as f64 {
        return None;
    }
    Some(WarpedPixel {
        u: u as usize,
        v: v as usize,
        depth: xp.z,
    })
}

/// World-frame points of every valid-depth pixel of one frame.
#[derive(Debug, Clone, Default)]
pub struct FrameCloud {
    pub width: usize,
    pub height: usize,
    pub points: Vec<Point3>,
    /// Row-major pixel index of each point.
    pub pixels: Vec<u32>,
    /// Point index per pixel, [`FrameCloud::NONE`] where depth is missing.
    pub pixel_to_point: Vec<u32>,
}

impl FrameCloud {
    pub const NONE: u32 = u32::MAX;

    pub fn from_depth(k: &Intrinsics, pose: &Pose, depth: &DepthImage) -> Self {
        let (width, height) = (depth.width(), depth.height());
        let mut points = Vec::new();
        let mut pixels = Vec::new();
        let mut pixel_to_point = vec![Self::NONE; width * height];
        for v in 0..height {
            for u in 0..width {
                let z = depth.at(u, v);
                if let Ok(x) = backproject(k, pose, Pixel::new(u as f64, v as f64), z) {
                    let idx = v * width + u;
                    pixel_to_point[idx] = points.len() as u32;
                    points.push(x);
                    pixels.push(idx as u32);
                }
            }
        }
        Self {
            width,
            height,
            points,
            pixels,
            pixel_to_point,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn pixel_of(&self, point: usize) -> (usize, usize) {
        let p = self.pixels[point] as usize;
        (p % self.width, p / self.width)
    }

    #[inline]
    pub fn point_at(&self, u: usize, v: usize) -> Option<usize> {
        let i = self.pixel_to_point[v * self.width + u];
        (i != Self::NONE).then_some(i as usize)
    }
}

#[inline]
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation taking the supporting-plane normal `nc` onto [`GRAVITY_UP`].
///
/// Uses `R = I + [v]× + (1-c)/s² [v]×²` with `v = nc × up`, `s = |v|`,
/// `c = nc·up`. The factor is evaluated as `1/(1+c)`, which is the same
/// quantity without the cancellation in `1-c` and `s²`. Normals in the lower
/// hemisphere are first flipped by a half turn about x so the formula is only
/// ever evaluated with `c >= 0`; in particular `nc = -up` yields that half
/// turn and `nc = up` yields the identity.
pub fn rotation_to_gravity(nc: &Vector3<f64>) -> Matrix3<f64> {
    let n = nc.normalize();
    if n.dot(&GRAVITY_UP) < 0.0 {
        let flip = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
        return rotation_upper(&(flip * n)) * flip;
    }
    rotation_upper(&n)
}

fn rotation_upper(n: &Vector3<f64>) -> Matrix3<f64> {
    let v = n.cross(&GRAVITY_UP);
    let c = n.dot(&GRAVITY_UP);
    if v.norm() == 0.0 {
        return Matrix3::identity();
    }
    let vx = skew(&v);
    Matrix3::identity() + vx + vx * vx * (1.0 / (1.0 + c))
}
