//! Planar-rigid poses, camera intrinsics and depth backprojection.
//!
//! Every frame in the simulator (world, agent body, camera) uses the same
//! axis convention: `+x` right, `+y` down, `+z` forward. Heights above the
//! floor are therefore negative `y` values; the floor is the `y = 0` plane.
//! Yaw rotates about the vertical axis and turning right increases yaw.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sensors::{DepthFrame, Mask};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("pixel ({u}, {v}) outside a {width}x{height} image")]
    PixelOutOfBounds {
        u: f64,
        v: f64,
        width: u32,
        height: u32,
    },
    #[error("depth {0} is not in (0, max_range]")]
    InvalidDepth(f64),
    #[error("resolution mismatch: {what} is {got:?}, camera is {expected:?}")]
    ResolutionMismatch {
        what: &'static str,
        got: (u32, u32),
        expected: (u32, u32),
    },
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
}

/// A point in some frame; the frame is implied by context.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Point3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, other: Point3) -> f64 {
        (self - other).norm()
    }

    /// Distance in the horizontal (x, z) plane.
    pub fn planar_norm(self) -> f64 {
        self.x.hypot(self.z)
    }

    /// Horizontal bearing: 0 straight ahead, positive to the right.
    pub fn bearing(self) -> f64 {
        self.x.atan2(self.z)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn component(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("axis index {axis} out of range"),
        }
    }

    pub fn lerp(self, other: Point3, t: f64) -> Point3 {
        self + (other - self) * t
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_yaw(yaw: f64) -> f64 {
    let wrapped = (yaw + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped <= -PI {
        PI
    } else {
        wrapped
    }
}

/// Planar rigid transform with a vertical offset.
///
/// A pose maps points from a child frame into its parent frame: rotate about
/// the vertical axis by `yaw`, then translate by `(x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

impl Default for Pose {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        x: 0.0,
        y: 0.0,
        z: 0.0,
        yaw: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            z,
            yaw: normalize_yaw(yaw),
        }
    }

    pub fn from_translation(t: Point3) -> Self {
        Self::new(t.x, t.y, t.z, 0.0)
    }

    pub fn translation(&self) -> Point3 {
        Point3::new(self.x, self.y, self.z)
    }

    /// Rotates a direction by this pose's yaw (no translation).
    pub fn rotate(&self, p: Point3) -> Point3 {
        let (s, c) = self.yaw.sin_cos();
        Point3::new(c * p.x + s * p.z, p.y, -s * p.x + c * p.z)
    }

    pub fn transform_point(&self, p: Point3) -> Point3 {
        self.rotate(p) + self.translation()
    }

    /// `self ∘ other`: first `other`, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        let t = self.transform_point(other.translation());
        Pose::new(t.x, t.y, t.z, self.yaw + other.yaw)
    }

    pub fn inverse(&self) -> Pose {
        let back = Pose::new(0.0, 0.0, 0.0, -self.yaw);
        let t = back.rotate(-self.translation());
        Pose::new(t.x, t.y, t.z, -self.yaw)
    }

    /// Motion that takes `self` to `other`, expressed in `self`'s frame.
    pub fn delta_to(&self, other: &Pose) -> Pose {
        self.inverse().compose(other)
    }

    pub fn heading(&self) -> Point3 {
        self.rotate(Point3::new(0.0, 0.0, 1.0))
    }
}

pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

pub fn invert(a: &Pose) -> Pose {
    a.inverse()
}

pub fn transform_point(pose: &Pose, p: Point3) -> Point3 {
    pose.transform_point(p)
}

/// Pinhole intrinsics plus the sensor's resolution and range limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub horizontal_fov: f64,
    pub max_range: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self::from_fov(224, 224, 90.0, 5.0).expect("default camera is valid")
    }
}

impl CameraModel {
    /// Square-pixel camera with the principal point at the image center.
    pub fn from_fov(
        width: u32,
        height: u32,
        horizontal_fov_deg: f64,
        max_range: f64,
    ) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidCamera(format!(
                "resolution {width}x{height}"
            )));
        }
        if !(horizontal_fov_deg > 0.0 && horizontal_fov_deg < 180.0) {
            return Err(GeometryError::InvalidCamera(format!(
                "horizontal fov {horizontal_fov_deg}"
            )));
        }
        if !(max_range > 0.0 && max_range.is_finite()) {
            return Err(GeometryError::InvalidCamera(format!(
                "max range {max_range}"
            )));
        }
        let half_w = width as f64 / 2.0;
        let half_h = height as f64 / 2.0;
        let tan_h = (horizontal_fov_deg.to_radians() / 2.0).tan();
        let fx = half_w / tan_h;
        let vertical_fov = 2.0 * (tan_h * half_h / half_w).atan();
        let fy = half_h / (vertical_fov / 2.0).tan();
        Ok(Self {
            width,
            height,
            fx,
            fy,
            cx: half_w,
            cy: half_h,
            horizontal_fov: horizontal_fov_deg,
            max_range,
        })
    }

    /// Explicit intrinsics, for tests and externally calibrated sensors.
    pub fn from_intrinsics(
        width: u32,
        height: u32,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        max_range: f64,
    ) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 || !(fx > 0.0) || !(fy > 0.0) || !(max_range > 0.0) {
            return Err(GeometryError::InvalidCamera(format!(
                "{width}x{height} fx={fx} fy={fy} max_range={max_range}"
            )));
        }
        Ok(Self {
            width,
            height,
            fx,
            fy,
            cx,
            cy,
            horizontal_fov: 2.0 * ((width as f64 / 2.0) / fx).atan().to_degrees(),
            max_range,
        })
    }

    pub fn resolution(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Camera-frame direction of the ray through pixel `(u, v)`, scaled so
    /// that its `z` component is 1. A hit at parameter `t` has depth `t`.
    pub fn ray_direction(&self, u: f64, v: f64) -> Point3 {
        Point3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Projects a camera-frame point with `z > 0` to continuous pixel coordinates.
    pub fn project(&self, p: Point3) -> (f64, f64) {
        (self.cx + self.fx * p.x / p.z, self.cy + self.fy * p.y / p.z)
    }
}

/// Lifts pixel `(u, v)` at planar depth `depth` into the camera frame.
pub fn backproject_pixel(
    u: f64,
    v: f64,
    depth: f64,
    cam: &CameraModel,
) -> Result<Point3, GeometryError> {
    if !(u >= 0.0 && u < cam.width as f64 && v >= 0.0 && v < cam.height as f64) {
        return Err(GeometryError::PixelOutOfBounds {
            u,
            v,
            width: cam.width,
            height: cam.height,
        });
    }
    if !(depth > 0.0 && depth <= cam.max_range) {
        return Err(GeometryError::InvalidDepth(depth));
    }
    Ok(Point3::new(
        (u - cam.cx) * depth / cam.fx,
        (v - cam.cy) * depth / cam.fy,
        depth,
    ))
}

/// Mean of the backprojected points under `mask`, skipping pixels without a
/// valid return. `Ok(None)` means nothing usable was under the mask.
pub fn backproject_masked_centroid(
    depth: &DepthFrame,
    mask: &Mask,
    cam: &CameraModel,
) -> Result<Option<Point3>, GeometryError> {
    let expected = cam.resolution();
    if depth.resolution() != expected {
        return Err(GeometryError::ResolutionMismatch {
            what: "depth frame",
            got: depth.resolution(),
            expected,
        });
    }
    if mask.resolution() != expected {
        return Err(GeometryError::ResolutionMismatch {
            what: "mask",
            got: mask.resolution(),
            expected,
        });
    }
    let width = cam.width as usize;
    let mut sum = Point3::ORIGIN;
    let mut count = 0usize;
    for idx in mask.set_indices() {
        let d = depth.data()[idx];
        if !depth.is_valid(d) {
            continue;
        }
        let u = (idx % width) as f64;
        let v = (idx / width) as f64;
        sum = sum
            + Point3::new(
                (u - cam.cx) * d / cam.fx,
                (v - cam.cy) * d / cam.fy,
                d,
            );
        count += 1;
    }
    if count == 0 {
        return Ok(None);
    }
    Ok(Some(sum * (1.0 / count as f64)))
}

/// Axis-aligned box in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

/// Overlap (in meters) that counts as interpenetration. Touching faces do not.
pub const CONTACT_EPS: f64 = 1e-9;

impl Aabb {
    pub fn new(min: Point3, max: Point3) -> Self {
        Self { min, max }
    }

    pub fn from_center(center: Point3, size: Point3) -> Self {
        let half = size * 0.5;
        Self::new(center - half, center + half)
    }

    /// Box resting on the horizontal plane at height `support` (positive up),
    /// centered at `(x, z)`.
    pub fn resting_on(x: f64, z: f64, support: f64, size: Point3) -> Self {
        let bottom = -support;
        Self::new(
            Point3::new(x - size.x / 2.0, bottom - size.y, z - size.z / 2.0),
            Point3::new(x + size.x / 2.0, bottom, z + size.z / 2.0),
        )
    }

    pub fn center(&self) -> Point3 {
        (self.min + self.max) * 0.5
    }

    pub fn size(&self) -> Point3 {
        self.max - self.min
    }

    /// Height of the top face above the floor.
    pub fn top_height(&self) -> f64 {
        -self.min.y
    }

    pub fn is_valid(&self) -> bool {
        self.min.x < self.max.x && self.min.y < self.max.y && self.min.z < self.max.z
    }

    pub fn translated(&self, d: Point3) -> Aabb {
        Aabb::new(self.min + d, self.max + d)
    }

    pub fn inflated(&self, margin: f64) -> Aabb {
        let m = Point3::new(margin, margin, margin);
        Aabb::new(self.min - m, self.max + m)
    }

    pub fn contains(&self, p: Point3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    /// Strictly inside by more than [`CONTACT_EPS`] on every axis.
    pub fn penetrated_by(&self, p: Point3) -> bool {
        p.x > self.min.x + CONTACT_EPS
            && p.x < self.max.x - CONTACT_EPS
            && p.y > self.min.y + CONTACT_EPS
            && p.y < self.max.y - CONTACT_EPS
            && p.z > self.min.z + CONTACT_EPS
            && p.z < self.max.z - CONTACT_EPS
    }

    /// Interpenetration test; boxes that only share a face do not intersect.
    pub fn intersects(&self, other: &Aabb) -> bool {
        self.min.x < other.max.x - CONTACT_EPS
            && other.min.x < self.max.x - CONTACT_EPS
            && self.min.y < other.max.y - CONTACT_EPS
            && other.min.y < self.max.y - CONTACT_EPS
            && self.min.z < other.max.z - CONTACT_EPS
            && other.min.z < self.max.z - CONTACT_EPS
    }

    /// `other` lies entirely within `self`.
    pub fn encloses(&self, other: &Aabb) -> bool {
        other.min.x >= self.min.x - CONTACT_EPS
            && other.max.x <= self.max.x + CONTACT_EPS
            && other.min.y >= self.min.y - CONTACT_EPS
            && other.max.y <= self.max.y + CONTACT_EPS
            && other.min.z >= self.min.z - CONTACT_EPS
            && other.max.z <= self.max.z + CONTACT_EPS
    }

    pub fn corners(&self) -> [Point3; 8] {
        let (a, b) = (self.min, self.max);
        [
            Point3::new(a.x, a.y, a.z),
            Point3::new(b.x, a.y, a.z),
            Point3::new(a.x, b.y, a.z),
            Point3::new(b.x, b.y, a.z),
            Point3::new(a.x, a.y, b.z),
            Point3::new(b.x, a.y, b.z),
            Point3::new(a.x, b.y, b.z),
            Point3::new(b.x, b.y, b.z),
        ]
    }

    /// Euclidean distance from a point to the box (0 inside).
    pub fn distance_to(&self, p: Point3) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        let dz = (self.min.z - p.z).max(0.0).max(p.z - self.max.z);
        Point3::new(dx, dy, dz).norm()
    }

    /// Horizontal distance from `(x, z)` to the box footprint.
    pub fn footprint_distance(&self, x: f64, z: f64) -> f64 {
        let dx = (self.min.x - x).max(0.0).max(x - self.max.x);
        let dz = (self.min.z - z).max(0.0).max(z - self.max.z);
        dx.hypot(dz)
    }
}
