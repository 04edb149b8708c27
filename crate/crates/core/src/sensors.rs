//! Depth and instance rendering, ground-truth masks, mask degradation
//! models and depth-sensor noise.

use std::io::{self, Write};

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, CameraModel, Point3, Pose};
use crate::scene::Scene;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensorError {
    #[error("invalid degradation spec: {0}")]
    InvalidDegradation(String),
    #[error("invalid depth noise spec: {0}")]
    InvalidDepthNoise(String),
}

/// Planar depth image. `NO_RETURN` and values at `max_range` carry no
/// measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    width: u32,
    height: u32,
    max_range: f64,
    data: Vec<f64>,
}

impl DepthFrame {
    pub const NO_RETURN: f64 = 0.0;

    pub fn new(width: u32, height: u32, max_range: f64, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width as usize * height as usize);
        Self {
            width,
            height,
            max_range,
            data,
        }
    }

    pub fn filled(cam: &CameraModel, value: f64) -> Self {
        Self::new(cam.width, cam.height, cam.max_range, vec![value; cam.pixel_count()])
    }

    pub fn resolution(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn max_range(&self) -> f64 {
        self.max_range
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, u: u32, v: u32) -> f64 {
        self.data[v as usize * self.width as usize + u as usize]
    }

    pub fn set(&mut self, u: u32, v: u32, d: f64) {
        self.data[v as usize * self.width as usize + u as usize] = d;
    }

    /// A usable return: positive, finite, and short of the range limit.
    pub fn is_valid(&self, d: f64) -> bool {
        d > 0.0 && d < self.max_range
    }

    /// Binary PGM (P5), 16-bit big-endian millimeters; no-return pixels are 0.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P5\n{} {}\n65535\n", self.width, self.height)?;
        for &d in &self.data {
            let mm = if self.is_valid(d) {
                (d * 1000.0).round().clamp(1.0, 65535.0) as u16
            } else {
                0
            };
            w.write_all(&mm.to_be_bytes())?;
        }
        Ok(())
    }
}

/// Per-pixel object id, or [`InstanceFrame::BACKGROUND`] for walls, floor,
/// furniture and empty space.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceFrame {
    width: u32,
    height: u32,
    ids: Vec<u32>,
}

impl InstanceFrame {
    pub const BACKGROUND: u32 = u32::MAX;

    pub fn new(width: u32, height: u32, ids: Vec<u32>) -> Self {
        assert_eq!(ids.len(), width as usize * height as usize);
        Self { width, height, ids }
    }

    pub fn resolution(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn get(&self, u: u32, v: u32) -> u32 {
        self.ids[v as usize * self.width as usize + u as usize]
    }

    /// Distinct object ids present in the frame, ascending.
    pub fn visible_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self
            .ids
            .iter()
            .copied()
            .filter(|&i| i != Self::BACKGROUND)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn pixel_count_of(&self, id: u32) -> usize {
        self.ids.iter().filter(|&&i| i == id).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width as usize * height as usize);
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn from_pixels(width: u32, height: u32, pixels: &[(u32, u32)]) -> Self {
        let mut m = Self::empty(width, height);
        for &(u, v) in pixels {
            m.set(u, v, true);
        }
        m
    }

    pub fn resolution(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, u: u32, v: u32) -> bool {
        self.bits[v as usize * self.width as usize + u as usize]
    }

    pub fn set(&mut self, u: u32, v: u32, on: bool) {
        self.bits[v as usize * self.width as usize + u as usize] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn set_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.bits.len() == other.bits.len()
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Binary PBM (P4): rows packed MSB-first, padded to whole bytes, 1 = set.
    pub fn write_pbm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P4\n{} {}\n", self.width, self.height)?;
        let width = self.width as usize;
        let mut row = vec![0u8; width.div_ceil(8)];
        for line in self.bits.chunks(width) {
            row.fill(0);
            for (i, _) in line.iter().enumerate().filter(|(_, &b)| b) {
                row[i / 8] |= 0x80 >> (i % 8);
            }
            w.write_all(&row)?;
        }
        Ok(())
    }
}

/// Exact intersection of a ray with a box: parameter of the entry point, or
/// `None` if the ray misses or starts inside.
fn entry_parameter(origin: Point3, dir: Point3, b: &Aabb) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for axis in 0..3 {
        let o = origin.component(axis);
        let d = dir.component(axis);
        let (lo, hi) = (b.min.component(axis), b.max.component(axis));
        if d == 0.0 {
            if o < lo || o > hi {
                return None;
            }
            continue;
        }
        let (a, c) = ((lo - o) / d, (hi - o) / d);
        let (n, f) = if a < c { (a, c) } else { (c, a) };
        t_near = t_near.max(n);
        t_far = t_far.min(f);
    }
    (t_near <= t_far && t_near > 0.0).then_some(t_near)
}

/// Parameter at which a ray from inside `room` leaves it.
fn exit_parameter(origin: Point3, dir: Point3, room: &Aabb) -> f64 {
    let mut t = f64::INFINITY;
    for axis in 0..3 {
        let d = dir.component(axis);
        let o = origin.component(axis);
        if d > 0.0 {
            t = t.min((room.max.component(axis) - o) / d);
        } else if d < 0.0 {
            t = t.min((room.min.component(axis) - o) / d);
        }
    }
    t
}

/// World-space ray through pixel `(u, v)`; the direction's parameter equals
/// planar depth.
pub fn pixel_ray(cam: &CameraModel, camera_pose: &Pose, u: u32, v: u32) -> (Point3, Point3) {
    (
        camera_pose.translation(),
        camera_pose.rotate(cam.ray_direction(u as f64, v as f64)),
    )
}

/// Inclusive pixel rectangle that can contain the projection of `b`, or
/// `None` if the box is entirely behind the camera or off-screen.
fn screen_rect(b: &Aabb, world_to_cam: &Pose, cam: &CameraModel) -> Option<(u32, u32, u32, u32)> {
    const NEAR: f64 = 1e-4;
    let corners = b.corners().map(|c| world_to_cam.transform_point(c));
    let mut pts: Vec<Point3> = corners.iter().copied().filter(|p| p.z >= NEAR).collect();
    if pts.len() < 8 {
        const EDGES: [(usize, usize); 12] = [
            (0, 1), (2, 3), (4, 5), (6, 7),
            (0, 2), (1, 3), (4, 6), (5, 7),
            (0, 4), (1, 5), (2, 6), (3, 7),
        ];
        for (i, j) in EDGES {
            let (a, c) = (corners[i], corners[j]);
            if (a.z - NEAR) * (c.z - NEAR) < 0.0 {
                pts.push(a.lerp(c, (NEAR - a.z) / (c.z - a.z)));
            }
        }
    }
    if pts.is_empty() {
        return None;
    }
    let (mut u0, mut u1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in pts {
        let (u, v) = cam.project(p);
        u0 = u0.min(u);
        u1 = u1.max(u);
        v0 = v0.min(v);
        v1 = v1.max(v);
    }
    let (w, h) = (cam.width as f64, cam.height as f64);
    if u1 < -1.0 || v1 < -1.0 || u0 > w || v0 > h {
        return None;
    }
    let clamp = |x: f64, hi: f64| x.max(0.0).min(hi - 1.0) as u32;
    Some((
        clamp(u0.floor() - 1.0, w),
        clamp(u1.ceil() + 1.0, w),
        clamp(v0.floor() - 1.0, h),
        clamp(v1.ceil() + 1.0, h),
    ))
}

const ROOM: u32 = u32::MAX;

/// Raycasts the scene: one ray per pixel, nearest box wins. Furniture and
/// room surfaces render as background; returns beyond `max_range`
/// saturate to `max_range` with no instance id.
pub fn render(scene: &Scene, camera_pose: &Pose, cam: &CameraModel) -> (DepthFrame, InstanceFrame) {
    let (w, h) = (cam.width as usize, cam.height as usize);
    let origin = camera_pose.translation();
    let world_to_cam = camera_pose.inverse();

    // The world direction's x/z depend only on the column and y only on the row.
    let col_dirs: Vec<Point3> = (0..w)
        .map(|u| camera_pose.rotate(cam.ray_direction(u as f64, cam.cy)))
        .collect();
    let row_dy: Vec<f64> = (0..h).map(|v| (v as f64 - cam.cy) / cam.fy).collect();

    let mut depth = vec![0.0f64; w * h];
    let mut hit = vec![ROOM; w * h];
    for v in 0..h {
        for u in 0..w {
            let d = Point3::new(col_dirs[u].x, row_dy[v], col_dirs[u].z);
            depth[v * w + u] = exit_parameter(origin, d, &scene.bounds);
        }
    }

    // Boxes are indexed furniture first, then objects.
    let boxes: Vec<&Aabb> = scene
        .furniture
        .iter()
        .chain(scene.objects.iter().map(|o| &o.bbox))
        .collect();
    let slab = |lo: f64, hi: f64, o: f64, d: f64| -> (f64, f64) {
        if d == 0.0 {
            if o < lo || o > hi {
                (f64::INFINITY, f64::NEG_INFINITY)
            } else {
                (f64::NEG_INFINITY, f64::INFINITY)
            }
        } else {
            let inv = 1.0 / d;
            let (a, b) = ((lo - o) * inv, (hi - o) * inv);
            if a < b {
                (a, b)
            } else {
                (b, a)
            }
        }
    };
    for (bi, b) in boxes.iter().enumerate() {
        let Some((u0, u1, v0, v1)) = screen_rect(b, &world_to_cam, cam) else {
            continue;
        };
        let rows: Vec<(f64, f64)> = (v0..=v1)
            .map(|v| slab(b.min.y, b.max.y, origin.y, row_dy[v as usize]))
            .collect();
        for u in u0..=u1 {
            let d = col_dirs[u as usize];
            let (xn, xf) = slab(b.min.x, b.max.x, origin.x, d.x);
            let (zn, zf) = slab(b.min.z, b.max.z, origin.z, d.z);
            let (cn, cf) = (xn.max(zn), xf.min(zf));
            if cn > cf || cf <= 0.0 {
                continue;
            }
            for (k, &(yn, yf)) in rows.iter().enumerate() {
                let t_near = cn.max(yn);
                let t_far = cf.min(yf);
                let idx = (v0 as usize + k) * w + u as usize;
                if t_near <= t_far && t_near > 0.0 && t_near < depth[idx] {
                    depth[idx] = t_near;
                    hit[idx] = bi as u32;
                }
            }
        }
    }

    let n_furniture = scene.furniture.len();
    let mut ids = vec![InstanceFrame::BACKGROUND; w * h];
    for v in 0..h {
        for u in 0..w {
            let idx = v * w + u;
            if hit[idx] != ROOM {
                // Recompute the winner with divisions so the value matches an
                // exact plane intersection, not the reciprocal approximation.
                let b = boxes[hit[idx] as usize];
                let dir = Point3::new(col_dirs[u].x, row_dy[v], col_dirs[u].z);
                if let Some(t) = entry_parameter(origin, dir, b) {
                    depth[idx] = t;
                }
                if hit[idx] as usize >= n_furniture {
                    ids[idx] = scene.objects[hit[idx] as usize - n_furniture].id;
                }
            }
            if depth[idx] >= cam.max_range {
                depth[idx] = cam.max_range;
                ids[idx] = InstanceFrame::BACKGROUND;
            }
        }
    }
    (
        DepthFrame::new(cam.width, cam.height, cam.max_range, depth),
        InstanceFrame::new(cam.width, cam.height, ids),
    )
}

pub fn gt_mask(frame: &InstanceFrame, object_id: u32) -> Mask {
    Mask::from_bits(
        frame.width,
        frame.height,
        frame.ids.iter().map(|&i| i == object_id).collect(),
    )
}

/// Keeps a uniformly random subset of `round(keep_fraction * |mask|)` pixels.
pub fn degrade_partial<R: Rng + ?Sized>(mask: &Mask, keep_fraction: f64, rng: &mut R) -> Mask {
    let set: Vec<usize> = mask.set_indices().collect();
    let keep = ((keep_fraction.clamp(0.0, 1.0) * set.len() as f64).round() as usize).min(set.len());
    if keep == set.len() {
        return mask.clone();
    }
    let mut out = Mask::empty(mask.width, mask.height);
    for i in index::sample(rng, set.len(), keep) {
        out.bits[set[i]] = true;
    }
    out
}

/// Whole-mask dropout: one draw per frame.
pub fn degrade_missing<R: Rng + ?Sized>(mask: &Mask, present_prob: f64, rng: &mut R) -> Mask {
    if rng.random::<f64>() < present_prob {
        mask.clone()
    } else {
        Mask::empty(mask.width, mask.height)
    }
}

/// With probability `confuse_prob`, the mask of another visible object
/// (empty when none is visible); otherwise the target's true mask.
pub fn degrade_confuse<R: Rng + ?Sized>(
    frame: &InstanceFrame,
    target_id: u32,
    confuse_prob: f64,
    rng: &mut R,
) -> Mask {
    if rng.random::<f64>() < confuse_prob {
        let others: Vec<u32> = frame
            .visible_ids()
            .into_iter()
            .filter(|&i| i != target_id)
            .collect();
        if others.is_empty() {
            return Mask::empty(frame.width, frame.height);
        }
        let pick = others[rng.random_range(0..others.len())];
        gt_mask(frame, pick)
    } else {
        gt_mask(frame, target_id)
    }
}

/// Segmentation degradation knobs for one target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradationSpec {
    pub keep_fraction: f64,
    pub present_prob: f64,
    pub confuse_prob: f64,
    pub rng_stream: u64,
}

impl Default for DegradationSpec {
    fn default() -> Self {
        Self {
            keep_fraction: 1.0,
            present_prob: 1.0,
            confuse_prob: 0.0,
            rng_stream: 0,
        }
    }
}

impl DegradationSpec {
    pub fn validate(&self) -> Result<(), SensorError> {
        for (name, p) in [
            ("keep_fraction", self.keep_fraction),
            ("present_prob", self.present_prob),
            ("confuse_prob", self.confuse_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SensorError::InvalidDegradation(format!("{name} = {p}")));
            }
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.keep_fraction >= 1.0 && self.present_prob >= 1.0 && self.confuse_prob <= 0.0
    }

    /// Confusion, then dropout, then partial masking. Each stage draws from
    /// `rng` every frame so that streams stay aligned across settings.
    pub fn apply<R: Rng + ?Sized>(&self, frame: &InstanceFrame, target_id: u32, rng: &mut R) -> Mask {
        let m = degrade_confuse(frame, target_id, self.confuse_prob, rng);
        let m = degrade_missing(&m, self.present_prob, rng);
        degrade_partial(&m, self.keep_fraction, rng)
    }
}

/// Simplified structured-light depth noise: lateral jitter of the sampled
/// pixel, range-dependent Gaussian error `sigma(z) = c0 + c1 z + c2 z^2`,
/// then quantization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthNoiseSpec {
    pub lateral_sigma_px: f64,
    pub sigma_coeffs: [f64; 3],
    pub quantization: f64,
}

impl Default for DepthNoiseSpec {
    fn default() -> Self {
        Self::NONE
    }
}

impl DepthNoiseSpec {
    pub const NONE: DepthNoiseSpec = DepthNoiseSpec {
        lateral_sigma_px: 0.0,
        sigma_coeffs: [0.0; 3],
        quantization: 0.0,
    };

    /// Kinect-like severity at scale 1.
    pub fn structured_light() -> Self {
        Self {
            lateral_sigma_px: 0.5,
            sigma_coeffs: [0.001, 0.0, 0.0015],
            quantization: 0.001,
        }
    }

    /// `structured_light()` with every amplitude multiplied by `severity`.
    pub fn with_severity(severity: f64) -> Self {
        let base = Self::structured_light();
        Self {
            lateral_sigma_px: base.lateral_sigma_px * severity,
            sigma_coeffs: base.sigma_coeffs.map(|c| c * severity),
            quantization: base.quantization * severity,
        }
    }

    pub fn validate(&self) -> Result<(), SensorError> {
        let all = [
            self.lateral_sigma_px,
            self.sigma_coeffs[0],
            self.sigma_coeffs[1],
            self.sigma_coeffs[2],
            self.quantization,
        ];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(SensorError::InvalidDepthNoise(format!("{self:?}")));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.lateral_sigma_px == 0.0 && self.sigma_coeffs == [0.0; 3] && self.quantization == 0.0
    }

    pub fn sigma_at(&self, z: f64) -> f64 {
        let [c0, c1, c2] = self.sigma_coeffs;
        (c0 + c1 * z + c2 * z * z).max(0.0)
    }
}

/// Smallest depth the noise model may emit.
const MIN_DEPTH: f64 = 1e-3;

pub fn apply_depth_noise<R: Rng + ?Sized>(
    frame: &DepthFrame,
    model: &DepthNoiseSpec,
    rng: &mut R,
) -> DepthFrame {
    if model.is_identity() {
        return frame.clone();
    }
    let (w, h) = (frame.width as usize, frame.height as usize);
    let mut out = frame.clone();
    for v in 0..h {
        for u in 0..w {
            let (mut su, mut sv) = (u, v);
            if model.lateral_sigma_px > 0.0 {
                let du: f64 = rng.sample(StandardNormal);
                let dv: f64 = rng.sample(StandardNormal);
                su = (u as f64 + du * model.lateral_sigma_px).round().clamp(0.0, (w - 1) as f64) as usize;
                sv = (v as f64 + dv * model.lateral_sigma_px).round().clamp(0.0, (h - 1) as f64) as usize;
            }
            let z = frame.data[sv * w + su];
            let noise: f64 = rng.sample(StandardNormal);
            if !frame.is_valid(z) {
                out.data[v * w + u] = z;
                continue;
            }
            let mut d = z + noise * model.sigma_at(z);
            if model.quantization > 0.0 {
                d = (d / model.quantization).round() * model.quantization;
            }
            out.data[v * w + u] = d.clamp(MIN_DEPTH, frame.max_range);
        }
    }
    out
}
