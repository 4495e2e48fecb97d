//! Pixel + depth back-projection and constraint-based end-effector orientation.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::{Aabb, Pose, RotationMatrix, UnitQuaternion, Vec3};
use crate::math;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GroundingError {
    #[error("no valid depth near pixel ({u}, {v})")]
    InvalidDepth { u: f64, v: f64 },
    #[error("axis and normal are parallel")]
    DegenerateConstraints,
    #[error("grounding oracle failed: {0}")]
    OracleFailure(String),
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
}

/// Pinhole camera. Camera frame: z forward, x right, y down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Camera pose in the robot base frame.
    pub extrinsic: Pose,
}

impl CameraModel {
    /// Forward-looking camera on the robot body, pitched down 35°.
    pub fn body_default() -> Self {
        let pitch = 35.0f64.to_radians();
        let z = Vec3::new(math::cos(pitch), 0.0, -math::sin(pitch));
        let x = Vec3::new(0.0, -1.0, 0.0);
        let rot = RotationMatrix::from_columns(x, z.cross(x), z);
        CameraModel {
            fx: 110.0,
            fy: 110.0,
            cx: 64.0,
            cy: 48.0,
            width: 128,
            height: 96,
            extrinsic: Pose::new(Vec3::new(0.25, 0.0, 0.35), rot.to_quaternion()),
        }
    }

    pub fn validate(&self) -> Result<(), GroundingError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GroundingError::InvalidInput("focal lengths must be positive"));
        }
        if !(self.cx >= 0.0 && self.cx <= self.width as f64 && self.cy >= 0.0 && self.cy <= self.height as f64) {
            return Err(GroundingError::InvalidInput("principal point outside the image"));
        }
        Ok(())
    }

    pub fn contains_pixel(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }

    /// Base-frame point to `(u, v, depth)`; `None` behind the camera.
    pub fn project(&self, p_base: Vec3) -> Option<(f64, f64, f64)> {
        let c = self.extrinsic.inverse_transform_point(p_base);
        if c.z <= 1e-9 {
            return None;
        }
        Some((self.fx * c.x / c.z + self.cx, self.fy * c.y / c.z + self.cy, c.z))
    }

    /// Camera-frame point at pixel `(u, v)` and depth `z`.
    pub fn back_project(&self, u: f64, v: f64, z: f64) -> Vec3 {
        Vec3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z)
    }
}

/// Row-major depth in metres; 0 marks a hole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    pub depth: Vec<f32>,
}

impl DepthImage {
    pub fn new(width: u32, height: u32, depth: Vec<f32>) -> Result<Self, GroundingError> {
        if depth.len() != width as usize * height as usize {
            return Err(GroundingError::InvalidInput("depth buffer length does not match dimensions"));
        }
        Ok(DepthImage { width, height, depth })
    }

    pub fn filled(width: u32, height: u32, value: f32) -> Self {
        DepthImage { width, height, depth: vec![value; width as usize * height as usize] }
    }

    pub fn at(&self, col: u32, row: u32) -> f32 {
        self.depth[row as usize * self.width as usize + col as usize]
    }

    fn valid(d: f32) -> bool {
        d > 0.0 && d.is_finite()
    }

    /// Depth at a pixel, or the nearest valid depth within a radius of 2 pixels.
    pub fn sample_filled(&self, col: u32, row: u32) -> Option<f32> {
        let d = self.at(col, row);
        if Self::valid(d) {
            return Some(d);
        }
        let mut best: Option<(i64, f32)> = None;
        for dy in -2i64..=2 {
            for dx in -2i64..=2 {
                let r2 = dx * dx + dy * dy;
                if r2 == 0 || r2 > 4 {
                    continue;
                }
                let (c, r) = (col as i64 + dx, row as i64 + dy);
                if c < 0 || r < 0 || c >= self.width as i64 || r >= self.height as i64 {
                    continue;
                }
                let d = self.at(c as u32, r as u32);
                if Self::valid(d) && best.is_none_or(|(b, _)| r2 < b) {
                    best = Some((r2, d));
                }
            }
        }
        best.map(|(_, d)| d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundingResult {
    /// Contact pixel `(u, v)`, continuous coordinates.
    pub pixel: (f64, f64),
    /// Dominant axis in the robot base frame.
    pub axis: Option<Vec3>,
    /// Surface normal in the robot base frame.
    pub normal: Option<Vec3>,
}

/// Everything an oracle sees for one grounding query.
#[derive(Debug, Clone, Copy)]
pub struct GroundingFrame<'a> {
    pub camera: &'a CameraModel,
    pub depth: &'a DepthImage,
    pub action_index: usize,
    pub description: &'a str,
    /// Robot base pose in the world at capture time.
    pub base_pose: Pose,
}

pub trait GroundingOracle {
    fn ground(&self, frame: &GroundingFrame<'_>) -> Option<GroundingResult>;
}

/// Back-projects a pixel to a point in the robot base frame.
pub fn pixel_to_point(cam: &CameraModel, depth: &DepthImage, u: f64, v: f64) -> Result<Vec3, GroundingError> {
    if depth.width != cam.width || depth.height != cam.height {
        return Err(GroundingError::InvalidInput("depth image does not match camera"));
    }
    if !cam.contains_pixel(u, v) {
        return Err(GroundingError::InvalidInput("pixel outside image"));
    }
    let z = depth
        .sample_filled(math::floor(u) as u32, math::floor(v) as u32)
        .ok_or(GroundingError::InvalidDepth { u, v })?;
    Ok(cam.extrinsic.transform_point(cam.back_project(u, v, z as f64)))
}

fn unit(v: Vec3, what: &'static str) -> Result<Vec3, GroundingError> {
    v.normalized().ok_or(GroundingError::InvalidInput(what))
}

fn reject(v: Vec3, a: Vec3) -> Vec3 {
    v - a * v.dot(a)
}

/// Picks the sign of `x` whose half-space contains world x, then y, then z.
fn orient_by_world(x: Vec3) -> Vec3 {
    for w in [Vec3::X, Vec3::Y, Vec3::Z] {
        let s = x.dot(w);
        if s.abs() > 1e-12 {
            return if s < 0.0 { -x } else { x };
        }
    }
    x
}

/// End-effector rotation with columns `(r_x, r_y, r_z)` satisfying the
/// optional axis constraint (`r_x ⊥ a`, `r_z ⊥ a`) and normal alignment
/// (`r_z` as close to `n` as the axis constraint allows).
pub fn solve_orientation(
    axis: Option<Vec3>,
    normal: Option<Vec3>,
    default_approach: Vec3,
) -> Result<RotationMatrix, GroundingError> {
    let d = unit(default_approach, "zero approach direction")?;
    let a = axis.map(|a| unit(a, "zero axis")).transpose()?;
    let n = normal.map(|n| unit(n, "zero normal")).transpose()?;

    let z = match (a, n) {
        (Some(a), Some(n)) => {
            if n.dot(a).abs() >= 1.0 - 1e-6 {
                return Err(GroundingError::DegenerateConstraints);
            }
            let z = unit(reject(n, a), "zero normal")?;
            let z = unit(reject(z, a), "zero normal")?;
            if z.dot(d) < 0.0 { -z } else { z }
        }
        (Some(a), None) => {
            let z = [d, Vec3::X, Vec3::Y]
                .iter()
                .find_map(|v| {
                    let r = reject(*v, a);
                    if r.norm() > 1e-9 { r.normalized() } else { None }
                })
                .ok_or(GroundingError::InvalidInput("zero axis"))?;
            let z = unit(reject(z, a), "zero axis")?;
            if z.dot(d) < 0.0 { -z } else { z }
        }
        (None, Some(n)) => {
            if n.dot(d) < 0.0 { -n } else { n }
        }
        (None, None) => d,
    };

    let x = match a {
        Some(a) => orient_by_world(unit(a.cross(z), "zero axis")?),
        None => [Vec3::X, Vec3::Y]
            .iter()
            .find_map(|w| {
                let r = reject(*w, z);
                if r.norm() > 1e-9 { r.normalized() } else { None }
            })
            .ok_or(GroundingError::InvalidInput("zero approach direction"))?,
    };
    Ok(RotationMatrix::from_columns(x, z.cross(x), z))
}

/// Full end-effector target in the robot base frame for one action.
pub fn ground_action(
    oracle: &dyn GroundingOracle,
    frame: &GroundingFrame<'_>,
    default_approach: Vec3,
) -> Result<Pose, GroundingError> {
    let res = oracle
        .ground(frame)
        .ok_or_else(|| GroundingError::OracleFailure(String::from("oracle returned no result")))?;
    let (u, v) = res.pixel;
    if !frame.camera.contains_pixel(u, v) {
        return Err(GroundingError::OracleFailure(alloc::format!("pixel ({u}, {v}) outside image")));
    }
    let position = pixel_to_point(frame.camera, frame.depth, u, v)?;
    let rot = solve_orientation(res.axis, res.normal, default_approach)?;
    Ok(Pose::new(position, rot.to_quaternion()))
}

/// Where the scripted oracle points for one action. Vectors are in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundingTarget {
    pub contact: Vec3,
    #[serde(default)]
    pub axis: Option<Vec3>,
    #[serde(default)]
    pub normal: Option<Vec3>,
}

/// Deterministic oracle backed by ground-truth targets keyed by action index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptedGroundingOracle {
    pub targets: BTreeMap<usize, GroundingTarget>,
}

impl ScriptedGroundingOracle {
    pub fn new(targets: BTreeMap<usize, GroundingTarget>) -> Self {
        ScriptedGroundingOracle { targets }
    }
}

impl GroundingOracle for ScriptedGroundingOracle {
    fn ground(&self, frame: &GroundingFrame<'_>) -> Option<GroundingResult> {
        let t = self.targets.get(&frame.action_index)?;
        let p_base = frame.base_pose.inverse_transform_point(t.contact);
        let (u, v, _) = frame.camera.project(p_base)?;
        Some(GroundingResult {
            pixel: (u, v),
            axis: t.axis.map(|a| frame.base_pose.inverse_transform_vector(a)),
            normal: t.normal.map(|n| frame.base_pose.inverse_transform_vector(n)),
        })
    }
}

/// Renders z-depth of boxes and an optional ground plane, sampling pixel centres.
pub fn render_depth(cam: &CameraModel, base_pose: &Pose, boxes: &[Aabb], ground_z: Option<f64>) -> DepthImage {
    let cam_world = base_pose.compose(&cam.extrinsic);
    let origin = cam_world.position;
    let mut depth = Vec::with_capacity(cam.width as usize * cam.height as usize);
    for row in 0..cam.height {
        for col in 0..cam.width {
            let dir_c = cam.back_project(col as f64 + 0.5, row as f64 + 0.5, 1.0);
            let dir = cam_world.transform_vector(dir_c);
            let mut best = f64::INFINITY;
            for b in boxes {
                if let Some(t) = b.ray_intersection(origin, dir) {
                    if t > 1e-9 && t < best {
                        best = t;
                    }
                }
            }
            if let Some(gz) = ground_z {
                if dir.z < -1e-12 {
                    let t = (gz - origin.z) / dir.z;
                    if t > 0.0 && t < best {
                        best = t;
                    }
                }
            }
            depth.push(if best.is_finite() { best as f32 } else { 0.0 });
        }
    }
    DepthImage { width: cam.width, height: cam.height, depth }
}

/// Approach direction (forward and down) used when no constraint fixes `r_z`.
pub fn default_approach() -> Vec3 {
    Vec3::new(1.0, 0.0, -1.0) * (1.0 / math::SQRT_2)
}

/// Unit-quaternion form of [`solve_orientation`].
pub fn solve_orientation_quat(
    axis: Option<Vec3>,
    normal: Option<Vec3>,
    default_approach: Vec3,
) -> Result<UnitQuaternion, GroundingError> {
    solve_orientation(axis, normal, default_approach).map(|r| r.to_quaternion())
}
