//! 3D vectors, unit quaternions, rotation matrices, poses and the angle
//! conventions shared by every other module.
//!
//! Conventions: z-up world frame, x-forward base frame. Euler angles are
//! extrinsic X-Y-Z (roll about world x, then pitch about world y, then yaw
//! about world z), i.e. `R = Rz(yaw) · Ry(pitch) · Rx(roll)`.

use core::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        math::sqrt(self.norm_squared())
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n > 1e-12 && n.is_finite() {
            Some(self * (1.0 / n))
        } else {
            None
        }
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    pub fn distance_xy(self, o: Vec3) -> f64 {
        let dx = self.x - o.x;
        let dy = self.y - o.y;
        math::sqrt(dx * dx + dy * dy)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn lerp(self, o: Vec3, t: f64) -> Vec3 {
        self + (o - self) * t
    }

    pub fn component_min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn component_max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Error returned when a raw quaternion is too far from unit norm.
#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("quaternion norm {0} is not within 1e-9 of 1")]
pub struct NotUnitNorm(pub f64);

/// Rotation stored as a Hamilton unit quaternion `(w, x, y, z)`.
///
/// `q` and `-q` encode the same rotation. Values deserialized from files are
/// checked but not renormalized, so a save/load cycle is bit-exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl TryFrom<[f64; 4]> for UnitQuaternion {
    type Error = NotUnitNorm;

    fn try_from(a: [f64; 4]) -> Result<Self, NotUnitNorm> {
        let n = math::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2] + a[3] * a[3]);
        if (n - 1.0).abs() <= 1e-9 {
            Ok(UnitQuaternion { w: a[0], x: a[1], y: a[2], z: a[3] })
        } else {
            Err(NotUnitNorm(n))
        }
    }
}

impl From<UnitQuaternion> for [f64; 4] {
    fn from(q: UnitQuaternion) -> Self {
        [q.w, q.x, q.y, q.z]
    }
}

impl Default for UnitQuaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Normalizes the given components. Returns `None` for a zero or non-finite input.
    pub fn new_normalize(w: f64, x: f64, y: f64, z: f64) -> Option<Self> {
        let n = math::sqrt(w * w + x * x + y * y + z * z);
        if n > 1e-12 && n.is_finite() {
            Some(UnitQuaternion { w: w / n, x: x / n, y: y / n, z: z / n })
        } else {
            None
        }
    }

    /// Rotation by `angle` radians about `axis` (normalized internally).
    /// A zero axis yields the identity.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        match axis.normalized() {
            Some(a) => {
                let h = 0.5 * angle;
                let s = math::sin(h);
                UnitQuaternion { w: math::cos(h), x: a.x * s, y: a.y * s, z: a.z * s }
            }
            None => Self::IDENTITY,
        }
    }

    pub fn from_yaw(yaw: f64) -> Self {
        Self::from_axis_angle(Vec3::Z, yaw)
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn vector_part(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn to_array(self) -> [f64; 4] {
        self.into()
    }

    pub fn conjugate(self) -> Self {
        UnitQuaternion { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn inverse(self) -> Self {
        self.conjugate()
    }

    pub fn negated(self) -> Self {
        UnitQuaternion { w: -self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// 4D dot product of the component vectors.
    pub fn dot(self, o: UnitQuaternion) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        // v' = v + 2w(u×v) + 2u×(u×v)
        let u = self.vector_part();
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(self) -> f64 {
        2.0 * math::atan2(self.vector_part().norm(), self.w.abs())
    }

    /// Heading of the rotated x-axis projected onto the ground plane.
    pub fn yaw(self) -> f64 {
        let fwd = self.rotate(Vec3::X);
        math::atan2(fwd.y, fwd.x)
    }

    pub fn to_rotation_matrix(self) -> RotationMatrix {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        RotationMatrix {
            m: [
                [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
                [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
                [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
            ],
        }
    }

    /// Shepperd's method; picks the numerically largest pivot.
    pub fn from_rotation_matrix(r: &RotationMatrix) -> Self {
        let m = &r.m;
        let tr = m[0][0] + m[1][1] + m[2][2];
        let (w, x, y, z) = if tr > 0.0 {
            let s = math::sqrt(tr + 1.0) * 2.0;
            (0.25 * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s)
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = math::sqrt(1.0 + m[0][0] - m[1][1] - m[2][2]) * 2.0;
            ((m[2][1] - m[1][2]) / s, 0.25 * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s)
        } else if m[1][1] > m[2][2] {
            let s = math::sqrt(1.0 + m[1][1] - m[0][0] - m[2][2]) * 2.0;
            ((m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, 0.25 * s, (m[1][2] + m[2][1]) / s)
        } else {
            let s = math::sqrt(1.0 + m[2][2] - m[0][0] - m[1][1]) * 2.0;
            ((m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, 0.25 * s)
        };
        Self::new_normalize(w, x, y, z).unwrap_or(Self::IDENTITY)
    }

    /// Spherical linear interpolation along the shorter arc.
    pub fn slerp(self, other: UnitQuaternion, t: f64) -> Self {
        let mut o = other;
        let mut d = self.dot(o);
        if d < 0.0 {
            o = o.negated();
            d = -d;
        }
        if d > 1.0 - 1e-12 {
            return Self::new_normalize(
                self.w + (o.w - self.w) * t,
                self.x + (o.x - self.x) * t,
                self.y + (o.y - self.y) * t,
                self.z + (o.z - self.z) * t,
            )
            .unwrap_or(self);
        }
        let theta = math::acos(math::clamp(d, -1.0, 1.0));
        let s = math::sin(theta);
        let a = math::sin((1.0 - t) * theta) / s;
        let b = math::sin(t * theta) / s;
        Self::new_normalize(
            a * self.w + b * o.w,
            a * self.x + b * o.x,
            a * self.y + b * o.y,
            a * self.z + b * o.z,
        )
        .unwrap_or(self)
    }

    /// Quaternion geodesic distance `2·arccos(|a·b|)`, evaluated through the
    /// relative rotation as `2·atan2(|v|, |w|)`, which is accurate near 0 and π.
    pub fn geodesic_distance(self, other: UnitQuaternion) -> f64 {
        quat_geodesic_distance(self, other)
    }
}

impl Mul for UnitQuaternion {
    type Output = UnitQuaternion;

    /// Hamilton product; `(a * b).rotate(v) == a.rotate(b.rotate(v))`.
    fn mul(self, o: UnitQuaternion) -> UnitQuaternion {
        let (a, b) = (self, o);
        UnitQuaternion {
            w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            x: a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            y: a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            z: a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        }
    }
}

/// Orientation error metric `2·arccos(|a·b|)`, in `[0, π]`.
///
/// Evaluated through the chord lengths `|a − b|` and `|a + b|` of the two
/// 4-vectors, which equals the arccos form but stays accurate near 0 and π and
/// is exactly symmetric in its arguments.
pub fn quat_geodesic_distance(a: UnitQuaternion, b: UnitQuaternion) -> f64 {
    let diff = chord(a.to_array(), b.to_array(), -1.0);
    let sum = chord(a.to_array(), b.to_array(), 1.0);
    let (lo, hi) = if diff < sum { (diff, sum) } else { (sum, diff) };
    math::clamp(4.0 * math::atan2(lo, hi), 0.0, math::PI)
}

fn chord(a: [f64; 4], b: [f64; 4], sign: f64) -> f64 {
    math::sqrt(a.iter().zip(b.iter()).map(|(p, q)| (p + sign * q) * (p + sign * q)).sum())
}

/// Proper rotation matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationMatrix {
    pub m: [[f64; 3]; 3],
}

impl Default for RotationMatrix {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl RotationMatrix {
    pub const IDENTITY: RotationMatrix =
        RotationMatrix { m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] };

    pub fn from_columns(x: Vec3, y: Vec3, z: Vec3) -> Self {
        RotationMatrix { m: [[x.x, y.x, z.x], [x.y, y.y, z.y], [x.z, y.z, z.z]] }
    }

    pub fn column(&self, i: usize) -> Vec3 {
        Vec3::new(self.m[0][i], self.m[1][i], self.m[2][i])
    }

    pub fn transpose(&self) -> Self {
        let m = &self.m;
        RotationMatrix {
            m: [[m[0][0], m[1][0], m[2][0]], [m[0][1], m[1][1], m[2][1]], [m[0][2], m[1][2], m[2][2]]],
        }
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn mul_mat(&self, o: &RotationMatrix) -> RotationMatrix {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.m[i][k] * o.m[k][j]).sum();
            }
        }
        RotationMatrix { m: out }
    }

    pub fn determinant(&self) -> f64 {
        self.column(0).dot(self.column(1).cross(self.column(2)))
    }

    /// Largest absolute entry of `RᵀR − I`.
    pub fn orthonormality_error(&self) -> f64 {
        let rtr = self.transpose().mul_mat(self);
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((rtr.m[i][j] - target).abs());
            }
        }
        worst
    }

    pub fn is_proper(&self, tol: f64) -> bool {
        self.orthonormality_error() <= tol && (self.determinant() - 1.0).abs() <= tol
    }

    pub fn rot_x(a: f64) -> Self {
        let (s, c) = (math::sin(a), math::cos(a));
        RotationMatrix { m: [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]] }
    }

    pub fn rot_y(a: f64) -> Self {
        let (s, c) = (math::sin(a), math::cos(a));
        RotationMatrix { m: [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]] }
    }

    pub fn rot_z(a: f64) -> Self {
        let (s, c) = (math::sin(a), math::cos(a));
        RotationMatrix { m: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]] }
    }

    pub fn to_quaternion(&self) -> UnitQuaternion {
        UnitQuaternion::from_rotation_matrix(self)
    }
}

/// Rigid transform: maps points from the pose's local frame into its parent frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    #[serde(default)]
    pub orientation: UnitQuaternion,
}

impl Pose {
    pub const IDENTITY: Pose = Pose { position: Vec3::ZERO, orientation: UnitQuaternion::IDENTITY };

    pub fn new(position: Vec3, orientation: UnitQuaternion) -> Self {
        Pose { position, orientation }
    }

    pub fn from_translation(position: Vec3) -> Self {
        Pose { position, orientation: UnitQuaternion::IDENTITY }
    }

    pub fn planar(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Pose { position: Vec3::new(x, y, z), orientation: UnitQuaternion::from_yaw(yaw) }
    }

    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        self.orientation.rotate(p) + self.position
    }

    pub fn transform_vector(&self, v: Vec3) -> Vec3 {
        self.orientation.rotate(v)
    }

    pub fn inverse_transform_point(&self, p: Vec3) -> Vec3 {
        self.orientation.conjugate().rotate(p - self.position)
    }

    pub fn inverse_transform_vector(&self, v: Vec3) -> Vec3 {
        self.orientation.conjugate().rotate(v)
    }

    pub fn inverse(&self) -> Pose {
        let q = self.orientation.conjugate();
        Pose { position: -q.rotate(self.position), orientation: q }
    }

    /// `self ∘ other`: first apply `other`, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.transform_point(other.position),
            orientation: self.orientation * other.orientation,
        }
    }

    pub fn yaw(&self) -> f64 {
        self.orientation.yaw()
    }
}

/// Re-expresses `p`, given in `from_frame`, in `to_frame`. Both frames are
/// poses relative to a common parent (usually the world).
pub fn transform_point(p: Vec3, from_frame: &Pose, to_frame: &Pose) -> Vec3 {
    to_frame.inverse_transform_point(from_frame.transform_point(p))
}

/// End-effector position target in spherical coordinates around the arm base.
/// Pitch is elevation above the horizontal plane; yaw is measured from +x toward +y.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SphericalTarget {
    pub radius: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl SphericalTarget {
    pub fn new(radius: f64, pitch: f64, yaw: f64) -> Self {
        SphericalTarget { radius, pitch, yaw }
    }
}

pub fn spherical_to_cartesian(s: SphericalTarget) -> Vec3 {
    let cp = math::cos(s.pitch);
    Vec3::new(
        s.radius * cp * math::cos(s.yaw),
        s.radius * cp * math::sin(s.yaw),
        s.radius * math::sin(s.pitch),
    )
}

/// Inverse of [`spherical_to_cartesian`]; the zero vector maps to all zeros.
pub fn cartesian_to_spherical(v: Vec3) -> SphericalTarget {
    let r = v.norm();
    if r == 0.0 {
        return SphericalTarget::default();
    }
    let horiz = math::sqrt(v.x * v.x + v.y * v.y);
    SphericalTarget { radius: r, pitch: math::atan2(v.z, horiz), yaw: math::atan2(v.y, v.x) }
}

/// Extrinsic X-Y-Z Euler angles (roll, pitch, yaw).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl EulerAngles {
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        EulerAngles { roll, pitch, yaw }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.roll, self.pitch, self.yaw]
    }

    /// Each angle wrapped into `(-π, π]`.
    pub fn wrapped(self) -> Self {
        EulerAngles {
            roll: math::wrap_angle(self.roll),
            pitch: math::wrap_angle(self.pitch),
            yaw: math::wrap_angle(self.yaw),
        }
    }
}

pub fn quat_from_euler(e: EulerAngles) -> UnitQuaternion {
    let qx = UnitQuaternion::from_axis_angle(Vec3::X, e.roll);
    let qy = UnitQuaternion::from_axis_angle(Vec3::Y, e.pitch);
    let qz = UnitQuaternion::from_axis_angle(Vec3::Z, e.yaw);
    let q = qz * qy * qx;
    UnitQuaternion::new_normalize(q.w, q.x, q.y, q.z).unwrap_or(UnitQuaternion::IDENTITY)
}

pub fn euler_from_quat(q: UnitQuaternion) -> EulerAngles {
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    let roll = math::atan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y));
    let sp = math::clamp(2.0 * (w * y - z * x), -1.0, 1.0);
    let pitch = math::asin(sp);
    let yaw = math::atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z));
    EulerAngles { roll, pitch, yaw }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Aabb { min: min.component_min(max), max: min.component_max(max) }
    }

    pub fn from_center_half_extents(center: Vec3, half: Vec3) -> Self {
        Aabb::new(center - half, center + half)
    }

    pub fn from_points(points: &[Vec3]) -> Option<Self> {
        let first = *points.first()?;
        let (min, max) = points
            .iter()
            .fold((first, first), |(lo, hi), p| (lo.component_min(*p), hi.component_max(*p)));
        Some(Aabb { min, max })
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extents(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    pub fn contains_aabb(&self, o: &Aabb) -> bool {
        self.contains(o.min) && self.contains(o.max)
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb { min: self.min.component_min(o.min), max: self.max.component_max(o.max) }
    }

    /// Grows the box by `d` in x and y only.
    pub fn inflate_xy(&self, d: f64) -> Aabb {
        Aabb {
            min: Vec3::new(self.min.x - d, self.min.y - d, self.min.z),
            max: Vec3::new(self.max.x + d, self.max.y + d, self.max.z),
        }
    }

    /// Planar distance from `p` to the box footprint; zero inside.
    pub fn distance_xy(&self, p: Vec3) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        math::sqrt(dx * dx + dy * dy)
    }

    /// Slab test. Returns the entry parameter `t ≥ 0` of the ray `origin + t·dir`.
    pub fn ray_intersection(&self, origin: Vec3, dir: Vec3) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = f64::INFINITY;
        for (o, d, lo, hi) in [
            (origin.x, dir.x, self.min.x, self.max.x),
            (origin.y, dir.y, self.min.y, self.max.y),
            (origin.z, dir.z, self.min.z, self.max.z),
        ] {
            if d.abs() < 1e-15 {
                if o < lo || o > hi {
                    return None;
                }
            } else {
                let inv = 1.0 / d;
                let (mut a, mut b) = ((lo - o) * inv, (hi - o) * inv);
                if a > b {
                    core::mem::swap(&mut a, &mut b);
                }
                t0 = t0.max(a);
                t1 = t1.min(b);
                if t0 > t1 {
                    return None;
                }
            }
        }
        Some(t0)
    }
}
