//! Ground-truth world state shared by the simulator and subtask monitors.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::{Aabb, Pose, UnitQuaternion, Vec3};
use crate::rewards::LocomotionCommand;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Rigid,
    Container,
    Articulated,
    Draggable,
}

impl ObjectKind {
    /// Whether the gripper may carry the object.
    pub fn graspable(self) -> bool {
        matches!(self, ObjectKind::Rigid | ObjectKind::Draggable)
    }
}

/// 1-DoF prismatic joint. The handle moves along `axis` as `value` grows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Articulation {
    pub value: f64,
    pub min: f64,
    pub max: f64,
    /// Unit direction of increasing joint value, world frame.
    pub axis: Vec3,
    /// Handle position at joint value 0, world frame.
    pub handle_origin: Vec3,
}

impl Articulation {
    pub fn handle_position(&self) -> Vec3 {
        self.handle_origin + self.axis * self.value
    }

    /// Joint value whose handle position is closest to `p`, clamped to limits.
    pub fn value_for(&self, p: Vec3) -> f64 {
        (p - self.handle_origin).dot(self.axis).clamp(self.min, self.max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub id: u32,
    pub label: String,
    pub kind: ObjectKind,
    pub pose: Pose,
    pub half_extents: Vec3,
    /// Grasp point in the object frame.
    pub attach_point: Vec3,
    #[serde(default)]
    pub articulation: Option<Articulation>,
    /// Ground-truth dominant axis at the grasp point, world frame.
    #[serde(default)]
    pub axis: Option<Vec3>,
    /// Ground-truth surface normal at the grasp point, world frame.
    #[serde(default)]
    pub normal: Option<Vec3>,
    /// Semantic descriptor used when synthesizing detections.
    #[serde(default)]
    pub descriptor: Option<Vec<f64>>,
    /// Object this one rests on, with its pose in the supporter's frame.
    #[serde(default)]
    pub supported_by: Option<(u32, Pose)>,
}

impl ObjectState {
    pub fn new(id: u32, label: impl Into<String>, kind: ObjectKind, pose: Pose, half_extents: Vec3) -> Self {
        ObjectState {
            id,
            label: label.into(),
            kind,
            pose,
            half_extents,
            attach_point: Vec3::ZERO,
            articulation: None,
            axis: None,
            normal: None,
            descriptor: None,
            supported_by: None,
        }
    }

    /// World-frame box enclosing the (possibly yawed) object.
    pub fn bbox(&self) -> Aabb {
        let h = self.half_extents;
        let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = -lo;
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    let p = self.pose.transform_point(Vec3::new(sx * h.x, sy * h.y, sz * h.z));
                    lo = lo.component_min(p);
                    hi = hi.component_max(p);
                }
            }
        }
        Aabb { min: lo, max: hi }
    }

    /// Grasp point in the world; the handle for articulated objects.
    pub fn attach_point_world(&self) -> Vec3 {
        match &self.articulation {
            Some(a) => a.handle_position(),
            None => self.pose.transform_point(self.attach_point),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gripper {
    Open,
    Closed,
}

/// Object rigidly held by the gripper, with its pose in the EE frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub object: u32,
    pub relative: Pose,
}

/// Default EE pose in the base frame: ahead and above the body, gripper facing forward.
pub fn stow_pose() -> Pose {
    let r = crate::geometry::RotationMatrix::from_columns(Vec3::Y, Vec3::Z, Vec3::X);
    Pose::new(Vec3::new(0.35, 0.0, 0.25), r.to_quaternion())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub t: f64,
    pub base: Pose,
    pub commanded_velocity: LocomotionCommand,
    pub velocity: LocomotionCommand,
    pub ee_in_base: Pose,
    pub ee_command: Option<Pose>,
    /// Command after reach clamping and tracking bias; what the EE converges to.
    pub ee_effective: Option<Pose>,
    /// Tracking offset drawn when the EE command changes.
    pub ee_bias: Pose,
    pub gripper: Gripper,
    pub attachment: Option<Attachment>,
    /// Articulated object whose handle is in the gripper.
    pub handle_grasp: Option<u32>,
    pub objects: BTreeMap<u32, ObjectState>,
}

impl WorldState {
    pub fn new(base: Pose, objects: BTreeMap<u32, ObjectState>) -> Self {
        WorldState {
            t: 0.0,
            base,
            commanded_velocity: LocomotionCommand::ZERO,
            velocity: LocomotionCommand::ZERO,
            ee_in_base: stow_pose(),
            ee_command: None,
            ee_effective: None,
            ee_bias: Pose::IDENTITY,
            gripper: Gripper::Open,
            attachment: None,
            handle_grasp: None,
            objects,
        }
    }

    pub fn ee_world(&self) -> Pose {
        self.base.compose(&self.ee_in_base)
    }

    pub fn object(&self, id: u32) -> Option<&ObjectState> {
        self.objects.get(&id)
    }

    pub fn is_attached(&self, id: u32) -> bool {
        self.attachment.is_some_and(|a| a.object == id)
    }

    /// Re-derives poses of the held object and anything resting on moved objects.
    pub fn sync_attached(&mut self) {
        let ee = self.ee_world();
        if let Some(att) = self.attachment {
            if let Some(o) = self.objects.get_mut(&att.object) {
                o.pose = ee.compose(&att.relative);
            }
        }
        // supporters are resolved before dependents; chains are shallow
        for _ in 0..2 {
            let updates: Vec<(u32, Pose)> = self
                .objects
                .values()
                .filter_map(|o| {
                    let (sid, rel) = o.supported_by?;
                    let s = self.objects.get(&sid)?;
                    Some((o.id, s.pose.compose(&rel)))
                })
                .collect();
            for (id, pose) in updates {
                if let Some(o) = self.objects.get_mut(&id) {
                    o.pose = pose;
                }
            }
        }
    }

    /// Base yaw as a quaternion.
    pub fn heading(&self) -> UnitQuaternion {
        UnitQuaternion::from_yaw(self.base.yaw())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cup(id: u32) -> ObjectState {
        ObjectState {
            attach_point: Vec3::new(0.0, 0.0, 0.05),
            ..ObjectState::new(id, "cup", ObjectKind::Rigid, Pose::from_translation(Vec3::new(1.0, 0.0, 0.5)), Vec3::new(0.04, 0.04, 0.05))
        }
    }

    #[test]
    fn attached_object_tracks_ee() {
        let mut objects = BTreeMap::new();
        objects.insert(3, cup(3));
        let mut w = WorldState::new(Pose::planar(0.0, 0.0, 0.45, 0.0), objects);
        let rel = w.ee_world().inverse().compose(&w.objects[&3].pose);
        w.attachment = Some(Attachment { object: 3, relative: rel });
        w.base = Pose::planar(2.0, 1.0, 0.45, 1.0);
        w.sync_attached();
        let got = w.ee_world().inverse().compose(&w.objects[&3].pose);
        assert!(got.position.distance(rel.position) < 1e-12);
        assert!(got.orientation.geodesic_distance(rel.orientation) < 1e-9);
    }

    #[test]
    fn yawed_bbox_encloses_corners() {
        let mut c = cup(0);
        c.pose = Pose::planar(0.0, 0.0, 0.5, core::f64::consts::FRAC_PI_4);
        let b = c.bbox();
        assert!((b.max.x - 0.04 * core::f64::consts::SQRT_2).abs() < 1e-12);
        assert_eq!(c.attach_point_world(), Vec3::new(0.0, 0.0, 0.55));
    }

    #[test]
    fn stow_is_proper() {
        assert!(stow_pose().orientation.to_rotation_matrix().is_proper(1e-12));
    }
}
