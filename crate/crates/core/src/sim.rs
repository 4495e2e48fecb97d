//! Kinematic 2.5D episode simulator.
//!
//! The base follows velocity commands through a first-order lag, the end
//! effector converges exponentially toward its command, and atomic actions
//! are executed by primitive controllers that call into perception, planning,
//! grounding and navigation.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::{format, vec};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{Detection, FusionConfig, InstanceGraph};
use crate::geometry::{Aabb, Pose, UnitQuaternion, Vec3, euler_from_quat};
use crate::grounding::{
    CameraModel, GroundingFrame, ScriptedGroundingOracle, default_approach, ground_action,
    render_depth, solve_orientation_quat,
};
use crate::math;
use crate::nav::{
    GoalSearchConfig, OccupancyGrid, Scan, Traversability, ZBand, find_goal_pose, integrate_scan, nearest_traversable,
    plan_path,
};
use crate::planning::{
    ActionKind, AtomicAction, PlannerOracle, ScriptedPlanner, SubtaskMonitor, SubtaskReport, TargetRef, TaskPlan,
    monitor_step, report, validate_plan_ids,
};
use crate::rewards::{
    ContactTimeline, EETarget, JointState, LocomotionCommand, NUM_JOINTS, RewardConfig, RewardInputs, RewardTerms,
    Stage, compute_terms, total_reward, trot_contacts,
};
use crate::sampling::SeededRng;
use crate::world::{Attachment, Gripper, ObjectKind, ObjectState, WorldState, stow_pose};

/// Terrain raster. Cell `(col, row)` covers `[origin + col·res, +res)` in x and
/// likewise in y; row 0 is the lowest y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heightmap {
    pub origin: Vec3,
    pub resolution: f64,
    pub cols: usize,
    pub rows: usize,
    pub heights: Vec<f64>,
}

impl Heightmap {
    /// Height under `(x, y)`; 0 outside the raster.
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        let c = math::floor((x - self.origin.x) / self.resolution);
        let r = math::floor((y - self.origin.y) / self.resolution);
        if c < 0.0 || r < 0.0 || c >= self.cols as f64 || r >= self.rows as f64 {
            return 0.0;
        }
        self.heights[r as usize * self.cols + c as usize]
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.resolution > 0.0) {
            return Err("resolution must be positive");
        }
        if self.heights.len() != self.cols * self.rows {
            return Err("height count does not match cols × rows");
        }
        if self.heights.iter().any(|h| !h.is_finite()) {
            return Err("heights must be finite");
        }
        Ok(())
    }
}

/// Initial occupancy grid geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub resolution: f64,
    pub origin: Vec3,
    pub width: usize,
    pub height: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { resolution: 0.05, origin: Vec3::new(-2.0, -2.0, 0.0), width: 256, height: 256 }
    }
}

/// Stand-in for the trained policy's tracking behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackingModel {
    /// Base velocity time constant, seconds. 0 tracks instantly.
    pub tau_base: f64,
    /// EE convergence rate, 1/s.
    pub ee_rate: f64,
    pub sigma_pos: f64,
    pub sigma_ori: f64,
}

impl Default for TrackingModel {
    fn default() -> Self {
        TrackingModel { tau_base: 0.1, ee_rate: 5.0, sigma_pos: 0.0, sigma_ori: 0.0 }
    }
}

impl TrackingModel {
    pub fn validate(&self) -> Result<(), &'static str> {
        let vals = [self.tau_base, self.ee_rate, self.sigma_pos, self.sigma_ori];
        if vals.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err("tracking parameters must be finite and non-negative");
        }
        if self.ee_rate == 0.0 {
            return Err("ee_rate must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    pub lookahead: f64,
    pub max_speed: f64,
    pub max_yaw_rate: f64,
    /// Speed per metre of remaining distance near the goal.
    pub approach_gain: f64,
    pub yaw_gain: f64,
    pub position_tolerance: f64,
    pub yaw_tolerance: f64,
    /// Seconds without progress before replanning.
    pub stall_time: f64,
    pub max_replans: u32,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            lookahead: 0.3,
            max_speed: 0.8,
            max_yaw_rate: 1.0,
            approach_gain: 1.5,
            yaw_gain: 2.0,
            position_tolerance: 0.1,
            yaw_tolerance: 0.1,
            stall_time: 2.0,
            max_replans: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManipulationConfig {
    /// Stand-off along the approach axis before contact, metres.
    pub pre_contact_offset: f64,
    pub lift_height: f64,
    pub attach_tolerance: f64,
    pub orientation_tolerance: f64,
    pub converge_position: f64,
    pub converge_orientation: f64,
    /// Arm base in the base frame.
    pub arm_base: Vec3,
    pub reach: f64,
    pub default_approach: Vec3,
}

impl Default for ManipulationConfig {
    fn default() -> Self {
        ManipulationConfig {
            pre_contact_offset: 0.10,
            lift_height: 0.10,
            attach_tolerance: 0.05,
            orientation_tolerance: 0.35,
            converge_position: 2e-3,
            converge_orientation: 0.02,
            arm_base: Vec3::new(0.15, 0.0, 0.10),
            reach: 0.85,
            default_approach: default_approach(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Timeouts {
    pub navigate: f64,
    pub manipulation: f64,
}

impl Default for Timeouts {
    fn default() -> Self {
        Timeouts { navigate: 60.0, manipulation: 20.0 }
    }
}

/// Planar range sensor sweeping the obstacle height band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LidarConfig {
    pub rays: usize,
    pub range: f64,
    pub rate_hz: f64,
    pub z_band: ZBand,
}

impl Default for LidarConfig {
    fn default() -> Self {
        LidarConfig { rays: 360, range: 8.0, rate_hz: 10.0, z_band: ZBand::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt: f64,
    pub tracking: TrackingModel,
    pub controller: ControllerConfig,
    pub manipulation: ManipulationConfig,
    pub timeouts: Timeouts,
    pub goal_search: GoalSearchConfig,
    pub lidar: LidarConfig,
    pub collision_radius: f64,
    pub nominal_height: f64,
    pub camera: CameraModel,
    pub fusion: FusionConfig,
    pub descriptor_dim: usize,
    pub rewards: RewardConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.02,
            tracking: TrackingModel::default(),
            controller: ControllerConfig::default(),
            manipulation: ManipulationConfig::default(),
            timeouts: Timeouts::default(),
            goal_search: GoalSearchConfig::default(),
            lidar: LidarConfig::default(),
            collision_radius: 0.25,
            nominal_height: 0.45,
            camera: CameraModel::body_default(),
            fusion: FusionConfig::default(),
            descriptor_dim: 16,
            rewards: RewardConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err("dt must be positive".to_string());
        }
        self.tracking.validate().map_err(String::from)?;
        self.goal_search.validate().map_err(|e| e.to_string())?;
        self.fusion.validate().map_err(|e| e.to_string())?;
        self.rewards.validate().map_err(|e| e.to_string())?;
        self.camera.validate().map_err(|e| e.to_string())?;
        let c = &self.controller;
        if ![c.lookahead, c.max_speed, c.max_yaw_rate, c.approach_gain, c.yaw_gain, c.position_tolerance, c.yaw_tolerance, c.stall_time]
            .iter()
            .all(|v| *v > 0.0)
        {
            return Err("controller parameters must be positive".to_string());
        }
        let m = &self.manipulation;
        if ![m.attach_tolerance, m.orientation_tolerance, m.converge_position, m.converge_orientation, m.reach]
            .iter()
            .all(|v| *v > 0.0)
            || m.pre_contact_offset < 0.0
            || m.lift_height < 0.0
        {
            return Err("manipulation tolerances must be positive".to_string());
        }
        if !(self.timeouts.navigate > 0.0 && self.timeouts.manipulation > 0.0) {
            return Err("timeouts must be positive".to_string());
        }
        if self.lidar.rays == 0 || !(self.lidar.range > 0.0) || !(self.lidar.rate_hz > 0.0) {
            return Err("lidar needs rays, range and rate".to_string());
        }
        if !(self.collision_radius > 0.0 && self.nominal_height > 0.0) || self.descriptor_dim == 0 {
            return Err("collision radius, nominal height and descriptor size must be positive".to_string());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {message}")]
pub struct ScenarioError {
    /// Dotted path of the offending field, e.g. `monitors[2].condition.object`.
    pub path: String,
    pub message: String,
}

fn scenario_err(path: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError { path: path.into(), message: message.into() }
}

fn default_horizon() -> f64 {
    120.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub heightmap: Option<Heightmap>,
    #[serde(default)]
    pub static_obstacles: Vec<Aabb>,
    #[serde(default)]
    pub objects: Vec<ObjectState>,
    pub robot_start: Pose,
    pub instruction: String,
    #[serde(default)]
    pub planner: ScriptedPlanner,
    #[serde(default)]
    pub grounding: ScriptedGroundingOracle,
    /// Recorded detections; synthesized from object boxes when absent.
    #[serde(default)]
    pub detections: Option<Vec<Detection>>,
    #[serde(default)]
    pub monitors: Vec<SubtaskMonitor>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridSpec,
}

impl Scenario {
    pub fn terrain_height(&self, x: f64, y: f64) -> f64 {
        self.heightmap.as_ref().map_or(0.0, |h| h.height_at(x, y))
    }

    /// Checks ids, cross-references and value ranges.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(scenario_err("horizon", "must be positive"));
        }
        if let Some(h) = &self.heightmap {
            h.validate().map_err(|m| scenario_err("heightmap", m))?;
        }
        if !(self.grid.resolution > 0.0) || self.grid.width == 0 || self.grid.height == 0 {
            return Err(scenario_err("grid", "resolution and dimensions must be positive"));
        }
        for (i, b) in self.static_obstacles.iter().enumerate() {
            if !(b.min.x <= b.max.x && b.min.y <= b.max.y && b.min.z <= b.max.z) {
                return Err(scenario_err(format!("static_obstacles[{i}]"), "min exceeds max"));
            }
        }
        let mut ids = BTreeSet::new();
        for (i, o) in self.objects.iter().enumerate() {
            if !ids.insert(o.id) {
                return Err(scenario_err(format!("objects[{i}].id"), format!("duplicate object id {}", o.id)));
            }
            let h = o.half_extents;
            if !(h.x > 0.0 && h.y > 0.0 && h.z > 0.0) {
                return Err(scenario_err(format!("objects[{i}].half_extents"), "must be positive"));
            }
            if o.kind == ObjectKind::Articulated && o.articulation.is_none() {
                return Err(scenario_err(format!("objects[{i}].articulation"), "articulated object needs a joint"));
            }
            if let Some(a) = &o.articulation {
                if !(a.min <= a.value && a.value <= a.max) {
                    return Err(scenario_err(format!("objects[{i}].articulation.value"), "outside joint limits"));
                }
                if (a.axis.norm() - 1.0).abs() > 1e-6 {
                    return Err(scenario_err(format!("objects[{i}].articulation.axis"), "must be a unit vector"));
                }
            }
            if let Some(d) = &o.descriptor {
                if d.iter().all(|v| *v == 0.0) {
                    return Err(scenario_err(format!("objects[{i}].descriptor"), "zero descriptor"));
                }
            }
        }
        for (i, o) in self.objects.iter().enumerate() {
            if let Some((sid, _)) = o.supported_by {
                if !ids.contains(&sid) || sid == o.id {
                    return Err(scenario_err(format!("objects[{i}].supported_by"), format!("unknown support object {sid}")));
                }
            }
        }
        for (i, m) in self.monitors.iter().enumerate() {
            m.condition
                .validate()
                .map_err(|e| scenario_err(format!("monitors[{i}].condition"), e.to_string()))?;
            for (field, id) in m.condition.objects() {
                if !ids.contains(&id) {
                    return Err(scenario_err(format!("monitors[{i}].condition.{field}"), format!("unknown object {id}")));
                }
            }
        }
        let key = self.instruction.trim();
        if key.is_empty() {
            return Err(scenario_err("instruction", "empty instruction"));
        }
        let steps = self
            .planner
            .plans
            .get(key)
            .ok_or_else(|| scenario_err("instruction", "no plan fixture for this instruction"))?;
        let labels: BTreeSet<&str> = self.objects.iter().map(|o| o.label.as_str()).collect();
        for (i, s) in steps.iter().enumerate() {
            match &s.target {
                Some(TargetRef::Label(l)) if !labels.contains(l.as_str()) && self.detections.is_none() => {
                    return Err(scenario_err(format!("plan.steps[{i}].target"), format!("no object labelled {l:?}")));
                }
                Some(TargetRef::Id(id)) if !ids.contains(id) && self.detections.is_none() => {
                    return Err(scenario_err(format!("plan.steps[{i}].target"), format!("unknown object {id}")));
                }
                _ => {}
            }
            if s.kind.needs_target() && s.target.is_none() {
                return Err(scenario_err(format!("plan.steps[{i}].target"), "action needs a target"));
            }
            if s.description.trim().is_empty() {
                return Err(scenario_err(format!("plan.steps[{i}].description"), "empty description"));
            }
        }
        for k in self.grounding.targets.keys() {
            if *k >= steps.len() {
                return Err(scenario_err(format!("grounding[{k}]"), format!("plan has only {} steps", steps.len())));
            }
        }
        if let Some(dets) = &self.detections {
            for (i, d) in dets.iter().enumerate() {
                d.validate().map_err(|e| scenario_err(format!("detections[{i}]"), e.to_string()))?;
            }
        }
        Ok(())
    }
}

/// Static environment a tick is evaluated against.
#[derive(Debug, Clone, Copy)]
pub struct SimEnv<'a> {
    pub heightmap: Option<&'a Heightmap>,
    pub static_obstacles: &'a [Aabb],
    pub collision_radius: f64,
    pub nominal_height: f64,
    pub z_band: ZBand,
    pub arm_base: Vec3,
    pub reach: f64,
}

impl<'a> SimEnv<'a> {
    pub fn new(scenario: &'a Scenario, cfg: &SimConfig) -> Self {
        SimEnv {
            heightmap: scenario.heightmap.as_ref(),
            static_obstacles: &scenario.static_obstacles,
            collision_radius: cfg.collision_radius,
            nominal_height: cfg.nominal_height,
            z_band: cfg.lidar.z_band,
            arm_base: cfg.manipulation.arm_base,
            reach: cfg.manipulation.reach,
        }
    }

    /// Flat ground, no obstacles.
    pub fn open(cfg: &SimConfig) -> SimEnv<'static> {
        SimEnv {
            heightmap: None,
            static_obstacles: &[],
            collision_radius: cfg.collision_radius,
            nominal_height: cfg.nominal_height,
            z_band: cfg.lidar.z_band,
            arm_base: cfg.manipulation.arm_base,
            reach: cfg.manipulation.reach,
        }
    }

    pub fn terrain(&self, x: f64, y: f64) -> f64 {
        self.heightmap.map_or(0.0, |h| h.height_at(x, y))
    }
}

/// Held object plus everything resting on it, transitively.
pub fn carried_objects(world: &WorldState) -> BTreeSet<u32> {
    let mut set = BTreeSet::new();
    if let Some(a) = world.attachment {
        set.insert(a.object);
        loop {
            let before = set.len();
            for o in world.objects.values() {
                if let Some((sid, _)) = o.supported_by {
                    if set.contains(&sid) {
                        set.insert(o.id);
                    }
                }
            }
            if set.len() == before {
                break;
            }
        }
    }
    set
}

/// Boxes that block the base and the range sensor: static obstacles plus
/// free objects overlapping the height band.
pub fn blocking_boxes(world: &WorldState, env: &SimEnv<'_>) -> Vec<Aabb> {
    let carried = carried_objects(world);
    let ground = env.terrain(world.base.position.x, world.base.position.y);
    let in_band = |b: &Aabb| b.min.z - ground <= env.z_band.max && b.max.z - ground >= env.z_band.min;
    let mut out: Vec<Aabb> = env.static_obstacles.iter().copied().filter(in_band).collect();
    out.extend(world.objects.values().filter(|o| !carried.contains(&o.id)).map(|o| o.bbox()).filter(in_band));
    out
}

fn collides(p: Vec3, boxes: &[Aabb], radius: f64) -> bool {
    boxes.iter().any(|b| b.distance_xy(p) < radius)
}

fn random_unit(rng: &mut SeededRng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.normal(0.0, 1.0), rng.normal(0.0, 1.0), rng.normal(0.0, 1.0));
        if let Some(u) = v.normalized() {
            return u;
        }
    }
}

fn clamp_reach(p: Vec3, env: &SimEnv<'_>) -> Vec3 {
    let d = p - env.arm_base;
    let n = d.norm();
    if n > env.reach { env.arm_base + d * (env.reach / n) } else { p }
}

/// Advances the world by one tick of length `dt`.
pub fn step(
    world: &mut WorldState,
    env: &SimEnv<'_>,
    cmd: LocomotionCommand,
    ee_cmd: Option<Pose>,
    dt: f64,
    tracking: &TrackingModel,
    rng: &mut SeededRng,
) {
    let alpha = if tracking.tau_base > 0.0 { 1.0 - math::exp(-dt / tracking.tau_base) } else { 1.0 };
    let v = &mut world.velocity;
    v.x += alpha * (cmd.x - v.x);
    v.y += alpha * (cmd.y - v.y);
    v.yaw_rate += alpha * (cmd.yaw_rate - v.yaw_rate);
    world.commanded_velocity = cmd;

    let yaw = world.base.yaw();
    let (s, c) = (math::sin(yaw), math::cos(yaw));
    let p = world.base.position;
    let (nx, ny) = (p.x + (c * v.x - s * v.y) * dt, p.y + (s * v.x + c * v.y) * dt);
    let new_yaw = math::wrap_angle(yaw + v.yaw_rate * dt);
    let moving = nx != p.x || ny != p.y;
    let blocked = moving && collides(Vec3::new(nx, ny, p.z), &blocking_boxes(world, env), env.collision_radius);
    let (x, y) = if blocked { (p.x, p.y) } else { (nx, ny) };
    if new_yaw != yaw || x != p.x || y != p.y {
        world.base = Pose::planar(x, y, env.terrain(x, y) + env.nominal_height, new_yaw);
    }

    match ee_cmd {
        Some(target) => {
            if world.ee_command != Some(target) || world.ee_effective.is_none() {
                world.ee_bias = if tracking.sigma_pos > 0.0 || tracking.sigma_ori > 0.0 {
                    let dp = Vec3::new(
                        rng.normal(0.0, tracking.sigma_pos),
                        rng.normal(0.0, tracking.sigma_pos),
                        rng.normal(0.0, tracking.sigma_pos),
                    );
                    let axis = random_unit(rng);
                    let angle = rng.normal(0.0, tracking.sigma_ori);
                    Pose::new(dp, UnitQuaternion::from_axis_angle(axis, angle))
                } else {
                    Pose::IDENTITY
                };
                world.ee_command = Some(target);
                world.ee_effective = Some(Pose::new(
                    clamp_reach(target.position, env) + world.ee_bias.position,
                    world.ee_bias.orientation * target.orientation,
                ));
            }
            let goal = world.ee_effective.unwrap_or(target);
            let a = 1.0 - math::exp(-tracking.ee_rate * dt);
            let cur = world.ee_in_base;
            world.ee_in_base =
                Pose::new(cur.position.lerp(goal.position, a), cur.orientation.slerp(goal.orientation, a));
        }
        None => {
            world.ee_command = None;
            world.ee_effective = None;
        }
    }

    if let Some(id) = world.handle_grasp {
        let ee = world.ee_world().position;
        if let Some(a) = world.objects.get_mut(&id).and_then(|o| o.articulation.as_mut()) {
            a.value = a.value_for(ee);
        }
    }
    world.sync_attached();
    world.t += dt;
}

/// One sweep of the planar range sensor at the base pose. Returns hit
/// points in the sensor frame.
pub fn lidar_scan(world: &WorldState, env: &SimEnv<'_>, cfg: &LidarConfig) -> Scan {
    let sensor = world.base;
    let o = sensor.position;
    let boxes: Vec<Aabb> = blocking_boxes(world, env)
        .into_iter()
        .map(|b| Aabb::new(Vec3::new(b.min.x, b.min.y, o.z - 1.0), Vec3::new(b.max.x, b.max.y, o.z + 1.0)))
        .collect();
    let yaw = sensor.yaw();
    let mut points = Vec::new();
    for i in 0..cfg.rays {
        let a = yaw + math::TAU * i as f64 / cfg.rays as f64;
        let dir = Vec3::new(math::cos(a), math::sin(a), 0.0);
        let hit = boxes
            .iter()
            .filter_map(|b| b.ray_intersection(o, dir))
            .filter(|t| *t > 1e-9 && *t <= cfg.range)
            .fold(None, |best: Option<f64>, t| Some(best.map_or(t, |b| b.min(t))));
        if let Some(t) = hit {
            points.push(sensor.inverse_transform_point(o + dir * t));
        }
    }
    Scan { sensor_pose: sensor, points, timestamp: world.t, ground_height: env.terrain(o.x, o.y) }
}

/// Deterministic unit descriptor derived from a label.
pub fn label_descriptor(label: &str, dim: usize) -> Vec<f64> {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut rng = SeededRng::new(h);
    let v: Vec<f64> = (0..dim).map(|_| rng.normal(0.0, 1.0)).collect();
    let n = math::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    v.into_iter().map(|x| x / n).collect()
}

/// Points on the faces of a box, spaced at most `spacing` apart.
pub fn surface_points(b: &Aabb, spacing: f64) -> Vec<Vec3> {
    let steps = |lo: f64, hi: f64| {
        let n = (math::ceil((hi - lo) / spacing) as usize).max(1);
        (0..=n).map(move |i| lo + (hi - lo) * i as f64 / n as f64)
    };
    let mut pts = Vec::new();
    for x in steps(b.min.x, b.max.x) {
        for y in steps(b.min.y, b.max.y) {
            pts.push(Vec3::new(x, y, b.min.z));
            pts.push(Vec3::new(x, y, b.max.z));
        }
    }
    for x in steps(b.min.x, b.max.x) {
        for z in steps(b.min.z, b.max.z) {
            pts.push(Vec3::new(x, b.min.y, z));
            pts.push(Vec3::new(x, b.max.y, z));
        }
    }
    for y in steps(b.min.y, b.max.y) {
        for z in steps(b.min.z, b.max.z) {
            pts.push(Vec3::new(b.min.x, y, z));
            pts.push(Vec3::new(b.max.x, y, z));
        }
    }
    pts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionOutcome {
    pub index: usize,
    pub kind: ActionKind,
    pub success: bool,
    #[serde(default)]
    pub error: Option<String>,
    pub start: f64,
    pub end: f64,
}

/// One recorded tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub tick: u64,
    pub t: f64,
    pub action: Option<usize>,
    pub phase: String,
    pub base: Pose,
    pub command: LocomotionCommand,
    pub velocity: LocomotionCommand,
    pub ee_world: Pose,
    pub ee_command: Option<Pose>,
    pub gripper: Gripper,
    pub attached: Option<u32>,
    pub terms: RewardTerms,
    pub total_stage1: f64,
    pub total_stage2: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RateStats {
    pub completed: u32,
    pub total: u32,
}

impl RateStats {
    pub fn rate(&self) -> Option<f64> {
        (self.total > 0).then(|| self.completed as f64 / self.total as f64)
    }
}

/// Evaluation summary of one or more episodes. Errors are SI means over
/// the episodes that produced samples; `None` when none did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub episodes: u32,
    pub successful_episodes: u32,
    pub overall_success_rate: f64,
    pub e_x: Option<f64>,
    pub e_y: Option<f64>,
    pub e_yaw: Option<f64>,
    pub d_pos: Option<f64>,
    pub d_ori: Option<f64>,
    /// `e_x` and `e_y` scaled by 100 for tabulation.
    pub e_x_x100: Option<f64>,
    pub e_y_x100: Option<f64>,
    pub per_kind: BTreeMap<ActionKind, RateStats>,
    pub per_kind_rate: BTreeMap<ActionKind, f64>,
}

fn mean_opt(vals: impl Iterator<Item = (Option<f64>, u32)>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0u32);
    for (v, w) in vals {
        if let Some(v) = v {
            sum += v * w as f64;
            n += w;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

impl MetricsReport {
    fn finish(mut self) -> Self {
        self.overall_success_rate =
            if self.episodes == 0 { 0.0 } else { self.successful_episodes as f64 / self.episodes as f64 };
        self.e_x_x100 = self.e_x.map(|v| v * 100.0);
        self.e_y_x100 = self.e_y.map(|v| v * 100.0);
        self.per_kind_rate = self.per_kind.iter().filter_map(|(k, s)| s.rate().map(|r| (*k, r))).collect();
        self
    }
}

/// Pools per-episode (or per-batch) reports.
pub fn aggregate(reports: &[MetricsReport]) -> MetricsReport {
    let mut per_kind: BTreeMap<ActionKind, RateStats> = BTreeMap::new();
    for r in reports {
        for (k, s) in &r.per_kind {
            let e = per_kind.entry(*k).or_default();
            e.completed += s.completed;
            e.total += s.total;
        }
    }
    let pick = |f: fn(&MetricsReport) -> Option<f64>| mean_opt(reports.iter().map(|r| (f(r), r.episodes)));
    MetricsReport {
        episodes: reports.iter().map(|r| r.episodes).sum(),
        successful_episodes: reports.iter().map(|r| r.successful_episodes).sum(),
        overall_success_rate: 0.0,
        e_x: pick(|r| r.e_x),
        e_y: pick(|r| r.e_y),
        e_yaw: pick(|r| r.e_yaw),
        d_pos: pick(|r| r.d_pos),
        d_ori: pick(|r| r.d_ori),
        e_x_x100: None,
        e_y_x100: None,
        per_kind,
        per_kind_rate: BTreeMap::new(),
    }
    .finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub scenario: String,
    pub episode: u64,
    pub seed: u64,
    pub plan: Option<TaskPlan>,
    pub plan_error: Option<String>,
    pub outcomes: Vec<ActionOutcome>,
    pub monitors: Vec<SubtaskMonitor>,
    pub subtasks: SubtaskReport,
    pub metrics: MetricsReport,
    pub trace: Vec<TraceRow>,
    pub grid: OccupancyGrid,
    pub final_world: WorldState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Facing {
    Toward(Vec3),
    Keep,
}

struct Runner<'a> {
    sc: &'a Scenario,
    cfg: &'a SimConfig,
    env: SimEnv<'a>,
    world: WorldState,
    rng: SeededRng,
    grid: OccupancyGrid,
    graph: InstanceGraph,
    node_objects: BTreeMap<u32, u32>,
    monitors: Vec<SubtaskMonitor>,
    contacts: ContactTimeline,
    tick: u64,
    gait_tick: u64,
    trot_period: u64,
    lidar_every: u64,
    ee_cmd: Option<Pose>,
    action: Option<usize>,
    phase: &'static str,
    trace: Vec<TraceRow>,
    vel_err: [f64; 3],
    vel_ticks: u64,
    ee_err: Vec<(f64, f64)>,
}

type StepResult<T> = Result<T, String>;

impl<'a> Runner<'a> {
    fn new(sc: &'a Scenario, cfg: &'a SimConfig, seed: u64, episode: u64) -> Result<Self, String> {
        let env = SimEnv::new(sc, cfg);
        let start = sc.robot_start;
        let (x, y) = (start.position.x, start.position.y);
        let base = Pose::planar(x, y, env.terrain(x, y) + cfg.nominal_height, start.yaw());
        let objects = sc.objects.iter().map(|o| (o.id, o.clone())).collect();
        let mut world = WorldState::new(base, objects);
        world.sync_attached();
        let g = sc.grid;
        let grid = OccupancyGrid::new(g.resolution, g.origin, g.width, g.height).map_err(|e| e.to_string())?;
        let graph = InstanceGraph::new(cfg.descriptor_dim, cfg.fusion).map_err(|e| e.to_string())?;
        let half = math::round(1.0 / (2.0 * cfg.rewards.f_target * cfg.dt)).max(1.0) as u64;
        let lidar_every = math::round(1.0 / (cfg.lidar.rate_hz * cfg.dt)).max(1.0) as u64;
        Ok(Runner {
            sc,
            cfg,
            env,
            world,
            rng: SeededRng::for_episode(seed, episode),
            grid,
            graph,
            node_objects: BTreeMap::new(),
            monitors: sc.monitors.clone(),
            contacts: ContactTimeline::standing(),
            tick: 0,
            gait_tick: 0,
            trot_period: 2 * half,
            lidar_every,
            ee_cmd: None,
            action: None,
            phase: "init",
            trace: Vec::new(),
            vel_err: [0.0; 3],
            vel_ticks: 0,
            ee_err: Vec::new(),
        })
    }

    fn expired(&self) -> bool {
        self.world.t >= self.sc.horizon - 1e-9
    }

    fn scan(&mut self) {
        let scan = lidar_scan(&self.world, &self.env, &self.cfg.lidar);
        integrate_scan(&mut self.grid, &scan, self.cfg.lidar.z_band);
    }

    /// Advances one tick; false once the horizon is reached.
    fn tick(&mut self, cmd: LocomotionCommand) -> bool {
        if self.expired() {
            return false;
        }
        let dt = self.cfg.dt;
        step(&mut self.world, &self.env, cmd, self.ee_cmd, dt, &self.cfg.tracking, &mut self.rng);
        self.tick += 1;
        self.world.t = self.tick as f64 * dt;
        if self.tick.is_multiple_of(self.lidar_every) {
            self.scan();
        }
        // scenario validation guarantees every monitored object exists
        let _ = monitor_step(&mut self.monitors, &self.world, self.world.t);

        let v = self.world.velocity;
        if !cmd.is_zero() {
            self.vel_err[0] += (cmd.x - v.x).abs();
            self.vel_err[1] += (cmd.y - v.y).abs();
            self.vel_err[2] += (cmd.yaw_rate - v.yaw_rate).abs();
            self.vel_ticks += 1;
        }
        let contacts = if cmd.is_zero() {
            [true; 4]
        } else {
            self.gait_tick += 1;
            trot_contacts(self.gait_tick - 1, self.trot_period)
        };
        self.contacts.update(contacts, self.world.t, dt);
        let ee_t = |p: Pose| EETarget { position: p.position, orientation: euler_from_quat(p.orientation) };
        let actual = ee_t(self.world.ee_in_base);
        let inputs = RewardInputs {
            command: cmd,
            base_velocity: v,
            ee_target: self.world.ee_effective.map_or(actual, ee_t),
            ee_actual: actual,
            contacts: self.contacts,
            joints: JointState::default(),
            qddot: [0.0; NUM_JOINTS],
            action: [0.0; NUM_JOINTS],
            prev_action: [0.0; NUM_JOINTS],
        };
        let terms = compute_terms(&inputs, &self.cfg.rewards);
        let w = &self.cfg.rewards.weights;
        self.trace.push(TraceRow {
            tick: self.tick,
            t: self.world.t,
            action: self.action,
            phase: self.phase.to_string(),
            base: self.world.base,
            command: cmd,
            velocity: v,
            ee_world: self.world.ee_world(),
            ee_command: self.world.ee_command,
            gripper: self.world.gripper,
            attached: self.world.attachment.map(|a| a.object).or(self.world.handle_grasp),
            terms,
            total_stage1: total_reward(Stage::One, &terms, w),
            total_stage2: total_reward(Stage::Two, &terms, w),
        });
        true
    }

    fn observe(&mut self) -> StepResult<()> {
        self.scan();
        let dim = self.cfg.descriptor_dim;
        match &self.sc.detections {
            Some(dets) => {
                for d in dets {
                    let out = self.graph.ingest(d).map_err(|e| e.to_string())?;
                    let center = Aabb::from_points(&d.points).map(|b| b.center());
                    let obj = self
                        .world
                        .objects
                        .values()
                        .filter(|o| o.label == d.label)
                        .min_by(|a, b| {
                            let c = center.unwrap_or(Vec3::ZERO);
                            a.pose.position.distance(c).total_cmp(&b.pose.position.distance(c))
                        })
                        .map(|o| o.id);
                    if let Some(id) = obj {
                        self.node_objects.entry(out.node_id).or_insert(id);
                    }
                }
            }
            None => {
                let carried = carried_objects(&self.world);
                let objects: Vec<ObjectState> =
                    self.world.objects.values().filter(|o| !carried.contains(&o.id)).cloned().collect();
                for o in objects {
                    let desc = o.descriptor.clone().unwrap_or_else(|| label_descriptor(&o.label, dim));
                    let spacing = self.cfg.fusion.epsilon;
                    let det = Detection::new(o.label.clone(), desc, surface_points(&o.bbox(), spacing), self.world.t)
                        .map_err(|e| e.to_string())?;
                    let out = self.graph.ingest(&det).map_err(|e| e.to_string())?;
                    self.node_objects.entry(out.node_id).or_insert(o.id);
                }
            }
        }
        Ok(())
    }

    fn target_object(&self, a: &AtomicAction) -> Option<u32> {
        a.target_instance.and_then(|n| self.node_objects.get(&n).copied())
    }

    fn settle(&mut self) {
        let limit = self.world.t + 1.0;
        while self.world.t < limit {
            let v = self.world.velocity;
            if v.x.abs() < 1e-3 && v.y.abs() < 1e-3 && v.yaw_rate.abs() < 1e-3 {
                break;
            }
            if !self.tick(LocomotionCommand::ZERO) {
                break;
            }
        }
    }

    fn plan_route(&self, goal: Vec3) -> StepResult<Vec<Vec3>> {
        let infl = self.cfg.goal_search.robot_inflation;
        let here = self.world.base.position;
        let mut grid = self.grid.clone();
        let start_raw = grid.grow_to_include(here.x, here.y);
        let goal_raw = grid.grow_to_include(goal.x, goal.y);
        let start = nearest_traversable(&grid, start_raw, infl, 20).ok_or("no traversable start cell")?;
        let goal_cell = nearest_traversable(&grid, goal_raw, infl, 20).ok_or("no traversable goal cell")?;
        let path = plan_path(&grid, start, goal_cell, infl).map_err(|e| e.to_string())?;
        let mut pts = vec![here];
        let n = path.cells.len();
        if n > 2 {
            pts.extend(path.cells[1..n - 1].iter().map(|c| grid.cell_center(*c)));
        }
        pts.push(goal);
        Ok(pts)
    }

    fn route_blocked(&self, route: &[Vec3], from: usize) -> bool {
        let mut trav = Traversability::new(&self.grid, self.cfg.goal_search.robot_inflation);
        route[from..route.len().saturating_sub(1)].iter().skip(1).any(|p| match self.grid.cell_of(*p) {
            Some(c) => !trav.is_traversable(c),
            None => false,
        })
    }

    fn navigate(&mut self, waypoint: Vec3, facing: Facing, deadline: f64) -> StepResult<()> {
        let carried = carried_objects(&self.world);
        let obstacles: Vec<Aabb> = self
            .graph
            .nodes()
            .iter()
            .filter(|n| self.node_objects.get(&n.id).is_none_or(|o| !carried.contains(o)))
            .map(|n| n.bbox)
            .collect();
        let face = match facing {
            Facing::Toward(p) => p,
            Facing::Keep => waypoint,
        };
        let mut goal = find_goal_pose(&self.grid, waypoint, &obstacles, &self.cfg.goal_search, face)
            .map_err(|e| e.to_string())?;
        if facing == Facing::Keep {
            goal = Pose::planar(goal.position.x, goal.position.y, goal.position.z, self.world.base.yaw());
        }
        let goal_yaw = goal.yaw();
        let gp = goal.position;
        let c = self.cfg.controller;
        let mut replans = 0u32;
        'plan: loop {
            let route = self.plan_route(gp)?;
            let mut seg = 0usize;
            let mut best = f64::INFINITY;
            let mut last_progress = self.world.t;
            let mut next_check = self.world.t + 0.5;
            loop {
                let p = self.world.base.position;
                let dist = p.distance_xy(gp);
                let yaw_err = math::wrap_angle(goal_yaw - self.world.base.yaw());
                if dist < c.position_tolerance && yaw_err.abs() < c.yaw_tolerance {
                    self.settle();
                    return Ok(());
                }
                if self.expired() {
                    return Err("horizon reached".to_string());
                }
                if self.world.t >= deadline {
                    return Err("navigation timed out".to_string());
                }
                if dist < best - 0.05 {
                    best = dist;
                    last_progress = self.world.t;
                } else if self.world.t - last_progress > c.stall_time {
                    replans += 1;
                    if replans > c.max_replans {
                        return Err("no progress after replanning".to_string());
                    }
                    continue 'plan;
                }
                if self.world.t >= next_check {
                    next_check = self.world.t + 0.5;
                    if self.route_blocked(&route, seg) {
                        replans += 1;
                        if replans > c.max_replans {
                            return Err("route blocked after replanning".to_string());
                        }
                        continue 'plan;
                    }
                }
                let target = pursuit_target(&route, &mut seg, p, c.lookahead);
                let dx = target.x - p.x;
                let dy = target.y - p.y;
                let dn = math::sqrt(dx * dx + dy * dy);
                let speed = c.max_speed.min(c.approach_gain * dist);
                let (vx, vy) = if dn > 1e-9 { (dx / dn * speed, dy / dn * speed) } else { (0.0, 0.0) };
                let yaw = self.world.base.yaw();
                let (s, co) = (math::sin(yaw), math::cos(yaw));
                let cmd = LocomotionCommand::new(
                    co * vx + s * vy,
                    -s * vx + co * vy,
                    math::clamp(c.yaw_gain * yaw_err, -c.max_yaw_rate, c.max_yaw_rate),
                );
                self.tick(cmd);
            }
        }
    }

    /// Drives the EE to `target` (base frame) until converged or the deadline.
    fn move_ee(&mut self, target: Pose, deadline: f64) -> bool {
        self.ee_cmd = Some(target);
        let m = self.cfg.manipulation;
        let mut ok = false;
        loop {
            if !self.tick(LocomotionCommand::ZERO) {
                break;
            }
            let goal = self.world.ee_effective.unwrap_or(target);
            let cur = self.world.ee_in_base;
            if cur.position.distance(goal.position) <= m.converge_position
                && cur.orientation.geodesic_distance(goal.orientation) <= m.converge_orientation
            {
                ok = true;
                break;
            }
            if self.world.t >= deadline {
                break;
            }
        }
        let cur = self.world.ee_in_base;
        self.ee_err
            .push((cur.position.distance(target.position), cur.orientation.geodesic_distance(target.orientation)));
        ok
    }

    fn ground(&mut self, index: usize, description: &str) -> StepResult<Pose> {
        let carried = carried_objects(&self.world);
        let mut boxes: Vec<Aabb> = self.sc.static_obstacles.clone();
        boxes.extend(self.world.objects.values().filter(|o| !carried.contains(&o.id)).map(|o| o.bbox()));
        let bp = self.world.base.position;
        let depth = render_depth(&self.cfg.camera, &self.world.base, &boxes, Some(self.env.terrain(bp.x, bp.y)));
        let frame = GroundingFrame {
            camera: &self.cfg.camera,
            depth: &depth,
            action_index: index,
            description,
            base_pose: self.world.base,
        };
        ground_action(&self.sc.grounding, &frame, self.cfg.manipulation.default_approach).map_err(|e| e.to_string())
    }

    fn set_gripper(&mut self, g: Gripper) {
        self.world.gripper = g;
        self.tick(LocomotionCommand::ZERO);
    }

    /// Ground-truth target orientation for the object's grasp point, in the base frame.
    fn true_grasp_orientation(&self, o: &ObjectState) -> Option<UnitQuaternion> {
        let b = &self.world.base;
        let axis = o.axis.map(|a| b.inverse_transform_vector(a));
        let normal = o.normal.map(|n| b.inverse_transform_vector(n));
        solve_orientation_quat(axis, normal, self.cfg.manipulation.default_approach).ok()
    }

    /// Closes the gripper and attaches the nearest admissible object.
    fn grasp(&mut self) -> Option<u32> {
        self.world.gripper = Gripper::Closed;
        let m = self.cfg.manipulation;
        let ee = self.world.ee_world();
        let carried = carried_objects(&self.world);
        let found = self
            .world
            .objects
            .values()
            .filter(|o| !carried.contains(&o.id))
            .filter(|o| o.kind.graspable() || o.articulation.is_some())
            .map(|o| (o.attach_point_world().distance(ee.position), o.id))
            .filter(|(d, _)| *d <= m.attach_tolerance)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, id)| id);
        let admissible = found.filter(|id| {
            let o = &self.world.objects[id];
            self.true_grasp_orientation(o)
                .is_some_and(|q| q.geodesic_distance(self.world.ee_in_base.orientation) <= m.orientation_tolerance)
        });
        if let Some(id) = admissible {
            let o = self.world.objects.get_mut(&id).expect("object exists");
            if o.articulation.is_some() {
                self.world.handle_grasp = Some(id);
            } else {
                o.supported_by = None;
                let rel = ee.inverse().compose(&o.pose);
                self.world.attachment = Some(Attachment { object: id, relative: rel });
            }
        }
        self.tick(LocomotionCommand::ZERO);
        if admissible.is_none() {
            self.set_gripper(Gripper::Open);
        }
        admissible
    }

    /// Opens the gripper; a released object rests on whatever is directly below it.
    fn release(&mut self) -> Option<u32> {
        self.world.gripper = Gripper::Open;
        self.world.handle_grasp = None;
        let mut support = None;
        if let Some(att) = self.world.attachment.take() {
            let released = &self.world.objects[&att.object];
            let rb = released.bbox();
            let c = rb.center();
            let carried_by_it: BTreeSet<u32> = self
                .world
                .objects
                .values()
                .filter(|o| o.supported_by.is_some_and(|(s, _)| s == att.object))
                .map(|o| o.id)
                .collect();
            support = self
                .world
                .objects
                .values()
                .filter(|o| o.id != att.object && !carried_by_it.contains(&o.id))
                .filter(|o| {
                    let b = o.bbox();
                    c.x >= b.min.x && c.x <= b.max.x && c.y >= b.min.y && c.y <= b.max.y && (rb.min.z - b.max.z).abs() <= 0.02
                })
                .map(|o| o.id)
                .next();
            if let Some(sid) = support {
                let rel = self.world.objects[&sid].pose.inverse().compose(&self.world.objects[&att.object].pose);
                self.world.objects.get_mut(&att.object).expect("object exists").supported_by = Some((sid, rel));
            }
        }
        self.tick(LocomotionCommand::ZERO);
        support
    }

    fn stow(&mut self, deadline: f64) {
        self.phase = "stow";
        self.move_ee(stow_pose(), deadline);
    }

    fn approach_and_grasp(&mut self, index: usize, a: &AtomicAction, deadline: f64) -> StepResult<(Pose, Option<u32>)> {
        self.phase = "observe";
        let target = self.ground(index, &a.description)?;
        let back = target.orientation.rotate(Vec3::Z) * self.cfg.manipulation.pre_contact_offset;
        let pre = Pose::new(target.position - back, target.orientation);
        self.phase = "pre_align";
        self.move_ee(pre, deadline);
        self.phase = "approach";
        self.move_ee(target, deadline);
        self.phase = "grasp";
        let got = self.grasp();
        Ok((pre, got))
    }

    fn pick(&mut self, index: usize, a: &AtomicAction, deadline: f64) -> StepResult<()> {
        let (_, got) = self.approach_and_grasp(index, a, deadline)?;
        let want = self.target_object(a);
        let ok = got.is_some() && self.world.attachment.is_some() && (want.is_none() || got == want);
        if ok {
            self.phase = "lift";
            let up = self.world.base.inverse_transform_vector(Vec3::Z) * self.cfg.manipulation.lift_height;
            let cur = self.world.ee_command.unwrap_or(self.world.ee_in_base);
            self.move_ee(Pose::new(cur.position + up, cur.orientation), deadline);
        }
        self.stow(deadline);
        if ok { Ok(()) } else { Err("grasp failed: no admissible object at the gripper".to_string()) }
    }

    fn place(&mut self, index: usize, a: &AtomicAction, deadline: f64) -> StepResult<()> {
        let att = self.world.attachment.ok_or("nothing held")?;
        self.phase = "observe";
        let contact = self.ground(index, &a.description)?;
        let base = self.world.base;
        let ee_at = base.compose(&contact);
        let held = &self.world.objects[&att.object];
        let hypothetical = ObjectState { pose: ee_at.compose(&att.relative), ..held.clone() };
        let lift = ee_at.position.z - hypothetical.bbox().min.z;
        let up = base.inverse_transform_vector(Vec3::Z);
        let target = Pose::new(contact.position + up * lift, contact.orientation);
        let pre = Pose::new(target.position + up * self.cfg.manipulation.pre_contact_offset, target.orientation);
        self.phase = "pre_align";
        self.move_ee(pre, deadline);
        self.phase = "approach";
        self.move_ee(target, deadline);
        self.phase = "release";
        let support = self.release();
        self.phase = "retreat";
        self.move_ee(pre, deadline);
        self.stow(deadline);
        match (support, self.target_object(a)) {
            (Some(s), Some(t)) if s != t => Err(format!("object came to rest on {s}, not {t}")),
            (Some(_), _) => Ok(()),
            (None, _) => Err("released object has no support".to_string()),
        }
    }

    fn push_pull(&mut self, index: usize, a: &AtomicAction, deadline: f64) -> StepResult<()> {
        let (pre, got) = self.approach_and_grasp(index, a, deadline)?;
        let id = match (got, self.world.handle_grasp) {
            (Some(g), Some(h)) if g == h => h,
            _ => {
                self.release();
                self.stow(deadline);
                return Err("no handle in the gripper".to_string());
            }
        };
        let art = self.world.objects[&id].articulation.expect("grasped handle has a joint");
        let d = a.description.to_lowercase();
        let open = !(d.contains("close") || d.contains("push") || d.contains("shut"));
        let goal_value = if open { art.max } else { art.min };
        let goal_world = art.handle_origin + art.axis * goal_value;
        let cur = self.world.ee_command.unwrap_or(self.world.ee_in_base);
        let drive = Pose::new(self.world.base.inverse_transform_point(goal_world), cur.orientation);
        self.phase = "actuate";
        self.move_ee(drive, deadline);
        self.phase = "release";
        self.release();
        self.phase = "retreat";
        let shift = drive.position - cur.position;
        self.move_ee(Pose::new(pre.position + shift, pre.orientation), deadline);
        self.stow(deadline);
        let v = self.world.objects[&id].articulation.map_or(art.value, |a| a.value);
        if (v - goal_value).abs() <= 0.1 * (art.max - art.min).max(1e-9) {
            Ok(())
        } else {
            Err(format!("joint stopped at {v:.3}, wanted {goal_value:.3}"))
        }
    }

    fn drag(&mut self, index: usize, a: &AtomicAction, deadline: f64) -> StepResult<()> {
        let (pre, got) = self.approach_and_grasp(index, a, deadline)?;
        if got.is_none() || self.world.attachment.is_none() {
            self.stow(deadline);
            return Err("grasp failed: no admissible object at the gripper".to_string());
        }
        let waypoint = a.waypoint.ok_or("drag without waypoint")?;
        self.phase = "drag";
        let nav_deadline = self.world.t + self.cfg.timeouts.navigate;
        let moved = self.navigate(waypoint, Facing::Keep, nav_deadline);
        self.phase = "release";
        self.release();
        self.phase = "retreat";
        self.move_ee(pre, self.world.t + self.cfg.timeouts.manipulation);
        self.stow(self.world.t + self.cfg.timeouts.manipulation);
        moved
    }

    fn execute(&mut self, index: usize, a: &AtomicAction) -> StepResult<()> {
        self.action = Some(index);
        let t0 = self.world.t;
        match a.kind {
            ActionKind::Navigate => {
                self.phase = "navigate";
                let waypoint = a.waypoint.ok_or("navigate without waypoint")?;
                let face = a
                    .target_instance
                    .and_then(|n| self.graph.node(n))
                    .map(|n| n.bbox.center())
                    .unwrap_or(waypoint);
                self.navigate(waypoint, Facing::Toward(face), t0 + self.cfg.timeouts.navigate)
            }
            ActionKind::Pick => self.pick(index, a, t0 + self.cfg.timeouts.manipulation),
            ActionKind::Place => self.place(index, a, t0 + self.cfg.timeouts.manipulation),
            ActionKind::PushPull => self.push_pull(index, a, t0 + self.cfg.timeouts.manipulation),
            ActionKind::Drag => self.drag(index, a, t0 + self.cfg.timeouts.manipulation),
        }
    }
}

/// Lookahead point on the route; `seg` tracks the current segment.
fn pursuit_target(route: &[Vec3], seg: &mut usize, p: Vec3, lookahead: f64) -> Vec3 {
    let last = route.len() - 1;
    if last == 0 {
        return route[0];
    }
    let project = |i: usize| {
        let (a, b) = (route[i], route[i + 1]);
        let ab = Vec3::new(b.x - a.x, b.y - a.y, 0.0);
        let l2 = ab.norm_squared();
        let s = if l2 > 0.0 { math::clamp(((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / l2, 0.0, 1.0) } else { 0.0 };
        let q = Vec3::new(a.x + ab.x * s, a.y + ab.y * s, a.z);
        (q.distance_xy(p), s)
    };
    let mut best = (*seg, project(*seg));
    for i in *seg + 1..(*seg + 6).min(last) {
        let r = project(i);
        if r.0 < best.1.0 {
            best = (i, r);
        }
    }
    *seg = best.0;
    let (i, (_, s)) = best;
    let mut remaining = lookahead;
    let (a, b) = (route[i], route[i + 1]);
    let mut from = Vec3::new(a.x + (b.x - a.x) * s, a.y + (b.y - a.y) * s, a.z);
    let mut j = i + 1;
    loop {
        let d = from.distance_xy(route[j]);
        if d >= remaining {
            let t = remaining / d;
            return Vec3::new(from.x + (route[j].x - from.x) * t, from.y + (route[j].y - from.y) * t, from.z);
        }
        remaining -= d;
        from = route[j];
        if j == last {
            return route[last];
        }
        j += 1;
    }
}

/// Runs one episode: perceive, decompose, execute each action in order.
pub fn run_episode(scenario: &Scenario, cfg: &SimConfig, seed: u64, episode: u64) -> Result<EpisodeResult, String> {
    cfg.validate()?;
    let mut r = Runner::new(scenario, cfg, seed, episode)?;
    let _ = monitor_step(&mut r.monitors, &r.world, 0.0);
    r.observe()?;
    let plan = r.sc.planner.plan(&scenario.instruction, &r.graph.summary()).and_then(|p| {
        validate_plan_ids(&p, |id| r.graph.contains(id)).map_err(|e| e.to_string())?;
        Ok(p)
    });
    let mut outcomes = Vec::new();
    let (plan, plan_error) = match plan {
        Ok(p) => (Some(p), None),
        Err(e) => (None, Some(e)),
    };
    if let Some(p) = &plan {
        for (i, a) in p.actions.iter().enumerate() {
            if r.expired() {
                break;
            }
            let start = r.world.t;
            let res = r.execute(i, a);
            outcomes.push(ActionOutcome {
                index: i,
                kind: a.kind,
                success: res.is_ok(),
                error: res.err(),
                start,
                end: r.world.t,
            });
        }
    }
    r.action = None;
    r.phase = "done";

    let subtasks = report(&r.monitors, plan.as_ref());
    let mean = |s: f64| (r.vel_ticks > 0).then(|| s / r.vel_ticks as f64);
    let n_ee = r.ee_err.len();
    let ee_mean = |f: fn(&(f64, f64)) -> f64| (n_ee > 0).then(|| r.ee_err.iter().map(f).sum::<f64>() / n_ee as f64);
    let success = subtasks.overall;
    let metrics = MetricsReport {
        episodes: 1,
        successful_episodes: success as u32,
        overall_success_rate: 0.0,
        e_x: mean(r.vel_err[0]),
        e_y: mean(r.vel_err[1]),
        e_yaw: mean(r.vel_err[2]),
        d_pos: ee_mean(|e| e.0),
        d_ori: ee_mean(|e| e.1),
        e_x_x100: None,
        e_y_x100: None,
        per_kind: subtasks
            .per_kind
            .iter()
            .map(|(k, s)| (*k, RateStats { completed: s.completed, total: s.total }))
            .collect(),
        per_kind_rate: BTreeMap::new(),
    }
    .finish();
    Ok(EpisodeResult {
        scenario: scenario.name.clone(),
        episode,
        seed,
        plan,
        plan_error,
        outcomes,
        monitors: r.monitors,
        subtasks,
        metrics,
        trace: r.trace,
        grid: r.grid,
        final_world: r.world,
    })
}

/// Occupancy grid after the initial scan at the start pose.
pub fn initial_grid(scenario: &Scenario, cfg: &SimConfig) -> Result<OccupancyGrid, String> {
    let mut r = Runner::new(scenario, cfg, scenario.seed, 0)?;
    r.scan();
    Ok(r.grid)
}
