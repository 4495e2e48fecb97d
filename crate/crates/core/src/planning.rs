//! Instruction decomposition into atomic actions, plan validation and
//! latched subtask monitoring.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::fusion::{GraphSummary, InstanceGraph};
use crate::geometry::Vec3;
use crate::world::WorldState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Navigate,
    Pick,
    Place,
    PushPull,
    Drag,
}

impl ActionKind {
    pub const ALL: [ActionKind; 5] =
        [ActionKind::Navigate, ActionKind::Pick, ActionKind::Place, ActionKind::PushPull, ActionKind::Drag];

    pub fn name(self) -> &'static str {
        match self {
            ActionKind::Navigate => "navigate",
            ActionKind::Pick => "pick",
            ActionKind::Place => "place",
            ActionKind::PushPull => "push_pull",
            ActionKind::Drag => "drag",
        }
    }

    pub fn needs_waypoint(self) -> bool {
        matches!(self, ActionKind::Navigate | ActionKind::Drag)
    }

    pub fn needs_target(self) -> bool {
        matches!(self, ActionKind::Pick | ActionKind::Place | ActionKind::PushPull)
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicAction {
    pub kind: ActionKind,
    pub target_instance: Option<u32>,
    pub waypoint: Option<Vec3>,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPlan {
    pub instruction: String,
    pub actions: Vec<AtomicAction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanViolation {
    EmptyPlan,
    MissingWaypoint,
    MissingTarget,
    UnknownInstance(u32),
    EmptyDescription,
}

impl fmt::Display for PlanViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanViolation::EmptyPlan => f.write_str("plan has no actions"),
            PlanViolation::MissingWaypoint => f.write_str("missing waypoint"),
            PlanViolation::MissingTarget => f.write_str("missing target instance"),
            PlanViolation::UnknownInstance(id) => write!(f, "unknown instance {id}"),
            PlanViolation::EmptyDescription => f.write_str("empty description"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvalidPlan {
    /// Index of the offending action; `None` for plan-level problems.
    pub action: Option<usize>,
    pub violation: PlanViolation,
}

impl fmt::Display for InvalidPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.action {
            Some(i) => write!(f, "action {i}: {}", self.violation),
            None => write!(f, "{}", self.violation),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanningError {
    #[error("planner oracle failed: {0}")]
    OracleFailure(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(InvalidPlan),
    #[error("condition references unknown object {0}")]
    UnknownObject(u32),
    #[error("invalid condition: {0}")]
    InvalidCondition(&'static str),
}

/// Checks per-kind field requirements and that every referenced id exists.
pub fn validate_plan(plan: &TaskPlan, graph: &InstanceGraph) -> Result<(), InvalidPlan> {
    validate_plan_ids(plan, |id| graph.contains(id))
}

pub fn validate_plan_ids(plan: &TaskPlan, exists: impl Fn(u32) -> bool) -> Result<(), InvalidPlan> {
    if plan.actions.is_empty() {
        return Err(InvalidPlan { action: None, violation: PlanViolation::EmptyPlan });
    }
    for (i, a) in plan.actions.iter().enumerate() {
        let fail = |violation| Err(InvalidPlan { action: Some(i), violation });
        if a.kind.needs_waypoint() && a.waypoint.is_none() {
            return fail(PlanViolation::MissingWaypoint);
        }
        if a.kind.needs_target() && a.target_instance.is_none() {
            return fail(PlanViolation::MissingTarget);
        }
        if let Some(id) = a.target_instance {
            if !exists(id) {
                return fail(PlanViolation::UnknownInstance(id));
            }
        }
        if a.description.trim().is_empty() {
            return fail(PlanViolation::EmptyDescription);
        }
    }
    Ok(())
}

pub trait PlannerOracle {
    fn plan(&self, instruction: &str, graph: &GraphSummary) -> Result<TaskPlan, String>;
}

/// Queries the oracle and validates its plan.
pub fn decompose(oracle: &dyn PlannerOracle, instruction: &str, graph: &InstanceGraph) -> Result<TaskPlan, PlanningError> {
    let plan = oracle.plan(instruction, &graph.summary()).map_err(PlanningError::OracleFailure)?;
    validate_plan(&plan, graph).map_err(PlanningError::InvalidPlan)?;
    Ok(plan)
}

/// Reference to a graph node by id or by label (lowest matching id).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetRef {
    Id(u32),
    Label(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedStep {
    pub kind: ActionKind,
    #[serde(default)]
    pub target: Option<TargetRef>,
    #[serde(default)]
    pub waypoint: Option<Vec3>,
    pub description: String,
}

/// Fixture-backed planner: instruction text to a fixed step list.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptedPlanner {
    pub plans: BTreeMap<String, Vec<ScriptedStep>>,
}

impl PlannerOracle for ScriptedPlanner {
    fn plan(&self, instruction: &str, graph: &GraphSummary) -> Result<TaskPlan, String> {
        let key = instruction.trim();
        if key.is_empty() {
            return Err("empty instruction".to_string());
        }
        let steps = self.plans.get(key).ok_or_else(|| alloc::format!("no plan for instruction {key:?}"))?;
        let mut actions = Vec::with_capacity(steps.len());
        for s in steps {
            let node = match &s.target {
                None => None,
                Some(TargetRef::Id(id)) => Some((*id, graph.get(*id).map(|n| n.center))),
                Some(TargetRef::Label(l)) => {
                    let n = graph.find_label(l).ok_or_else(|| alloc::format!("no instance labelled {l:?}"))?;
                    Some((n.id, Some(n.center)))
                }
            };
            let waypoint = match (s.waypoint, s.kind) {
                (Some(w), _) => Some(w),
                (None, ActionKind::Navigate) => node.and_then(|(_, c)| c),
                (None, _) => None,
            };
            actions.push(AtomicAction {
                kind: s.kind,
                target_instance: node.map(|(id, _)| id),
                waypoint,
                description: s.description.clone(),
            });
        }
        Ok(TaskPlan { instruction: key.to_string(), actions })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GoalCondition {
    RobotNear { point: Vec3, radius: f64 },
    ObjectNear { object: u32, point: Vec3, radius: f64 },
    RelativePose { object: u32, reference: u32, max_distance: f64 },
    Attached { object: u32 },
    Detached { object: u32 },
    JointOpen { object: u32, threshold: f64 },
    JointClosed { object: u32, threshold: f64 },
}

impl GoalCondition {
    pub fn validate(&self) -> Result<(), PlanningError> {
        let v = match self {
            GoalCondition::RobotNear { radius, .. } | GoalCondition::ObjectNear { radius, .. } => *radius,
            GoalCondition::RelativePose { max_distance, .. } => *max_distance,
            GoalCondition::JointOpen { threshold, .. } | GoalCondition::JointClosed { threshold, .. } => *threshold,
            GoalCondition::Attached { .. } | GoalCondition::Detached { .. } => 1.0,
        };
        if v > 0.0 {
            Ok(())
        } else {
            Err(PlanningError::InvalidCondition("radius or threshold must be positive"))
        }
    }

    /// Object ids the condition reads.
    /// Referenced object ids with the field naming each.
    pub fn objects(&self) -> Vec<(&'static str, u32)> {
        match self {
            GoalCondition::RobotNear { .. } => Vec::new(),
            GoalCondition::RelativePose { object, reference, .. } => alloc::vec![("object", *object), ("reference", *reference)],
            GoalCondition::ObjectNear { object, .. }
            | GoalCondition::Attached { object }
            | GoalCondition::Detached { object }
            | GoalCondition::JointOpen { object, .. }
            | GoalCondition::JointClosed { object, .. } => alloc::vec![("object", *object)],
        }
    }

    /// Planar distance for the robot, 3D for objects. A relative-pose goal
    /// also requires the object to be out of the gripper.
    pub fn holds(&self, w: &WorldState) -> Result<bool, PlanningError> {
        let obj = |id: u32| w.object(id).ok_or(PlanningError::UnknownObject(id));
        let joint = |id: u32| {
            obj(id)?.articulation.map(|a| a.value).ok_or(PlanningError::InvalidCondition("object has no joint"))
        };
        Ok(match self {
            GoalCondition::RobotNear { point, radius } => w.base.position.distance_xy(*point) <= *radius,
            GoalCondition::ObjectNear { object, point, radius } => obj(*object)?.pose.position.distance(*point) <= *radius,
            GoalCondition::RelativePose { object, reference, max_distance } => {
                let d = obj(*object)?.pose.position.distance(obj(*reference)?.pose.position);
                d <= *max_distance && !w.is_attached(*object)
            }
            GoalCondition::Attached { object } => {
                obj(*object)?;
                w.is_attached(*object) || w.handle_grasp == Some(*object)
            }
            GoalCondition::Detached { object } => {
                obj(*object)?;
                !w.is_attached(*object) && w.handle_grasp != Some(*object)
            }
            GoalCondition::JointOpen { object, threshold } => joint(*object)? >= *threshold,
            GoalCondition::JointClosed { object, threshold } => joint(*object)? <= *threshold,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskMonitor {
    pub name: String,
    /// Action category this monitor is reported under.
    pub kind: ActionKind,
    pub condition: GoalCondition,
    #[serde(default)]
    pub completed: bool,
    #[serde(default)]
    pub completion_time: Option<f64>,
}

impl SubtaskMonitor {
    pub fn new(name: impl Into<String>, kind: ActionKind, condition: GoalCondition) -> Self {
        SubtaskMonitor { name: name.into(), kind, condition, completed: false, completion_time: None }
    }
}

/// Latches every unmet monitor whose condition holds now. Nothing changes
/// when any condition references a missing object.
pub fn monitor_step(monitors: &mut [SubtaskMonitor], world: &WorldState, t: f64) -> Result<(), PlanningError> {
    let mut hits = Vec::with_capacity(monitors.len());
    for m in monitors.iter() {
        hits.push(!m.completed && m.condition.holds(world)?);
    }
    for (m, hit) in monitors.iter_mut().zip(hits) {
        if hit {
            m.completed = true;
            m.completion_time = Some(t);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KindStats {
    /// Actions of this kind in the plan.
    pub planned: u32,
    pub completed: u32,
    pub total: u32,
}

impl KindStats {
    pub fn rate(&self) -> Option<f64> {
        (self.total > 0).then(|| self.completed as f64 / self.total as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskReport {
    pub per_kind: BTreeMap<ActionKind, KindStats>,
    pub overall: bool,
    pub completion_times: BTreeMap<String, Option<f64>>,
}

pub fn report(monitors: &[SubtaskMonitor], plan: Option<&TaskPlan>) -> SubtaskReport {
    let mut per_kind: BTreeMap<ActionKind, KindStats> = BTreeMap::new();
    for m in monitors {
        let s = per_kind.entry(m.kind).or_default();
        s.total += 1;
        s.completed += m.completed as u32;
    }
    if let Some(p) = plan {
        for a in &p.actions {
            per_kind.entry(a.kind).or_default().planned += 1;
        }
    }
    SubtaskReport {
        per_kind,
        overall: monitors.iter().all(|m| m.completed),
        completion_times: monitors.iter().map(|m| (m.name.clone(), m.completion_time)).collect(),
    }
}
