//! Built-in scenarios. The bundled scenario files describe the same worlds.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{Aabb, Pose, Vec3};
use crate::grounding::{GroundingTarget, ScriptedGroundingOracle};
use crate::planning::{ActionKind, GoalCondition, ScriptedPlanner, ScriptedStep, SubtaskMonitor, TargetRef};
use crate::sim::{GridSpec, Scenario};
use crate::world::{Articulation, ObjectKind, ObjectState};

pub const CUP: u32 = 1;
pub const CART: u32 = 2;
pub const CABINET: u32 = 3;

/// Four walls enclosing `[0, w] × [0, h]`.
pub fn room_walls(w: f64, h: f64) -> Vec<Aabb> {
    let t = 0.1;
    let z = 1.0;
    vec![
        Aabb::new(Vec3::new(-t, -t, 0.0), Vec3::new(w + t, 0.0, z)),
        Aabb::new(Vec3::new(-t, h, 0.0), Vec3::new(w + t, h + t, z)),
        Aabb::new(Vec3::new(-t, 0.0, 0.0), Vec3::new(0.0, h, z)),
        Aabb::new(Vec3::new(w, 0.0, 0.0), Vec3::new(w + t, h, z)),
    ]
}

fn step(kind: ActionKind, target: Option<&str>, waypoint: Option<Vec3>, description: &str) -> ScriptedStep {
    ScriptedStep {
        kind,
        target: target.map(|l| TargetRef::Label(l.to_string())),
        waypoint,
        description: description.to_string(),
    }
}

fn planner(instruction: &str, steps: Vec<ScriptedStep>) -> ScriptedPlanner {
    let mut plans = BTreeMap::new();
    plans.insert(instruction.to_string(), steps);
    ScriptedPlanner { plans }
}

fn cup() -> ObjectState {
    ObjectState {
        attach_point: Vec3::new(0.0, 0.0, 0.05),
        normal: Some(Vec3::Z),
        ..ObjectState::new(CUP, "cup", ObjectKind::Rigid, Pose::from_translation(Vec3::new(3.75, 1.0, 0.55)), Vec3::new(0.04, 0.04, 0.05))
    }
}

fn shelf() -> Aabb {
    Aabb::from_center_half_extents(Vec3::new(4.0, 1.0, 0.25), Vec3::new(0.3, 0.4, 0.25))
}

fn cup_contact() -> Vec3 {
    Vec3::new(3.75, 1.0, 0.60)
}

fn monitor(name: &str, kind: ActionKind, condition: GoalCondition) -> SubtaskMonitor {
    SubtaskMonitor::new(name, kind, condition)
}

fn scenario(name: &str, instruction: &str, steps: Vec<ScriptedStep>) -> Scenario {
    Scenario {
        name: name.to_string(),
        heightmap: None,
        static_obstacles: room_walls(8.0, 6.0),
        objects: Vec::new(),
        robot_start: Pose::planar(1.0, 1.0, 0.0, 0.0),
        instruction: instruction.to_string(),
        planner: planner(instruction, steps),
        grounding: ScriptedGroundingOracle::default(),
        detections: None,
        monitors: Vec::new(),
        horizon: 120.0,
        seed: 7,
        grid: GridSpec::default(),
    }
}

/// Walk to a shelf and pick up a cup: one object, two monitors.
pub fn minimal() -> Scenario {
    let instruction = "pick up the cup on the shelf";
    let mut sc = scenario(
        "minimal",
        instruction,
        vec![
            step(ActionKind::Navigate, Some("cup"), Some(Vec3::new(3.25, 1.0, 0.0)), "go to the cup on the shelf"),
            step(ActionKind::Pick, Some("cup"), None, "pick up the cup"),
        ],
    );
    sc.static_obstacles.push(shelf());
    sc.objects = vec![cup()];
    sc.grounding.targets.insert(1, GroundingTarget { contact: cup_contact(), axis: None, normal: Some(Vec3::Z) });
    sc.monitors = vec![
        monitor("reach shelf", ActionKind::Navigate, GoalCondition::RobotNear { point: Vec3::new(3.75, 1.0, 0.0), radius: 0.7 }),
        monitor("hold cup", ActionKind::Pick, GoalCondition::Attached { object: CUP }),
    ];
    sc.horizon = 60.0;
    sc
}

/// Fetch a cup, load it onto a cart, drag the cart and leave.
pub fn cart_delivery() -> Scenario {
    let instruction = "put the cup on the cart and move the cart to the corner";
    let mut sc = scenario(
        "cart_delivery",
        instruction,
        vec![
            step(ActionKind::Navigate, Some("cup"), Some(Vec3::new(3.25, 1.0, 0.0)), "go to the cup on the shelf"),
            step(ActionKind::Pick, Some("cup"), None, "pick up the cup"),
            step(ActionKind::Navigate, Some("cart"), Some(Vec3::new(2.0, 4.3, 0.0)), "go to the cart handle"),
            step(ActionKind::Place, Some("cart"), None, "place the cup on the cart"),
            step(ActionKind::Drag, Some("cart"), Some(Vec3::new(4.5, 4.3, 0.0)), "drag the cart to the corner"),
            step(ActionKind::Navigate, None, Some(Vec3::new(6.5, 2.0, 0.0)), "go to the exit"),
        ],
    );
    sc.static_obstacles.push(shelf());
    let cart = ObjectState {
        attach_point: Vec3::new(0.0, 0.25, 0.15),
        axis: Some(Vec3::X),
        normal: Some(Vec3::Y),
        ..ObjectState::new(CART, "cart", ObjectKind::Draggable, Pose::from_translation(Vec3::new(2.0, 3.5, 0.2)), Vec3::new(0.3, 0.25, 0.2))
    };
    sc.objects = vec![cup(), cart];
    let t = &mut sc.grounding.targets;
    t.insert(1, GroundingTarget { contact: cup_contact(), axis: None, normal: Some(Vec3::Z) });
    t.insert(3, GroundingTarget { contact: Vec3::new(2.0, 3.5, 0.40), axis: None, normal: Some(Vec3::Z) });
    t.insert(4, GroundingTarget { contact: Vec3::new(2.0, 3.75, 0.35), axis: Some(Vec3::X), normal: Some(Vec3::Y) });
    sc.monitors = vec![
        monitor("reach shelf", ActionKind::Navigate, GoalCondition::RobotNear { point: Vec3::new(3.75, 1.0, 0.0), radius: 0.7 }),
        monitor("hold cup", ActionKind::Pick, GoalCondition::Attached { object: CUP }),
        monitor("reach cart", ActionKind::Navigate, GoalCondition::RobotNear { point: Vec3::new(2.0, 4.3, 0.0), radius: 0.3 }),
        monitor("cup on cart", ActionKind::Place, GoalCondition::RelativePose { object: CUP, reference: CART, max_distance: 0.3 }),
        monitor("cart in corner", ActionKind::Drag, GoalCondition::ObjectNear { object: CART, point: Vec3::new(4.5, 3.5, 0.2), radius: 0.5 }),
        monitor("reach exit", ActionKind::Navigate, GoalCondition::RobotNear { point: Vec3::new(6.5, 2.0, 0.0), radius: 0.3 }),
    ];
    sc.horizon = 180.0;
    sc
}

/// [`cart_delivery`] with the pick contact shifted sideways by `offset` metres.
pub fn cart_delivery_offset(offset: f64) -> Scenario {
    let mut sc = cart_delivery();
    sc.name = String::from("cart_delivery_offset");
    if let Some(t) = sc.grounding.targets.get_mut(&1) {
        t.contact.y += offset;
    }
    sc
}

/// Open a drawer, then walk to the door: three subtasks.
pub fn cabinet() -> Scenario {
    let instruction = "open the drawer and go to the door";
    let mut sc = scenario(
        "cabinet",
        instruction,
        vec![
            step(ActionKind::Navigate, Some("drawer"), Some(Vec3::new(2.4, 2.0, 0.0)), "go to the drawer"),
            step(ActionKind::PushPull, Some("drawer"), None, "pull the drawer open"),
            step(ActionKind::Navigate, None, Some(Vec3::new(1.0, 3.5, 0.0)), "walk to the door"),
        ],
    );
    let handle = Vec3::new(3.05, 2.0, 0.35);
    let drawer = ObjectState {
        articulation: Some(Articulation { value: 0.0, min: 0.0, max: 0.25, axis: -Vec3::X, handle_origin: handle }),
        axis: Some(Vec3::Z),
        normal: Some(-Vec3::X),
        ..ObjectState::new(CABINET, "drawer", ObjectKind::Articulated, Pose::from_translation(Vec3::new(3.3, 2.0, 0.3)), Vec3::new(0.25, 0.4, 0.3))
    };
    sc.objects = vec![drawer];
    sc.grounding.targets.insert(1, GroundingTarget { contact: handle, axis: Some(Vec3::Z), normal: Some(-Vec3::X) });
    sc.monitors = vec![
        monitor("reach drawer", ActionKind::Navigate, GoalCondition::RobotNear { point: Vec3::new(2.4, 2.0, 0.0), radius: 0.3 }),
        monitor("drawer open", ActionKind::PushPull, GoalCondition::JointOpen { object: CABINET, threshold: 0.2 }),
        monitor("at door", ActionKind::Navigate, GoalCondition::RobotNear { point: Vec3::new(1.0, 3.5, 0.0), radius: 0.3 }),
    ];
    sc.horizon = 120.0;
    sc
}

/// No walls, no objects; a single navigate step.
pub fn empty_map() -> Scenario {
    let instruction = "walk forward";
    let mut sc = scenario(
        "empty_map",
        instruction,
        vec![step(ActionKind::Navigate, None, Some(Vec3::new(2.0, 1.0, 0.0)), "walk one metre forward")],
    );
    sc.static_obstacles.clear();
    sc.monitors =
        vec![monitor("arrive", ActionKind::Navigate, GoalCondition::RobotNear { point: Vec3::new(2.0, 1.0, 0.0), radius: 0.3 })];
    sc.horizon = 30.0;
    sc
}

/// Every built-in scenario by name.
pub fn all() -> Vec<Scenario> {
    vec![minimal(), cart_delivery(), cabinet(), empty_map()]
}
