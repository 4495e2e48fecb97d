//! Whole-body reward terms, contact-timeline bookkeeping, PD conversion and
//! observation assembly.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::{EulerAngles, Pose, Vec3};
use crate::math;

pub const NUM_JOINTS: usize = 18;
pub const NUM_LEG_JOINTS: usize = 12;
pub const NUM_ARM_JOINTS: usize = 6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RewardError {
    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch { what: &'static str, expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
}

/// Joint layout: 12 leg joints (FL, FR, RL, RR × 3) then 6 arm joints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub q: [f64; NUM_JOINTS],
    pub qdot: [f64; NUM_JOINTS],
    pub tau: [f64; NUM_JOINTS],
}

impl Default for JointState {
    fn default() -> Self {
        JointState { q: [0.0; NUM_JOINTS], qdot: [0.0; NUM_JOINTS], tau: [0.0; NUM_JOINTS] }
    }
}

/// Body-frame base velocity command.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LocomotionCommand {
    pub x: f64,
    pub y: f64,
    pub yaw_rate: f64,
}

impl LocomotionCommand {
    pub const ZERO: LocomotionCommand = LocomotionCommand { x: 0.0, y: 0.0, yaw_rate: 0.0 };

    pub fn new(x: f64, y: f64, yaw_rate: f64) -> Self {
        LocomotionCommand { x, y, yaw_rate }
    }

    pub fn is_zero(&self) -> bool {
        self.x == 0.0 && self.y == 0.0 && self.yaw_rate == 0.0
    }
}

/// End-effector target in the base frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EETarget {
    pub position: Vec3,
    pub orientation: EulerAngles,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Leg {
    FL,
    FR,
    RL,
    RR,
}

impl Leg {
    pub const ALL: [Leg; 4] = [Leg::FL, Leg::FR, Leg::RL, Leg::RR];
    pub const SYNC_PAIRS: [(Leg, Leg); 2] = [(Leg::FL, Leg::RR), (Leg::FR, Leg::RL)];
    pub const ASYNC_PAIRS: [(Leg, Leg); 4] = [(Leg::FL, Leg::FR), (Leg::FL, Leg::RL), (Leg::FR, Leg::RR), (Leg::RL, Leg::RR)];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LegTimeline {
    pub in_contact: bool,
    pub air_time: f64,
    pub contact_time: f64,
    /// The two most recent touchdown times, older first.
    pub onsets: [Option<f64>; 2],
}

impl LegTimeline {
    /// Time between the last two touchdowns, inverted.
    pub fn frequency(&self) -> Option<f64> {
        match self.onsets {
            [Some(a), Some(b)] if b > a => Some(1.0 / (b - a)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ContactTimeline {
    pub legs: [LegTimeline; 4],
}

impl ContactTimeline {
    /// All legs in stance with zeroed timers.
    pub fn standing() -> Self {
        let leg = LegTimeline { in_contact: true, ..Default::default() };
        ContactTimeline { legs: [leg; 4] }
    }

    pub fn leg(&self, l: Leg) -> &LegTimeline {
        &self.legs[l.index()]
    }

    /// Advances one tick ending at time `t`. On a state change the new
    /// phase's timer restarts at `dt` and the other resets to zero.
    pub fn update(&mut self, contacts: [bool; 4], t: f64, dt: f64) {
        for (leg, c) in self.legs.iter_mut().zip(contacts) {
            if c != leg.in_contact {
                leg.in_contact = c;
                if c {
                    leg.contact_time = dt;
                    leg.air_time = 0.0;
                    leg.onsets = [leg.onsets[1], Some(t)];
                } else {
                    leg.air_time = dt;
                    leg.contact_time = 0.0;
                }
            } else if c {
                leg.contact_time += dt;
            } else {
                leg.air_time += dt;
            }
        }
    }
}

/// Contact pattern of a trot with the given period in ticks: FL and RR in
/// stance for the first half of each period, FR and RL for the second.
pub fn trot_contacts(tick: u64, period: u64) -> [bool; 4] {
    let first_half = tick % period < period / 2;
    [first_half, !first_half, !first_half, first_half]
}

/// Pace: lateral pairs share a phase.
pub fn pace_contacts(tick: u64, period: u64) -> [bool; 4] {
    let first_half = tick % period < period / 2;
    [first_half, !first_half, first_half, !first_half]
}

fn clip_sq(d: f64) -> f64 {
    math::clamp(d * d, 0.0, 0.04)
}

pub fn sync_term(a: &LegTimeline, b: &LegTimeline) -> f64 {
    math::exp(-(clip_sq(a.air_time - b.air_time) + clip_sq(a.contact_time - b.contact_time)))
}

pub fn async_term(a: &LegTimeline, b: &LegTimeline) -> f64 {
    math::exp(-(clip_sq(a.air_time - b.contact_time) + clip_sq(a.contact_time - b.air_time)))
}

pub fn r_gait(tl: &ContactTimeline) -> f64 {
    let s: f64 = Leg::SYNC_PAIRS.iter().map(|(a, b)| sync_term(tl.leg(*a), tl.leg(*b))).product();
    let a: f64 = Leg::ASYNC_PAIRS.iter().map(|(a, b)| async_term(tl.leg(*a), tl.leg(*b))).product();
    s * a
}

pub fn leg_frequency(leg: &LegTimeline) -> Option<f64> {
    leg.frequency()
}

/// Legs without two recorded touchdowns contribute 1.
pub fn r_freq(tl: &ContactTimeline, f_target: f64) -> f64 {
    tl.legs
        .iter()
        .map(|l| match l.frequency() {
            Some(f) => math::exp(-0.5 * (f - f_target) * (f - f_target)),
            None => 1.0,
        })
        .product()
}

pub fn r_track_xy(cmd: &LocomotionCommand, vx: f64, vy: f64, gamma: f64) -> f64 {
    let (dx, dy) = (cmd.x - vx, cmd.y - vy);
    math::exp(-(dx * dx + dy * dy) / gamma)
}

pub fn r_track_yaw(cmd_yaw_rate: f64, yaw_rate: f64, gamma: f64) -> f64 {
    let d = cmd_yaw_rate - yaw_rate;
    math::exp(-(d * d) / gamma)
}

pub fn r_ee_pos(target: Vec3, actual: Vec3) -> f64 {
    (target - actual).norm()
}

/// Norm of per-axis wrapped Euler differences.
pub fn r_ee_ori(target: EulerAngles, actual: EulerAngles) -> f64 {
    let d = [
        math::wrap_angle(target.roll - actual.roll),
        math::wrap_angle(target.pitch - actual.pitch),
        math::wrap_angle(target.yaw - actual.yaw),
    ];
    math::sqrt(d.iter().map(|v| v * v).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BodyPart {
    Base,
    Arm,
}

impl BodyPart {
    fn range(self) -> core::ops::Range<usize> {
        match self {
            BodyPart::Base => 0..NUM_LEG_JOINTS,
            BodyPart::Arm => NUM_LEG_JOINTS..NUM_JOINTS,
        }
    }
}

pub fn r_torque(tau: &[f64; NUM_JOINTS], part: BodyPart) -> f64 {
    tau[part.range()].iter().map(|t| t * t).sum()
}

pub fn r_acc(qddot: &[f64; NUM_JOINTS], part: BodyPart) -> f64 {
    qddot[part.range()].iter().map(|a| a * a).sum()
}

pub fn r_power(tau: &[f64; NUM_JOINTS], qdot: &[f64; NUM_JOINTS], part: BodyPart) -> f64 {
    part.range().map(|i| tau[i].abs() * qdot[i].abs()).sum()
}

pub fn r_smooth(action: &[f64; NUM_JOINTS], prev: &[f64; NUM_JOINTS]) -> f64 {
    math::sqrt(action.iter().zip(prev).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// One weight per term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageWeights {
    pub track_xy: f64,
    pub track_yaw: f64,
    pub ee_pos: f64,
    pub ee_ori: f64,
    pub gait: f64,
    pub freq: f64,
    pub base_torque: f64,
    pub base_acc: f64,
    pub base_power: f64,
    pub arm_torque: f64,
    pub arm_acc: f64,
    pub arm_power: f64,
    pub smooth: f64,
}

impl StageWeights {
    pub const STAGE1: StageWeights = StageWeights {
        track_xy: 2.75,
        track_yaw: 1.50,
        ee_pos: 0.0,
        ee_ori: 0.0,
        gait: 0.75,
        freq: 12.5,
        base_torque: -2.0e-4,
        base_acc: -2.5e-7,
        base_power: -2.0e-5,
        arm_torque: 0.0,
        arm_acc: 0.0,
        arm_power: 0.0,
        smooth: -0.02,
    };

    pub const STAGE2: StageWeights = StageWeights {
        track_xy: 2.75,
        track_yaw: 1.50,
        ee_pos: -1.20,
        ee_ori: -1.50,
        gait: 0.75,
        freq: 12.5,
        base_torque: -2.0e-4,
        base_acc: -2.0e-7,
        base_power: -2.0e-5,
        arm_torque: -4.0e-4,
        arm_acc: -2.5e-6,
        arm_power: -2.0e-4,
        smooth: -0.02,
    };

    pub fn as_array(&self) -> [f64; 13] {
        [
            self.track_xy,
            self.track_yaw,
            self.ee_pos,
            self.ee_ori,
            self.gait,
            self.freq,
            self.base_torque,
            self.base_acc,
            self.base_power,
            self.arm_torque,
            self.arm_acc,
            self.arm_power,
            self.smooth,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub stage1: StageWeights,
    pub stage2: StageWeights,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights { stage1: StageWeights::STAGE1, stage2: StageWeights::STAGE2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    One,
    Two,
}

impl RewardWeights {
    pub fn stage(&self, s: Stage) -> &StageWeights {
        match s {
            Stage::One => &self.stage1,
            Stage::Two => &self.stage2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub weights: RewardWeights,
    pub gamma_xy: f64,
    pub gamma_yaw: f64,
    pub f_target: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig { weights: RewardWeights::default(), gamma_xy: 0.25, gamma_yaw: 0.25, f_target: 2.0 }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        if !(self.gamma_xy > 0.0 && self.gamma_yaw > 0.0) {
            return Err(RewardError::InvalidConfig("tracking gammas must be positive"));
        }
        if !(self.f_target > 0.0) {
            return Err(RewardError::InvalidConfig("target frequency must be positive"));
        }
        Ok(())
    }
}

/// Unweighted value of every term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    pub track_xy: f64,
    pub track_yaw: f64,
    pub ee_pos: f64,
    pub ee_ori: f64,
    pub gait: f64,
    pub freq: f64,
    pub base_torque: f64,
    pub base_acc: f64,
    pub base_power: f64,
    pub arm_torque: f64,
    pub arm_acc: f64,
    pub arm_power: f64,
    pub smooth: f64,
}

impl RewardTerms {
    pub const NAMES: [&'static str; 13] = [
        "track_xy",
        "track_yaw",
        "ee_pos",
        "ee_ori",
        "gait",
        "freq",
        "base_torque",
        "base_acc",
        "base_power",
        "arm_torque",
        "arm_acc",
        "arm_power",
        "smooth",
    ];

    pub fn as_array(&self) -> [f64; 13] {
        [
            self.track_xy,
            self.track_yaw,
            self.ee_pos,
            self.ee_ori,
            self.gait,
            self.freq,
            self.base_torque,
            self.base_acc,
            self.base_power,
            self.arm_torque,
            self.arm_acc,
            self.arm_power,
            self.smooth,
        ]
    }
}

/// Everything needed to evaluate one tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardInputs {
    pub command: LocomotionCommand,
    pub base_velocity: LocomotionCommand,
    pub ee_target: EETarget,
    pub ee_actual: EETarget,
    pub contacts: ContactTimeline,
    pub joints: JointState,
    pub qddot: [f64; NUM_JOINTS],
    pub action: [f64; NUM_JOINTS],
    pub prev_action: [f64; NUM_JOINTS],
}

pub fn compute_terms(inp: &RewardInputs, cfg: &RewardConfig) -> RewardTerms {
    let j = &inp.joints;
    RewardTerms {
        track_xy: r_track_xy(&inp.command, inp.base_velocity.x, inp.base_velocity.y, cfg.gamma_xy),
        track_yaw: r_track_yaw(inp.command.yaw_rate, inp.base_velocity.yaw_rate, cfg.gamma_yaw),
        ee_pos: r_ee_pos(inp.ee_target.position, inp.ee_actual.position),
        ee_ori: r_ee_ori(inp.ee_target.orientation, inp.ee_actual.orientation),
        gait: r_gait(&inp.contacts),
        freq: r_freq(&inp.contacts, cfg.f_target),
        base_torque: r_torque(&j.tau, BodyPart::Base),
        base_acc: r_acc(&inp.qddot, BodyPart::Base),
        base_power: r_power(&j.tau, &j.qdot, BodyPart::Base),
        arm_torque: r_torque(&j.tau, BodyPart::Arm),
        arm_acc: r_acc(&inp.qddot, BodyPart::Arm),
        arm_power: r_power(&j.tau, &j.qdot, BodyPart::Arm),
        smooth: r_smooth(&inp.action, &inp.prev_action),
    }
}

/// Weighted sum of term values.
pub fn total_reward(stage: Stage, terms: &RewardTerms, weights: &RewardWeights) -> f64 {
    let w = weights.stage(stage).as_array();
    terms.as_array().iter().zip(w).map(|(v, w)| v * w).sum()
}

/// One recorded tick of an offline timeline. Omitted fields read as zero;
/// an omitted EE target means perfect EE tracking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimelineStep {
    #[serde(default)]
    pub command: LocomotionCommand,
    #[serde(default)]
    pub base_velocity: LocomotionCommand,
    #[serde(default)]
    pub ee_target: Option<EETarget>,
    #[serde(default)]
    pub ee_actual: Option<EETarget>,
    /// FL, FR, RL, RR.
    pub contacts: [bool; 4],
    #[serde(default)]
    pub joints: JointState,
    #[serde(default = "zero_joints")]
    pub qddot: [f64; NUM_JOINTS],
    #[serde(default = "zero_joints")]
    pub action: [f64; NUM_JOINTS],
}

fn zero_joints() -> [f64; NUM_JOINTS] {
    [0.0; NUM_JOINTS]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimelineRow {
    pub tick: usize,
    pub t: f64,
    pub terms: RewardTerms,
    pub total_stage1: f64,
    pub total_stage2: f64,
}

/// Evaluates every term tick by tick, starting from all legs in stance.
pub fn evaluate_timeline(steps: &[TimelineStep], dt: f64, cfg: &RewardConfig) -> Vec<TimelineRow> {
    let mut contacts = ContactTimeline::standing();
    let mut prev = [0.0; NUM_JOINTS];
    steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let t = (i + 1) as f64 * dt;
            contacts.update(s.contacts, t, dt);
            let actual = s.ee_actual.or(s.ee_target).unwrap_or_default();
            let inp = RewardInputs {
                command: s.command,
                base_velocity: s.base_velocity,
                ee_target: s.ee_target.unwrap_or(actual),
                ee_actual: actual,
                contacts,
                joints: s.joints,
                qddot: s.qddot,
                action: s.action,
                prev_action: prev,
            };
            prev = s.action;
            let terms = compute_terms(&inp, cfg);
            TimelineRow {
                tick: i,
                t,
                terms,
                total_stage1: total_reward(Stage::One, &terms, &cfg.weights),
                total_stage2: total_reward(Stage::Two, &terms, &cfg.weights),
            }
        })
        .collect()
}

/// Trot at constant forward command with perfect velocity tracking.
pub fn ideal_trot_timeline(ticks: u64, period: u64, speed: f64) -> Vec<TimelineStep> {
    let cmd = LocomotionCommand::new(speed, 0.0, 0.0);
    (0..ticks)
        .map(|k| TimelineStep {
            command: cmd,
            base_velocity: cmd,
            ee_target: None,
            ee_actual: None,
            contacts: trot_contacts(k, period),
            joints: JointState::default(),
            qddot: zero_joints(),
            action: zero_joints(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PdGains {
    pub kp_leg: f64,
    pub kp_arm: f64,
    pub kd: f64,
}

impl Default for PdGains {
    fn default() -> Self {
        PdGains { kp_leg: 20.0, kp_arm: 25.0, kd: 0.5 }
    }
}

impl PdGains {
    pub fn kp(&self) -> [f64; NUM_JOINTS] {
        core::array::from_fn(|i| if i < NUM_LEG_JOINTS { self.kp_leg } else { self.kp_arm })
    }

    pub fn kd(&self) -> [f64; NUM_JOINTS] {
        [self.kd; NUM_JOINTS]
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        if self.kp_leg > 0.0 && self.kp_arm > 0.0 && self.kd > 0.0 {
            Ok(())
        } else {
            Err(RewardError::InvalidConfig("PD gains must be positive"))
        }
    }
}

/// `τ = Kp ⊙ (q_target − q) − Kd ⊙ q̇`
pub fn pd_torque(
    q_target: &[f64; NUM_JOINTS],
    q: &[f64; NUM_JOINTS],
    qdot: &[f64; NUM_JOINTS],
    kp: &[f64; NUM_JOINTS],
    kd: &[f64; NUM_JOINTS],
) -> [f64; NUM_JOINTS] {
    core::array::from_fn(|i| kp[i] * (q_target[i] - q[i]) - kd[i] * qdot[i])
}

/// Actions are offsets from the default configuration.
pub fn apply_action(action: &[f64; NUM_JOINTS], q_default: &[f64; NUM_JOINTS]) -> [f64; NUM_JOINTS] {
    core::array::from_fn(|i| q_default[i] + action[i])
}

/// Square heightmap sampled around the base, values relative to base height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeightmapSpec {
    pub rows: usize,
    pub cols: usize,
    pub spacing: f64,
}

impl Default for HeightmapSpec {
    fn default() -> Self {
        HeightmapSpec { rows: 11, cols: 11, spacing: 0.1 }
    }
}

impl HeightmapSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major samples on a yaw-aligned grid centred on the base.
    pub fn sample(&self, base: &Pose, terrain: &dyn Fn(f64, f64) -> f64) -> Vec<f64> {
        let yaw = base.yaw();
        let (c, s) = (math::cos(yaw), math::sin(yaw));
        let (r0, c0) = ((self.rows as f64 - 1.0) / 2.0, (self.cols as f64 - 1.0) / 2.0);
        let mut out = Vec::with_capacity(self.len());
        for r in 0..self.rows {
            for k in 0..self.cols {
                let fx = (k as f64 - c0) * self.spacing;
                let fy = (r as f64 - r0) * self.spacing;
                let wx = base.position.x + c * fx - s * fy;
                let wy = base.position.y + s * fx + c * fy;
                out.push(terrain(wx, wy) - base.position.z);
            }
        }
        out
    }
}

pub const OBSERVATION_FIXED_LEN: usize = 3 + 6 + 2 * NUM_JOINTS + 3 + NUM_JOINTS;

/// Flat policy input: command (3), EE target (6), joint positions and
/// velocities (36), projected gravity (3), heightmap (rows·cols), previous action (18).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub Vec<f64>);

pub fn assemble_observation(
    command: &LocomotionCommand,
    ee_target: &EETarget,
    joints: &JointState,
    gravity: Vec3,
    heightmap: &[f64],
    prev_action: &[f64; NUM_JOINTS],
    spec: &HeightmapSpec,
) -> Result<Observation, RewardError> {
    if heightmap.len() != spec.len() {
        return Err(RewardError::LengthMismatch { what: "heightmap", expected: spec.len(), got: heightmap.len() });
    }
    let mut v = Vec::with_capacity(OBSERVATION_FIXED_LEN + spec.len());
    v.extend_from_slice(&[command.x, command.y, command.yaw_rate]);
    v.extend_from_slice(&ee_target.position.to_array());
    v.extend_from_slice(&ee_target.orientation.to_array());
    v.extend_from_slice(&joints.q);
    v.extend_from_slice(&joints.qdot);
    v.extend_from_slice(&gravity.to_array());
    v.extend_from_slice(heightmap);
    v.extend_from_slice(prev_action);
    Ok(Observation(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const DT: f64 = 1.0 / 64.0;

    fn run(pattern: fn(u64, u64) -> [bool; 4], ticks: u64, period: u64) -> ContactTimeline {
        let mut tl = ContactTimeline::standing();
        for k in 1..=ticks {
            tl.update(pattern(k, period), k as f64 * DT, DT);
        }
        tl
    }

    #[test]
    fn ideal_trot_is_exact() {
        for ticks in [70, 77, 128, 301] {
            let tl = run(trot_contacts, ticks, 32);
            assert_eq!(r_gait(&tl), 1.0);
            // period 32·2⁻⁶ s = 0.5 s
            for l in Leg::ALL {
                assert_eq!(leg_frequency(tl.leg(l)), Some(2.0));
            }
            assert_eq!(r_freq(&tl, 2.0), 1.0);
        }
    }

    #[test]
    fn timeline_gait_is_one_every_tick() {
        let rows = evaluate_timeline(&ideal_trot_timeline(100, 32, 0.5), 1.0 / 64.0, &RewardConfig::default());
        assert_eq!(rows.len(), 100);
        assert!(rows.iter().all(|r| r.terms.gait == 1.0 && r.terms.track_xy == 1.0));
        // only arm and EE weighted terms separate the stages here
        let r = &rows[99];
        let diff = r.total_stage2 - r.total_stage1;
        let w1 = StageWeights::STAGE1.as_array();
        let w2 = StageWeights::STAGE2.as_array();
        let want: f64 = r.terms.as_array().iter().zip(w1.iter().zip(w2)).map(|(v, (a, b))| v * (b - a)).sum();
        assert_eq!(diff, want);
        assert!(evaluate_timeline(&[], 0.02, &RewardConfig::default()).is_empty());
    }

    #[test]
    fn saturated_sync_pair() {
        let a = LegTimeline { in_contact: false, air_time: 0.5, contact_time: 0.0, onsets: [None; 2] };
        let b = LegTimeline { in_contact: true, air_time: 0.0, contact_time: 0.3, onsets: [None; 2] };
        assert!((sync_term(&a, &b) - 0.0f64.exp() * (-0.08f64).exp()).abs() < 1e-12);
        let anti = LegTimeline { in_contact: true, air_time: 0.0, contact_time: 0.5, onsets: [None; 2] };
        assert_eq!(async_term(&a, &anti), 1.0);
        // plateau beyond 0.2 s
        let c = LegTimeline { air_time: 2.0, ..a };
        assert_eq!(sync_term(&c, &b), sync_term(&a, &b));
    }

    #[test]
    fn pace_saturates_async_product() {
        let mut tl = ContactTimeline::standing();
        let leg = |c: bool, t: f64| LegTimeline {
            in_contact: c,
            air_time: if c { 0.0 } else { t },
            contact_time: if c { t } else { 0.0 },
            onsets: [None; 2],
        };
        // laterals in phase, both diagonals out of phase by more than 0.2 s
        tl.legs = [leg(true, 0.3), leg(false, 0.3), leg(true, 0.3), leg(false, 0.3)];
        let asyncs: f64 = Leg::ASYNC_PAIRS.iter().map(|(a, b)| async_term(tl.leg(*a), tl.leg(*b))).product();
        // FL-FR and RL-RR are anti-phase, FL-RL and FR-RR saturate
        assert!((asyncs - (-0.16f64).exp()).abs() < 1e-12);
        let all_same = ContactTimeline { legs: [leg(true, 0.3); 4] };
        let a2: f64 = Leg::ASYNC_PAIRS.iter().map(|(a, b)| async_term(all_same.leg(*a), all_same.leg(*b))).product();
        assert!((a2 - (-0.32f64).exp()).abs() < 1e-12);
        assert_eq!(Leg::SYNC_PAIRS.iter().map(|(a, b)| sync_term(all_same.leg(*a), all_same.leg(*b))).product::<f64>(), 1.0);
    }

    #[test]
    fn frequency_examples() {
        let mut tl = ContactTimeline::standing();
        tl.legs[0].onsets = [Some(1.0), Some(1.5)];
        assert_eq!(leg_frequency(&tl.legs[0]), Some(2.0));
        tl.legs[1].onsets = [Some(0.0), Some(1.0)];
        tl.legs[2].onsets = [Some(0.0), Some(0.5)];
        tl.legs[3].onsets = [Some(0.25), Some(0.75)];
        assert!((r_freq(&tl, 2.0) - (-0.5f64).exp()).abs() < 1e-12);
        assert_eq!(r_freq(&ContactTimeline::standing(), 2.0), 1.0);
    }

    #[test]
    fn tracking_examples() {
        let cmd = LocomotionCommand::new(0.5, 0.0, 0.0);
        assert_eq!(r_track_xy(&cmd, 0.5, 0.0, 0.25), 1.0);
        assert!((r_track_xy(&cmd, 0.0, 0.0, 0.25) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((r_track_yaw(1.0, 1.0 - 2.0f64.sqrt() * 0.5, 0.25) - (-2.0f64).exp()).abs() < 1e-12);
        assert_eq!(r_track_yaw(0.3, 0.1, 0.25), r_track_yaw(0.1, 0.3, 0.25));
        assert_eq!(r_ee_pos(Vec3::new(0.3, 0.4, 0.0), Vec3::ZERO), 0.5);
        let eps = 1e-3;
        let a = EulerAngles::new(math::PI - eps, 0.0, 0.0);
        let b = EulerAngles::new(-math::PI + eps, 0.0, 0.0);
        assert!((r_ee_ori(a, b) - 2.0 * eps).abs() < 1e-12);
    }

    #[test]
    fn regularizers() {
        let z = [0.0; NUM_JOINTS];
        assert_eq!(r_torque(&z, BodyPart::Base) + r_acc(&z, BodyPart::Arm) + r_power(&z, &z, BodyPart::Base) + r_smooth(&z, &z), 0.0);
        let mut ones = [0.0; NUM_JOINTS];
        ones[..12].fill(1.0);
        assert_eq!(r_torque(&ones, BodyPart::Base), 12.0);
        assert_eq!(r_torque(&ones, BodyPart::Arm), 0.0);
        let mut tau = z;
        let mut qd = z;
        tau[0] = 2.0;
        qd[0] = 3.0;
        assert_eq!(r_power(&tau, &qd, BodyPart::Base), 6.0);
    }

    fn perfect_inputs() -> RewardInputs {
        let mut contacts = ContactTimeline::standing();
        for k in 1..=100u64 {
            contacts.update(trot_contacts(k, 32), k as f64 * DT, DT);
        }
        let ee = EETarget { position: Vec3::new(0.4, 0.0, 0.3), orientation: EulerAngles::new(0.0, 0.0, 0.0) };
        RewardInputs {
            command: LocomotionCommand::new(0.5, 0.1, 0.2),
            base_velocity: LocomotionCommand::new(0.5, 0.1, 0.2),
            ee_target: ee,
            ee_actual: ee,
            contacts,
            joints: JointState::default(),
            qddot: [0.0; NUM_JOINTS],
            action: [0.0; NUM_JOINTS],
            prev_action: [0.0; NUM_JOINTS],
        }
    }

    #[test]
    fn stage_totals() {
        let cfg = RewardConfig::default();
        let terms = compute_terms(&perfect_inputs(), &cfg);
        let t1 = total_reward(Stage::One, &terms, &cfg.weights);
        assert!((t1 - 17.5).abs() < 1e-12);
        let mut arm = perfect_inputs();
        for i in 12..18 {
            arm.joints.tau[i] = 3.0;
            arm.joints.qdot[i] = 1.5;
            arm.qddot[i] = 40.0;
        }
        arm.ee_actual.position = Vec3::new(0.5, 0.0, 0.3);
        let arm_terms = compute_terms(&arm, &cfg);
        assert_eq!(total_reward(Stage::One, &arm_terms, &cfg.weights), t1);
        let t2 = total_reward(Stage::Two, &arm_terms, &cfg.weights);
        let extra = -1.2 * arm_terms.ee_pos - 4.0e-4 * arm_terms.arm_torque - 2.5e-6 * arm_terms.arm_acc
            - 2.0e-4 * arm_terms.arm_power;
        assert!((t2 - (t1 + extra)).abs() < 1e-12);
    }

    #[test]
    fn pd_examples() {
        let g = PdGains::default();
        let q = [0.3; NUM_JOINTS];
        let z = [0.0; NUM_JOINTS];
        assert_eq!(pd_torque(&q, &q, &z, &g.kp(), &g.kd()), z);
        let mut tgt = z;
        tgt[0] = 1.0;
        assert_eq!(pd_torque(&tgt, &z, &z, &g.kp(), &g.kd())[0], 20.0);
        assert_eq!(pd_torque(&z, &z, &[1.0; NUM_JOINTS], &g.kp(), &g.kd())[17], -0.5);
        assert_eq!(apply_action(&z, &q), q);
    }

    #[test]
    fn observation_layout() {
        let spec = HeightmapSpec::default();
        let ee = EETarget { position: Vec3::ZERO, orientation: EulerAngles::new(0.0, 0.0, 0.0) };
        let obs = assemble_observation(&LocomotionCommand::ZERO, &ee, &JointState::default(), Vec3::ZERO, &[0.0; 121], &[0.0; 18], &spec).unwrap();
        assert_eq!(obs.0.len(), 187);
        assert!(obs.0.iter().all(|v| *v == 0.0));
        let mut prev = [0.0; NUM_JOINTS];
        prev[17] = 7.0;
        let obs = assemble_observation(&LocomotionCommand::new(1.0, 2.0, 3.0), &ee, &JointState::default(), Vec3::new(0.0, 0.0, -1.0), &[0.5; 121], &prev, &spec).unwrap();
        assert_eq!(&obs.0[..3], &[1.0, 2.0, 3.0]);
        assert_eq!(obs.0[47], -1.0);
        assert_eq!(obs.0[48], 0.5);
        assert_eq!(obs.0[186], 7.0);
        assert!(matches!(
            assemble_observation(&LocomotionCommand::ZERO, &ee, &JointState::default(), Vec3::ZERO, &[0.0; 10], &[0.0; 18], &spec),
            Err(RewardError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn heightmap_relative_to_base() {
        let spec = HeightmapSpec::default();
        let base = Pose::planar(1.0, 2.0, 0.45, 0.3);
        let m = spec.sample(&base, &|x, _| if x > 1.0 { 0.1 } else { 0.0 });
        assert_eq!(m.len(), 121);
        assert!(m.iter().all(|v| *v == -0.45 || *v == 0.1 - 0.45));
    }

    proptest! {
        #[test]
        fn exp_terms_in_unit_interval(a in proptest::array::uniform4((0.0..3.0f64, 0.0..3.0f64, any::<bool>()))) {
            let mut tl = ContactTimeline::standing();
            for (leg, (air, cont, c)) in tl.legs.iter_mut().zip(a) {
                leg.air_time = air;
                leg.contact_time = cont;
                leg.in_contact = c;
            }
            let g = r_gait(&tl);
            prop_assert!(g > (-0.08f64 * 6.0).exp() - 1e-15 && g <= 1.0);
        }

        #[test]
        fn totals_are_linear(scale in -3.0..3.0f64) {
            let cfg = RewardConfig::default();
            let base = compute_terms(&perfect_inputs(), &cfg);
            let mut bumped = base;
            bumped.smooth += scale;
            let d = total_reward(Stage::Two, &bumped, &cfg.weights) - total_reward(Stage::Two, &base, &cfg.weights);
            prop_assert!((d - (-0.02 * scale)).abs() < 1e-12);
        }

        #[test]
        fn trot_frequency_recovered(half in 2u64..40) {
            let period = 2 * half;
            let tl = run(trot_contacts, 5 * period, period);
            for l in Leg::ALL {
                prop_assert_eq!(leg_frequency(tl.leg(l)), Some(64.0 / period as f64));
            }
        }
    }
}
