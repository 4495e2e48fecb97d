//! Seeded sampling of locomotion commands, terrain-invariant end-effector
//! targets and per-episode domain randomization.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::geometry::{spherical_to_cartesian, EulerAngles, Pose, SphericalTarget, UnitQuaternion, Vec3};
use crate::math;
use crate::rewards::{EETarget, LocomotionCommand};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SamplingError {
    #[error("range {name} is not ordered or not finite: [{lo}, {hi}]")]
    BadRange { name: &'static str, lo: f64, hi: f64 },
}

/// ChaCha8 stream. Episodes get independent streams of one master seed.
#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng { inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn for_episode(master: u64, episode: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master);
        inner.set_stream(episode);
        SeededRng { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn sample(&mut self, r: Range) -> f64 {
        self.uniform(r.lo, r.hi)
    }

    /// Box–Muller; consumes two draws per call.
    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        let u1 = 1.0 - self.unit();
        let u2 = self.unit();
        mean + sd * math::sqrt(-2.0 * math::ln(u1)) * math::cos(math::TAU * u2)
    }
}

/// Closed interval, serialized as `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl From<[f64; 2]> for Range {
    fn from(a: [f64; 2]) -> Self {
        Range { lo: a[0], hi: a[1] }
    }
}

impl From<Range> for [f64; 2] {
    fn from(r: Range) -> Self {
        [r.lo, r.hi]
    }
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    /// `[lo·π, hi·π]`
    pub fn pi(lo: f64, hi: f64) -> Self {
        Range { lo: lo * math::PI, hi: hi * math::PI }
    }

    pub fn symmetric(h: f64) -> Self {
        Range { lo: -h, hi: h }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn check(&self, name: &'static str) -> Result<(), SamplingError> {
        if self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi {
            Ok(())
        } else {
            Err(SamplingError::BadRange { name, lo: self.lo, hi: self.hi })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Train,
    Eval,
    Roboduet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandRanges {
    pub x: Range,
    pub y: Range,
    pub yaw_rate: Range,
    pub ee_radius: Range,
    pub ee_pitch: Range,
    pub ee_yaw: Range,
    pub ee_roll_angle: Range,
    pub ee_pitch_angle: Range,
    pub ee_yaw_angle: Range,
}

impl CommandRanges {
    pub fn train() -> Self {
        CommandRanges {
            x: Range::new(-1.0, 1.0),
            y: Range::new(-1.0, 1.0),
            yaw_rate: Range::new(-1.0, 1.0),
            ee_radius: Range::new(0.30, 0.65),
            ee_pitch: Range::pi(-0.17, 0.33),
            ee_yaw: Range::pi(-0.33, 0.33),
            ee_roll_angle: Range::pi(-0.50, 0.50),
            ee_pitch_angle: Range::pi(-0.17, 0.50),
            ee_yaw_angle: Range::pi(-0.50, 0.50),
        }
    }

    pub fn eval() -> Self {
        CommandRanges {
            x: Range::new(-1.5, 1.5),
            y: Range::new(0.0, 0.0),
            yaw_rate: Range::new(-1.5, 1.5),
            ee_radius: Range::new(0.20, 0.80),
            ee_pitch: Range::pi(-0.50, 0.50),
            ee_yaw: Range::pi(-0.50, 0.50),
            ee_roll_angle: Range::pi(-0.50, 0.50),
            ee_pitch_angle: Range::pi(-0.50, 0.50),
            ee_yaw_angle: Range::pi(-0.50, 0.50),
        }
    }

    /// Baseline training ranges.
    pub fn roboduet() -> Self {
        CommandRanges {
            x: Range::new(-1.0, 1.0),
            y: Range::new(0.0, 0.0),
            yaw_rate: Range::new(-0.6, 0.6),
            ee_radius: Range::new(0.30, 0.70),
            ee_pitch: Range::pi(-0.45, 0.45),
            ee_yaw: Range::pi(-0.50, 0.50),
            ee_roll_angle: Range::pi(-0.45, 0.45),
            ee_pitch_angle: Range::pi(-0.33, 0.33),
            ee_yaw_angle: Range::pi(-0.42, 0.42),
        }
    }

    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Train => Self::train(),
            Preset::Eval => Self::eval(),
            Preset::Roboduet => Self::roboduet(),
        }
    }

    pub fn named(&self) -> [(&'static str, Range); 9] {
        [
            ("x", self.x),
            ("y", self.y),
            ("yaw_rate", self.yaw_rate),
            ("ee_radius", self.ee_radius),
            ("ee_pitch", self.ee_pitch),
            ("ee_yaw", self.ee_yaw),
            ("ee_roll_angle", self.ee_roll_angle),
            ("ee_pitch_angle", self.ee_pitch_angle),
            ("ee_yaw_angle", self.ee_yaw_angle),
        ]
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        self.named().iter().try_for_each(|(n, r)| r.check(n))
    }
}

pub fn sample_locomotion_command(rng: &mut SeededRng, r: &CommandRanges) -> LocomotionCommand {
    let x = rng.sample(r.x);
    let y = rng.sample(r.y);
    let yaw_rate = rng.sample(r.yaw_rate);
    LocomotionCommand { x, y, yaw_rate }
}

/// Raw draws behind one EE target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EESample {
    pub spherical: SphericalTarget,
    pub orientation: EulerAngles,
}

pub fn sample_ee_components(rng: &mut SeededRng, r: &CommandRanges) -> EESample {
    let radius = rng.sample(r.ee_radius);
    let pitch = rng.sample(r.ee_pitch);
    let yaw = rng.sample(r.ee_yaw);
    let roll_a = rng.sample(r.ee_roll_angle);
    let pitch_a = rng.sample(r.ee_pitch_angle);
    let yaw_a = rng.sample(r.ee_yaw_angle);
    EESample { spherical: SphericalTarget::new(radius, pitch, yaw), orientation: EulerAngles::new(roll_a, pitch_a, yaw_a) }
}

/// Where the sampling sphere sits and how high the base nominally stands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmMount {
    /// Arm base in the base frame.
    pub offset: Vec3,
    /// Base height above terrain when standing.
    pub nominal_height: f64,
}

impl Default for ArmMount {
    fn default() -> Self {
        ArmMount { offset: Vec3::new(0.15, 0.0, 0.10), nominal_height: 0.45 }
    }
}

/// World position of a sampled target. The sphere is centred on the arm
/// base of a level robot standing at nominal height on the terrain under
/// the base, rotated by heading only, so base pitch, roll and height
/// perturbations do not move it.
pub fn ee_target_world(s: &EESample, base: &Pose, mount: &ArmMount, terrain: &dyn Fn(f64, f64) -> f64) -> Vec3 {
    let heading = UnitQuaternion::from_yaw(base.yaw());
    let p = base.position;
    let ground = terrain(p.x, p.y);
    let off = heading.rotate(Vec3::new(mount.offset.x, mount.offset.y, 0.0));
    let center = Vec3::new(p.x + off.x, p.y + off.y, ground + mount.nominal_height + mount.offset.z);
    center + heading.rotate(spherical_to_cartesian(s.spherical))
}

/// Samples a target and expresses it in the actual base frame.
pub fn sample_ee_target(
    rng: &mut SeededRng,
    ranges: &CommandRanges,
    base: &Pose,
    mount: &ArmMount,
    terrain: &dyn Fn(f64, f64) -> f64,
) -> EETarget {
    let s = sample_ee_components(rng, ranges);
    let world = ee_target_world(&s, base, mount, terrain);
    EETarget { position: base.inverse_transform_point(world), orientation: s.orientation }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Replace the nominal value.
    Set,
    Add,
    Scale,
}

impl Method {
    pub fn apply(self, base: f64, sample: f64) -> f64 {
        match self {
            Method::Set => sample,
            Method::Add => base + sample,
            Method::Scale => base * sample,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandEntry {
    pub range: Range,
    pub method: Method,
}

impl RandEntry {
    pub const fn new(lo: f64, hi: f64, method: Method) -> Self {
        RandEntry { range: Range::new(lo, hi), method }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PushConfig {
    pub x: Range,
    pub y: Range,
    pub interval: f64,
    pub jitter: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseResetRanges {
    pub x: Range,
    pub y: Range,
    pub heading: Range,
    pub vx: Range,
    pub vy: Range,
    pub vz: Range,
    pub roll: Range,
    pub pitch: Range,
    pub yaw: Range,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomizationConfig {
    pub friction: RandEntry,
    pub base_mass: RandEntry,
    pub push: PushConfig,
    pub actuator_gains: RandEntry,
    pub ee_mass: RandEntry,
    pub joint_reset: RandEntry,
    pub base_reset: BaseResetRanges,
}

impl Default for RandomizationConfig {
    fn default() -> Self {
        let h = Range::symmetric(0.5);
        RandomizationConfig {
            friction: RandEntry::new(0.4, 2.0, Method::Set),
            base_mass: RandEntry::new(-5.0, 5.0, Method::Add),
            push: PushConfig { x: h, y: h, interval: 5.0, jitter: 1.0, duration: 0.5 },
            actuator_gains: RandEntry::new(0.8, 1.2, Method::Scale),
            ee_mass: RandEntry::new(0.0, 0.2, Method::Add),
            joint_reset: RandEntry::new(0.5, 1.5, Method::Scale),
            base_reset: BaseResetRanges {
                x: h,
                y: h,
                heading: Range::new(-math::PI, math::PI),
                vx: h,
                vy: h,
                vz: h,
                roll: h,
                pitch: h,
                yaw: h,
            },
        }
    }
}

impl RandomizationConfig {
    pub fn validate(&self) -> Result<(), SamplingError> {
        let b = &self.base_reset;
        [
            ("friction", self.friction.range),
            ("base_mass", self.base_mass.range),
            ("push.x", self.push.x),
            ("push.y", self.push.y),
            ("actuator_gains", self.actuator_gains.range),
            ("ee_mass", self.ee_mass.range),
            ("joint_reset", self.joint_reset.range),
            ("base_reset.x", b.x),
            ("base_reset.y", b.y),
            ("base_reset.heading", b.heading),
            ("base_reset.vx", b.vx),
            ("base_reset.vy", b.vy),
            ("base_reset.vz", b.vz),
            ("base_reset.roll", b.roll),
            ("base_reset.pitch", b.pitch),
            ("base_reset.yaw", b.yaw),
        ]
        .iter()
        .try_for_each(|(n, r)| r.check(n))?;
        let p = &self.push;
        if !(p.interval > 0.0 && p.jitter >= 0.0 && p.jitter < p.interval && p.duration > 0.0) {
            return Err(SamplingError::BadRange { name: "push.interval", lo: p.jitter, hi: p.interval });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PushEvent {
    pub time: f64,
    pub duration: f64,
    pub vx: f64,
    pub vy: f64,
}

/// One realized draw per entry. Values are raw samples; [`Realized::apply`]
/// combines them with nominal values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Realized {
    pub value: f64,
    pub method: Method,
}

impl Realized {
    pub fn apply(&self, base: f64) -> f64 {
        self.method.apply(base, self.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseReset {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRandomization {
    pub friction: Realized,
    pub base_mass: Realized,
    pub actuator_gains: Realized,
    pub ee_mass: Realized,
    pub joint_reset: Realized,
    pub base_reset: BaseReset,
    pub pushes: Vec<PushEvent>,
}

fn realize(rng: &mut SeededRng, e: &RandEntry) -> Realized {
    Realized { value: rng.sample(e.range), method: e.method }
}

/// Draws every entry; pushes fire every `interval ± jitter` seconds up to `horizon`.
pub fn sample_episode_randomization(rng: &mut SeededRng, cfg: &RandomizationConfig, horizon: f64) -> EpisodeRandomization {
    let friction = realize(rng, &cfg.friction);
    let base_mass = realize(rng, &cfg.base_mass);
    let actuator_gains = realize(rng, &cfg.actuator_gains);
    let ee_mass = realize(rng, &cfg.ee_mass);
    let joint_reset = realize(rng, &cfg.joint_reset);
    let b = &cfg.base_reset;
    let base_reset = BaseReset {
        x: rng.sample(b.x),
        y: rng.sample(b.y),
        heading: rng.sample(b.heading),
        vx: rng.sample(b.vx),
        vy: rng.sample(b.vy),
        vz: rng.sample(b.vz),
        roll: rng.sample(b.roll),
        pitch: rng.sample(b.pitch),
        yaw: rng.sample(b.yaw),
    };
    let mut pushes = Vec::new();
    let p = &cfg.push;
    let mut k = 1u32;
    loop {
        let time = k as f64 * p.interval + rng.uniform(-p.jitter, p.jitter);
        if time > horizon {
            break;
        }
        pushes.push(PushEvent { time, duration: p.duration, vx: rng.sample(p.x), vy: rng.sample(p.y) });
        k += 1;
    }
    EpisodeRandomization { friction, base_mass, actuator_gains, ee_mass, joint_reset, base_reset, pushes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::quat_from_euler;
    use proptest::prelude::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..8).map({
            let mut r = SeededRng::for_episode(42, 3);
            move |_| r.next_u64()
        }).collect();
        let b: Vec<u64> = (0..8).map({
            let mut r = SeededRng::for_episode(42, 3);
            move |_| r.next_u64()
        }).collect();
        let c: Vec<u64> = (0..8).map({
            let mut r = SeededRng::for_episode(42, 4);
            move |_| r.next_u64()
        }).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn presets_match_tables() {
        let t = CommandRanges::train();
        assert_eq!((t.x.lo, t.x.hi), (-1.0, 1.0));
        assert_eq!((t.ee_radius.lo, t.ee_radius.hi), (0.30, 0.65));
        assert_eq!(t.ee_pitch.lo, -0.17 * core::f64::consts::PI);
        let e = CommandRanges::eval();
        assert_eq!((e.x.lo, e.x.hi), (-1.5, 1.5));
        assert_eq!((e.ee_radius.lo, e.ee_radius.hi), (0.20, 0.80));
        let r = CommandRanges::roboduet();
        assert_eq!((r.y.lo, r.y.hi), (0.0, 0.0));
        for p in [Preset::Train, Preset::Eval, Preset::Roboduet] {
            CommandRanges::preset(p).validate().unwrap();
        }
        // eval contains train wherever its range is not degenerate
        for ((_, tr), (_, ev)) in t.named().iter().zip(e.named().iter()) {
            if ev.width() > 0.0 {
                assert!(ev.lo <= tr.lo && ev.hi >= tr.hi);
            }
        }
    }

    #[test]
    fn degenerate_range_is_constant() {
        let mut rng = SeededRng::new(1);
        let r = CommandRanges::roboduet();
        for _ in 0..1000 {
            assert_eq!(sample_locomotion_command(&mut rng, &r).y, 0.0);
        }
    }

    #[test]
    fn level_base_target_matches_plain_transform() {
        let base = Pose::planar(1.0, 2.0, 0.45, 0.7);
        let mount = ArmMount::default();
        let mut r1 = SeededRng::new(9);
        let t = sample_ee_target(&mut r1, &CommandRanges::train(), &base, &mount, &|_, _| 0.0);
        let mut r2 = SeededRng::new(9);
        let s = sample_ee_components(&mut r2, &CommandRanges::train());
        let direct = mount.offset + spherical_to_cartesian(s.spherical);
        assert!(t.position.distance(direct) < 1e-12);
    }

    #[test]
    fn randomization_defaults_and_ranges() {
        let cfg = RandomizationConfig::default();
        cfg.validate().unwrap();
        let mut rng = SeededRng::new(5);
        for _ in 0..200 {
            let r = sample_episode_randomization(&mut rng, &cfg, 30.0);
            assert!(cfg.friction.range.contains(r.friction.value));
            assert!(r.ee_mass.value >= 0.0 && r.ee_mass.value <= 0.2);
            assert!(r.ee_mass.apply(1.0) >= 1.0);
            assert!(r.pushes.windows(2).all(|w| w[1].time > w[0].time));
            for p in &r.pushes {
                assert!(p.time <= 30.0 && p.vx.abs() <= 0.5 && p.vy.abs() <= 0.5);
            }
            assert!(r.pushes.len() >= 5 && r.pushes.len() <= 6);
        }
        let mid = Realized { value: (0.8 + 1.2) / 2.0, method: Method::Scale };
        assert_eq!(mid.apply(1.0), 1.0);
    }

    #[test]
    fn normal_moments() {
        let mut rng = SeededRng::new(11);
        let n = 20000;
        let xs: Vec<f64> = (0..n).map(|_| rng.normal(1.0, 2.0)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.05);
        assert!((var.sqrt() - 2.0).abs() < 0.05);
    }

    proptest! {
        #[test]
        fn world_height_ignores_pitch_roll_and_bobbing(seed in any::<u64>(), pitch in -0.5..0.5f64, roll in -0.5..0.5f64, dz in -0.1..0.1f64, yaw in -3.0..3.0f64) {
            let terrain = |x: f64, y: f64| 0.2 * (x * 0.7).sin() + 0.1 * y;
            let mount = ArmMount::default();
            let level = Pose::new(Vec3::new(0.4, -1.0, terrain(0.4, -1.0) + 0.45), UnitQuaternion::from_yaw(yaw));
            let tilted = Pose::new(
                level.position + Vec3::new(0.0, 0.0, dz),
                quat_from_euler(EulerAngles::new(roll, pitch, yaw)),
            );
            let a = sample_ee_target(&mut SeededRng::new(seed), &CommandRanges::train(), &level, &mount, &terrain);
            let b = sample_ee_target(&mut SeededRng::new(seed), &CommandRanges::train(), &tilted, &mount, &terrain);
            let wa = level.transform_point(a.position);
            let wb = tilted.transform_point(b.position);
            prop_assert!((wa.z - wb.z).abs() <= 1e-9);
        }
    }
}
