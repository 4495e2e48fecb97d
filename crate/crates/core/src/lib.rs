//! Planning, grounding, reward shaping, sampling and evaluation machinery for a
//! legged mobile manipulator.
//!
//! The crate is `no_std` (with `alloc`) and contains no IO. File formats, scenario
//! bundles and the command-line front end live in the `quadmanip` crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod fusion;
pub mod geometry;
pub mod grounding;
pub mod math;
pub mod nav;
pub mod planning;
pub mod rewards;
pub mod sampling;
pub mod scenarios;
pub mod sim;
pub mod world;

pub use geometry::{Aabb, EulerAngles, Pose, RotationMatrix, SphericalTarget, UnitQuaternion, Vec3};
