//! Parabolic systems with values in a closed convex set `K`: an explicit
//! finite-difference solver, the convex geometry of `K` (distance to the
//! boundary as an infimum of supporting functionals, with a deterministic
//! nearest-point selection), and numerical checks of the compatibility
//! condition, the weak and strong maximum principles, and the differential
//! inequalities satisfied by `d(u)`.
//!
//! The numerical core is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix the scalar for common use.
// `!(x >= 0.0)` style tests are deliberate: NaN must land on the failing side.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convex;
pub mod expr;
pub mod harness;
pub mod linalg;
pub mod pipeline;
pub mod report;
pub mod scalar;
pub mod scenario;
pub mod solver;
pub mod system;
pub mod viscosity;

pub type ConvexBody64 = convex::ConvexBody<f64>;
pub type ConvexBody32 = convex::ConvexBody<f32>;
pub type Grid64 = solver::Grid<f64>;
pub type Grid32 = solver::Grid<f32>;
pub type Trajectory64 = solver::Trajectory<f64>;
pub type Trajectory32 = solver::Trajectory<f32>;
pub type DistanceField64 = harness::DistanceField<f64>;
pub type Mat64 = linalg::Mat<f64>;
