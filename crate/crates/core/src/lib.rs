//! Variational solver and property checks for the quasilinear Schrödinger
//! equation `−Δu − uΔ(u²) = k(x)|u|^{q−2}u − h(x)|u|^{s−2}u` in R^N.
//!
//! The substitution `u = f(v)` turns the quasilinear energy `J` into the
//! semilinear `Φ(v) = J(f(v))`. Radial critical points of `Φ` are computed on a
//! finite-volume grid; [`geometry`] certifies that `Φ` is negative on small
//! spheres of finite-dimensional subspaces and [`verify`] checks the analytic
//! properties the construction relies on.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod problem;
pub mod report;
pub mod rng;
pub mod solve;
pub mod transform;
pub mod verify;

pub use energy::{EnergyBreakdown, EnergyModel};
pub use error::{Error, Result};
pub use grid::{make_grid, Boundary, Field, RadialGrid};
pub use problem::{Coefficient, CoefficientKind, ProblemSpec};
pub use solve::{SolveOptions, SolveReport};
pub use transform::TransformEvaluator;
