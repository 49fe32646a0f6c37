//! Numerical laboratory for multidimensional stochastic heat equations on
//! `[0, 1]` with oblique reflection in a convex domain.
//!
//! The reflected equation is approximated by penalization: outside the
//! domain the state feels the drift `-n * gamma(u) * |u - pi(u)|`, and the
//! reflected dynamics are recovered as `n -> infinity`. On top of the
//! solvers the crate measures the a-priori estimates that drive the
//! convergence argument, and evaluates the small-noise rate functional
//! together with Monte Carlo probability estimates.
//!
//! Module map:
//!
//! * [`geometry`]: convex domains, projection, normals, oblique fields and
//!   the symmetric matrix field with `a * gamma = n` on the boundary.
//! * [`space`]: grids on `[0, 1]`, vector fields, discrete norms, the
//!   reflection measure, weak-form and variational-inequality residuals.
//! * [`model`]: drift/diffusion registries, initial data, controls.
//! * [`solver`]: the semi-implicit penalized solver (deterministic and
//!   Euler–Maruyama), penalty sweeps and the Cauchy stopping rule.
//! * [`diagnostics`]: estimate reports and the continuity experiment.
//! * [`ldp`]: rate functional, its minimization, Monte Carlo estimates and
//!   the epsilon-sweep comparison.
//! * [`config`] and [`cli`]: the declarative experiment runner.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod geometry;
pub mod ldp;
pub mod model;
pub mod parallel;
pub mod solver;
pub mod space;

pub use geometry::{ConvexDomain, ObliqueField, ObliqueMatrixField};
pub use model::{Control, ModelCoefficients, TimeGrid};
pub use parallel::Execution;
pub use solver::{PenalizedProblem, Trajectory};
pub use space::{Field, SpatialGrid};
