//! Small-noise asymptotics: the rate functional, its minimization over
//! controls, Monte Carlo event probabilities and their comparison.
//!
//! Distances between paths use `rho^2 = sup_t ||.||_H^2 + int ||.||_V^2 dt`.

mod event;
mod mc;
mod rate;

pub use event::{EventSpec, PathFunctional};
pub use mc::{
    ldp1_probability, ldp_compare, mc_probability, mc_run, trend_summary, weighted_trend, Ldp1Spec, LdpRow, McEstimate, McRun,
    ReplicaRecord, TrendSummary, WeightedRow,
};
pub use rate::{minimize_rate, rate_functional, OptimizerOptions, RateResult, TraceEntry};

use thiserror::Error;

use crate::model::ModelError;
use crate::solver::SolverError;
use crate::space::SpaceError;

#[derive(Debug, Error)]
pub enum LdpError {
    #[error("invalid event: {0}")]
    InvalidEvent(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Space(#[from] SpaceError),
}
