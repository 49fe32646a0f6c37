//! Convex-domain geometry.
//!
//! Everything here is immutable after construction and safe to share between
//! workers.

mod certify;
mod domain;
mod oblique;
pub(crate) mod sampling;

pub use certify::{certify_geometry, CertificationCounts, CheckOutcome, GeometryCertificate};
pub use domain::{BoundaryNormal, ConvexDomain, Halfspace, ACTIVE_TOL, BOUNDARY_TOL, DYKSTRA_MAX_SWEEPS, DYKSTRA_TOL};
pub use oblique::{
    build_oblique_matrix, lions_sznitman_margin, validate_oblique_field, Frame, ObliqueField,
    ObliqueMatrixField, ObliqueReport, ValidationThresholds, Violation,
};
pub use sampling::{boundary_samples, exterior_samples, interior_samples};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("dimension mismatch: domain has d={expected}, point has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite coordinates in point {0:?}")]
    NonFinite(Vec<f64>),
    #[error("alternating projection did not converge after {sweeps} sweeps (residual {residual:e})")]
    ProjectionNotConverged { sweeps: usize, residual: f64 },
    #[error("point {point:?} is not on the boundary (gap {gap:e})")]
    NotOnBoundary { point: Vec<f64>, gap: f64 },
    #[error("invalid oblique field: {0}")]
    InvalidField(String),
    #[error("oblique field failed validation: rho_hat={}, delta_hat={}, worst sample {:?}", .0.rho_hat, .0.delta_hat, .0.violations.first().map(|v| &v.point))]
    ValidationFailed(Box<ObliqueReport>),
    #[error("matrix construction rejected at boundary point {point:?}: smallest eigenvalue {theta:e}")]
    MatrixRejected { point: Vec<f64>, theta: f64 },
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    let n = dot(a, a).sqrt();
    if n.is_finite() && n > 1e-150 {
        return n;
    }
    // Rescale when the squares overflow or underflow.
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * a.iter().map(|x| (x / scale) * (x / scale)).sum::<f64>().sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    let n = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    if n.is_finite() && n > 1e-150 {
        return n;
    }
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff)
}
