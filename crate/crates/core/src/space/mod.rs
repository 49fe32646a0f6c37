//! Spatial discretization of `[0, 1]` with homogeneous Dirichlet ends.
//!
//! A [`Field`] stores a `d`-vector at each of the `J` interior nodes
//! `x_j = (j + 1) dx`, `dx = 1 / (J + 1)`. Values are point-major so that the
//! `d` components of one node are contiguous.

mod io;
mod measure;
mod test_fn;
mod tridiag;
mod weak;

pub use io::{
    read_field_csv, read_trajectory_dir, write_field_csv, write_json, write_table_csv, write_trajectory_dir, StoredTrajectory,
    TrajectoryIndex,
};
pub use measure::ReflectionMeasure;
pub use test_fn::TestFunction;
pub use tridiag::Tridiagonal;
pub use weak::{variational_inequality_check, weak_form_residual, Probe};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("grid needs at least 3 interior points, got {0}")]
    GridTooSmall(usize),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("non-finite value at node {node}, component {component}")]
    NonFinite { node: usize, component: usize },
    #[error("probe {probe} leaves the domain at node {node} (distance {distance:e})")]
    ProbeOutsideDomain { probe: usize, node: usize, distance: f64 },
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("parse: {0}")]
    Parse(String),
}

/// `J` interior nodes of `[0, 1]` carrying `d`-vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpatialGrid {
    interior: usize,
    dim: usize,
}

impl SpatialGrid {
    pub fn new(interior: usize, dim: usize) -> Result<Self, SpaceError> {
        if interior < 3 {
            return Err(SpaceError::GridTooSmall(interior));
        }
        if dim == 0 {
            return Err(SpaceError::GridMismatch("vector dimension must be positive".into()));
        }
        Ok(SpatialGrid { interior, dim })
    }

    pub fn interior(&self) -> usize {
        self.interior
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dx(&self) -> f64 {
        1.0 / (self.interior + 1) as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        (j + 1) as f64 * self.dx()
    }

    pub fn len(&self) -> usize {
        self.interior * self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A `d`-vector valued function sampled on the interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: SpatialGrid,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: SpatialGrid) -> Self {
        Field { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_values(grid: SpatialGrid, values: Vec<f64>) -> Result<Self, SpaceError> {
        if values.len() != grid.len() {
            return Err(SpaceError::GridMismatch(format!("expected {} values, got {}", grid.len(), values.len())));
        }
        let f = Field { grid, values };
        f.check_finite()?;
        Ok(f)
    }

    /// Samples `f(x)` (a `d`-vector) at every node.
    pub fn from_fn(grid: SpatialGrid, f: impl Fn(f64) -> Vec<f64>) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.interior() {
            let v = f(grid.x(j));
            assert_eq!(v.len(), grid.dim(), "closure returned wrong dimension");
            values.extend(v);
        }
        Field { grid, values }
    }

    pub fn grid(&self) -> SpatialGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn point(&self, j: usize) -> &[f64] {
        let d = self.grid.dim();
        &self.values[j * d..(j + 1) * d]
    }

    pub fn point_mut(&mut self, j: usize) -> &mut [f64] {
        let d = self.grid.dim();
        &mut self.values[j * d..(j + 1) * d]
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.grid.dim())
    }

    pub fn check_finite(&self) -> Result<(), SpaceError> {
        let d = self.grid.dim();
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(k) => Err(SpaceError::NonFinite { node: k / d, component: k % d }),
            None => Ok(()),
        }
    }

    pub fn same_grid(&self, other: &Field) -> Result<(), SpaceError> {
        if self.grid != other.grid {
            return Err(SpaceError::GridMismatch(format!("{:?} vs {:?}", self.grid, other.grid)));
        }
        Ok(())
    }

    /// `self - other`.
    pub fn sub(&self, other: &Field) -> Result<Field, SpaceError> {
        self.same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Field { grid: self.grid, values })
    }

    pub fn scaled(&self, c: f64) -> Field {
        Field { grid: self.grid, values: self.values.iter().map(|v| c * v).collect() }
    }

    /// `<f, g>_H` with the rectangle rule.
    pub fn inner(&self, other: &Field) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        self.grid.dx() * self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn h_norm_sq(&self) -> f64 {
        self.inner(self)
    }

    pub fn h_norm(&self) -> f64 {
        self.h_norm_sq().sqrt()
    }

    /// `sum_j |(f_{j+1} - f_j) / dx|^2 dx`, including both differences
    /// against the zero boundary values.
    pub fn v_norm_sq(&self) -> f64 {
        let d = self.grid.dim();
        let dx = self.grid.dx();
        let n = self.grid.interior();
        let mut s = 0.0;
        for j in 0..=n {
            for i in 0..d {
                let right = if j < n { self.values[j * d + i] } else { 0.0 };
                let left = if j > 0 { self.values[(j - 1) * d + i] } else { 0.0 };
                let g = right - left;
                s += g * g;
            }
        }
        s / dx
    }

    pub fn v_norm(&self) -> f64 {
        self.v_norm_sq().sqrt()
    }

    /// `|| Delta_h f ||_H^2`.
    pub fn h2_norm_sq(&self) -> f64 {
        laplacian_h_norm_sq(self.grid, &self.values)
    }

    pub fn h2_norm(&self) -> f64 {
        self.h2_norm_sq().sqrt()
    }

    /// `dx * sum_j |f_j|` with the Euclidean norm in `R^d`.
    pub fn l1_norm(&self) -> f64 {
        self.grid.dx() * self.points().map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt()).sum::<f64>()
    }

    /// `max_j max_i |f_{i,j}|`.
    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    }
}

/// Three-point Laplacian with zero ghost values.
pub fn discrete_laplacian(f: &Field) -> Field {
    let mut out = Field::zeros(f.grid);
    laplacian_into(f.grid, &f.values, &mut out.values);
    out
}

pub(crate) fn laplacian_into(grid: SpatialGrid, f: &[f64], out: &mut [f64]) {
    let d = grid.dim();
    let n = grid.interior();
    let inv = 1.0 / (grid.dx() * grid.dx());
    for j in 0..n {
        for i in 0..d {
            let c = f[j * d + i];
            let l = if j > 0 { f[(j - 1) * d + i] } else { 0.0 };
            let r = if j + 1 < n { f[(j + 1) * d + i] } else { 0.0 };
            out[j * d + i] = (l - 2.0 * c + r) * inv;
        }
    }
}

fn laplacian_h_norm_sq(grid: SpatialGrid, f: &[f64]) -> f64 {
    let d = grid.dim();
    let n = grid.interior();
    let inv = 1.0 / (grid.dx() * grid.dx());
    let mut s = 0.0;
    for j in 0..n {
        for i in 0..d {
            let c = f[j * d + i];
            let l = if j > 0 { f[(j - 1) * d + i] } else { 0.0 };
            let r = if j + 1 < n { f[(j + 1) * d + i] } else { 0.0 };
            let v = (l - 2.0 * c + r) * inv;
            s += v * v;
        }
    }
    s * grid.dx()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn sine(j: usize) -> Field {
        let g = SpatialGrid::new(j, 1).unwrap();
        Field::from_fn(g, |x| vec![(PI * x).sin()])
    }

    #[test]
    fn zero_field_norms() {
        let f = Field::zeros(SpatialGrid::new(7, 2).unwrap());
        assert_eq!(f.h_norm(), 0.0);
        assert_eq!(f.v_norm(), 0.0);
        assert_eq!(f.h2_norm(), 0.0);
        assert_eq!(f.l1_norm(), 0.0);
        assert_eq!(f.linf_norm(), 0.0);
        assert_eq!(discrete_laplacian(&f), f);
    }

    #[test]
    fn sine_eigenpair() {
        let f = sine(31);
        let dx = f.grid().dx();
        let lam = -(2.0 / (dx * dx)) * (1.0 - (PI * dx).cos());
        let lf = discrete_laplacian(&f);
        for (a, b) in lf.values().iter().zip(f.values()) {
            assert!((a - lam * b).abs() < 1e-10);
        }
    }

    #[test]
    fn spike_stencil() {
        let g = SpatialGrid::new(5, 1).unwrap();
        let mut f = Field::zeros(g);
        f.values_mut()[2] = 1.0;
        let inv = 1.0 / (g.dx() * g.dx());
        assert_eq!(discrete_laplacian(&f).values(), &[0.0, inv, -2.0 * inv, inv, 0.0]);
    }

    #[test]
    fn sine_norms() {
        let f = sine(127);
        assert!((f.h_norm_sq() - 0.5).abs() < 1e-3);
        let v2 = f.v_norm_sq();
        assert!((v2 / (PI * PI / 2.0) - 1.0).abs() < 0.01, "{v2}");
    }

    #[test]
    fn grid_too_small() {
        assert!(matches!(SpatialGrid::new(2, 1), Err(SpaceError::GridTooSmall(2))));
    }

    fn random_field(j: usize, d: usize) -> impl Strategy<Value = Field> {
        proptest::collection::vec(-3.0f64..3.0, j * d)
            .prop_map(move |v| Field::from_values(SpatialGrid::new(j, d).unwrap(), v).unwrap())
    }

    proptest! {
        #[test]
        fn laplacian_symmetric_and_summation_by_parts(
            (f, g) in (3usize..40, 1usize..4).prop_flat_map(|(j, d)| (random_field(j, d), random_field(j, d)))
        ) {
            let lf = discrete_laplacian(&f);
            let lg = discrete_laplacian(&g);
            let scale = 1.0 + lf.h_norm() * g.h_norm() + f.h_norm() * lg.h_norm();
            prop_assert!((lf.inner(&g) - f.inner(&lg)).abs() <= 1e-12 * scale);
            let sbp = lf.inner(&f) + f.v_norm_sq();
            prop_assert!(sbp.abs() <= 1e-10 * (1.0 + f.v_norm_sq()));
        }

        #[test]
        fn norm_ordering_scalar_fields(f in (3usize..60).prop_flat_map(|j| random_field(j, 1))) {
            prop_assert!(f.l1_norm() <= f.h_norm() + 1e-14);
            prop_assert!(f.h_norm() <= f.linf_norm() + 1e-14);
        }

        #[test]
        fn norm_ordering_vector_fields(f in (3usize..60, 2usize..4).prop_flat_map(|(j, d)| random_field(j, d))) {
            // The component-wise sup norm only dominates up to sqrt(d).
            let d = f.grid().dim() as f64;
            prop_assert!(f.l1_norm() <= f.h_norm() + 1e-14);
            prop_assert!(f.h_norm() <= d.sqrt() * f.linf_norm() + 1e-14);
        }
    }
}
