//! Coefficient registries, initial data, time grids and Cameron–Martin
//! controls.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{Field, SpatialGrid};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid coefficients: {0}")]
    Coefficients(String),
    #[error("invalid control: {0}")]
    Control(String),
    #[error("invalid time grid: {0}")]
    TimeGrid(String),
    #[error("initial condition leaves the domain at node {node} (distance {distance:e})")]
    InitialOutside { node: usize, distance: f64 },
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

/// Drift `b: R^d -> R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftSpec {
    Zero,
    Constant { value: Vec<f64> },
    /// `b(u) = A u + c`, `A` given row by row.
    Linear { matrix: Vec<Vec<f64>>, offset: Vec<f64> },
    /// `b_i(u) = offset_i - gain * tanh(u_i)`.
    Tanh { gain: f64, offset: Vec<f64> },
}

/// Diffusion `sigma: R^d -> R^{d x m}`, given row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffusionSpec {
    Zero { noise_dim: usize },
    Constant { matrix: Vec<Vec<f64>> },
    /// `sigma_ij(u) = matrix_ij * (1 + slope * tanh(u_i))`.
    Affine { matrix: Vec<Vec<f64>>, slope: f64 },
}

/// The pair `(b, sigma)` with its Lipschitz constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCoefficients {
    pub drift: DriftSpec,
    pub diffusion: DiffusionSpec,
    /// Declared constant `C` with `|b(u)-b(v)| + |sigma(u)-sigma(v)| <= C|u-v|`;
    /// derived from the registry entries when absent.
    #[serde(default)]
    pub lipschitz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzAudit {
    pub declared: f64,
    pub observed: f64,
    pub pairs: usize,
    pub passed: bool,
}

fn frobenius(rows: &[Vec<f64>]) -> f64 {
    rows.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

impl ModelCoefficients {
    pub fn new(drift: DriftSpec, diffusion: DiffusionSpec) -> Result<Self, ModelError> {
        let c = ModelCoefficients { drift, diffusion, lipschitz: None };
        c.check()?;
        Ok(c)
    }

    pub fn dim(&self) -> Option<usize> {
        match &self.drift {
            DriftSpec::Zero => None,
            DriftSpec::Constant { value } => Some(value.len()),
            DriftSpec::Linear { offset, .. } | DriftSpec::Tanh { offset, .. } => Some(offset.len()),
        }
        .or(match &self.diffusion {
            DiffusionSpec::Zero { .. } => None,
            DiffusionSpec::Constant { matrix } | DiffusionSpec::Affine { matrix, .. } => Some(matrix.len()),
        })
    }

    pub fn noise_dim(&self) -> usize {
        match &self.diffusion {
            DiffusionSpec::Zero { noise_dim } => *noise_dim,
            DiffusionSpec::Constant { matrix } | DiffusionSpec::Affine { matrix, .. } => {
                matrix.first().map_or(0, |r| r.len())
            }
        }
    }

    /// Shape and finiteness checks. `d` is checked against the domain by
    /// [`check_dim`](Self::check_dim).
    pub fn check(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Coefficients(m.into()));
        if self.noise_dim() == 0 {
            return bad("noise dimension m must be at least 1");
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match &self.drift {
            DriftSpec::Zero => {}
            DriftSpec::Constant { value } => {
                if !finite(value) {
                    return bad("drift must be finite");
                }
            }
            DriftSpec::Linear { matrix, offset } => {
                if matrix.len() != offset.len() || matrix.iter().any(|r| r.len() != offset.len() || !finite(r)) {
                    return bad("linear drift needs a square matrix matching the offset");
                }
                if !finite(offset) {
                    return bad("drift must be finite");
                }
            }
            DriftSpec::Tanh { gain, offset } => {
                if !gain.is_finite() || !finite(offset) {
                    return bad("drift must be finite");
                }
            }
        }
        match &self.diffusion {
            DiffusionSpec::Zero { .. } => {}
            DiffusionSpec::Constant { matrix } | DiffusionSpec::Affine { matrix, .. } => {
                let m = self.noise_dim();
                if matrix.iter().any(|r| r.len() != m || !finite(r)) {
                    return bad("diffusion matrix rows must all have length m and be finite");
                }
            }
        }
        if let DiffusionSpec::Affine { slope, .. } = &self.diffusion {
            if !slope.is_finite() {
                return bad("diffusion slope must be finite");
            }
        }
        if let Some(l) = self.lipschitz {
            if !(l.is_finite() && l >= 0.0) {
                return bad("declared Lipschitz constant must be finite and non-negative");
            }
        }
        Ok(())
    }

    pub fn check_dim(&self, d: usize) -> Result<(), ModelError> {
        if let Some(k) = self.dim() {
            if k != d {
                return Err(ModelError::Coefficients(format!("coefficients have d={k}, domain has d={d}")));
            }
        }
        Ok(())
    }

    /// Lipschitz bound implied by the registry entries.
    pub fn derived_lipschitz(&self) -> f64 {
        let b = match &self.drift {
            DriftSpec::Zero | DriftSpec::Constant { .. } => 0.0,
            DriftSpec::Linear { matrix, .. } => frobenius(matrix),
            DriftSpec::Tanh { gain, .. } => gain.abs(),
        };
        let s = match &self.diffusion {
            DiffusionSpec::Zero { .. } | DiffusionSpec::Constant { .. } => 0.0,
            DiffusionSpec::Affine { matrix, slope } => {
                let row_max = matrix.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>()).fold(0.0, f64::max);
                slope.abs() * row_max.sqrt()
            }
        };
        b + s
    }

    pub fn declared_lipschitz(&self) -> f64 {
        self.lipschitz.unwrap_or_else(|| self.derived_lipschitz())
    }

    /// `out = b(u)`.
    pub fn drift_into(&self, u: &[f64], out: &mut [f64]) {
        match &self.drift {
            DriftSpec::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            DriftSpec::Constant { value } => out.copy_from_slice(value),
            DriftSpec::Linear { matrix, offset } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = offset[i] + matrix[i].iter().zip(u).map(|(a, x)| a * x).sum::<f64>();
                }
            }
            DriftSpec::Tanh { gain, offset } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = offset[i] - gain * u[i].tanh();
                }
            }
        }
    }

    /// `out = sigma(u) v` with `v` in `R^m`.
    pub fn diffusion_apply(&self, u: &[f64], v: &[f64], out: &mut [f64]) {
        match &self.diffusion {
            DiffusionSpec::Zero { .. } => out.iter_mut().for_each(|o| *o = 0.0),
            DiffusionSpec::Constant { matrix } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = matrix[i].iter().zip(v).map(|(a, x)| a * x).sum();
                }
            }
            DiffusionSpec::Affine { matrix, slope } => {
                for (i, o) in out.iter_mut().enumerate() {
                    let s = 1.0 + slope * u[i].tanh();
                    *o = s * matrix[i].iter().zip(v).map(|(a, x)| a * x).sum::<f64>();
                }
            }
        }
    }

    /// `sigma(u)` as a row-major `d x m` matrix.
    pub fn diffusion_matrix(&self, u: &[f64]) -> Vec<f64> {
        let d = u.len();
        let m = self.noise_dim();
        let mut out = vec![0.0; d * m];
        let mut e = vec![0.0; m];
        let mut col = vec![0.0; d];
        for k in 0..m {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[k] = 1.0;
            self.diffusion_apply(u, &e, &mut col);
            for i in 0..d {
                out[i * m + k] = col[i];
            }
        }
        out
    }

    /// Checks `|b(u)-b(v)| + |sigma(u)-sigma(v)|_F <= C |u-v|` on random
    /// pairs drawn from `[-scale, scale]^d`.
    pub fn audit_lipschitz(&self, d: usize, pairs: usize, scale: f64, seed: u64) -> LipschitzAudit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let declared = self.declared_lipschitz();
        let mut observed: f64 = 0.0;
        let mut bu = vec![0.0; d];
        let mut bv = vec![0.0; d];
        for _ in 0..pairs {
            let u: Vec<f64> = (0..d).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect();
            let v: Vec<f64> = (0..d).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect();
            let duv = u.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if duv < 1e-12 {
                continue;
            }
            self.drift_into(&u, &mut bu);
            self.drift_into(&v, &mut bv);
            let db = bu.iter().zip(&bv).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let su = self.diffusion_matrix(&u);
            let sv = self.diffusion_matrix(&v);
            let ds = su.iter().zip(&sv).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            observed = observed.max((db + ds) / duv);
        }
        LipschitzAudit { declared, observed, pairs, passed: observed <= declared * (1.0 + 1e-12) + 1e-12 }
    }
}

/// Closed-form initial data `u(0, .)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    Zero,
    /// `amplitude * sin(mode * pi * x)`.
    SineMode { mode: u32, amplitude: Vec<f64> },
    /// `amplitude * 4 x (1 - x)`.
    Bump { amplitude: Vec<f64> },
}

impl InitialCondition {
    pub fn to_field(&self, grid: SpatialGrid) -> Field {
        let d = grid.dim();
        match self {
            InitialCondition::Zero => Field::zeros(grid),
            InitialCondition::SineMode { mode, amplitude } => Field::from_fn(grid, |x| {
                let s = (*mode as f64 * std::f64::consts::PI * x).sin();
                (0..d).map(|i| amplitude.get(i).copied().unwrap_or(0.0) * s).collect()
            }),
            InitialCondition::Bump { amplitude } => Field::from_fn(grid, |x| {
                let s = 4.0 * x * (1.0 - x);
                (0..d).map(|i| amplitude.get(i).copied().unwrap_or(0.0) * s).collect()
            }),
        }
    }
}

/// Uniform time grid `t_k = k T / K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_final: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, steps: usize) -> Result<Self, ModelError> {
        if !(t_final.is_finite() && t_final > 0.0) || steps == 0 {
            return Err(ModelError::TimeGrid(format!("need T > 0 and K >= 1, got T={t_final}, K={steps}")));
        }
        Ok(TimeGrid { t_final, steps })
    }

    /// Finest grid with `dt <= dt_max` whose step count is a multiple of
    /// `multiple_of` (the control grid).
    pub fn fitted(t_final: f64, dt_max: f64, multiple_of: usize) -> Result<Self, ModelError> {
        if !(dt_max.is_finite() && dt_max > 0.0) {
            return Err(ModelError::TimeGrid(format!("dt_max must be positive, got {dt_max}")));
        }
        let q = multiple_of.max(1);
        let blocks = (t_final / (dt_max * q as f64) - 1e-9).ceil().max(1.0) as usize;
        TimeGrid::new(t_final, blocks * q)
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }
}

/// Piecewise-constant control `hdot` on `K` equal steps of `[0, T]`, one
/// `m`-vector per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub t_final: f64,
    pub noise_dim: usize,
    /// Step-major: `hdot[k * m + j]`.
    pub hdot: Vec<f64>,
}

impl Control {
    pub fn new(t_final: f64, noise_dim: usize, hdot: Vec<f64>) -> Result<Self, ModelError> {
        if !(t_final.is_finite() && t_final > 0.0) || noise_dim == 0 {
            return Err(ModelError::Control("need T > 0 and m >= 1".into()));
        }
        if hdot.is_empty() || !hdot.len().is_multiple_of(noise_dim) {
            return Err(ModelError::Control(format!("{} coefficients do not split into m={noise_dim}", hdot.len())));
        }
        if !hdot.iter().all(|v| v.is_finite()) {
            return Err(ModelError::Control("control values must be finite".into()));
        }
        Ok(Control { t_final, noise_dim, hdot })
    }

    pub fn zeros(t_final: f64, steps: usize, noise_dim: usize) -> Self {
        Control { t_final, noise_dim, hdot: vec![0.0; steps * noise_dim] }
    }

    pub fn constant(t_final: f64, steps: usize, value: &[f64]) -> Self {
        let hdot = (0..steps).flat_map(|_| value.iter().copied()).collect();
        Control { t_final, noise_dim: value.len(), hdot }
    }

    /// Samples `f` at step midpoints.
    pub fn from_fn(t_final: f64, steps: usize, noise_dim: usize, f: impl Fn(f64) -> Vec<f64>) -> Self {
        let dt = t_final / steps as f64;
        let mut hdot = Vec::with_capacity(steps * noise_dim);
        for k in 0..steps {
            let v = f((k as f64 + 0.5) * dt);
            assert_eq!(v.len(), noise_dim);
            hdot.extend(v);
        }
        Control { t_final, noise_dim, hdot }
    }

    pub fn steps(&self) -> usize {
        self.hdot.len() / self.noise_dim
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.steps() as f64
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.hdot[k * self.noise_dim..(k + 1) * self.noise_dim]
    }

    /// `sum_k |hdot_k|^2 dt`, exact for piecewise-constant controls.
    pub fn cm_norm_sq(&self) -> f64 {
        self.hdot.iter().map(|v| v * v).sum::<f64>() * self.dt()
    }

    /// Membership in `S_N = { cm_norm_sq <= N }`.
    pub fn in_ball(&self, n: f64) -> bool {
        self.cm_norm_sq() <= n
    }

    pub fn scaled(&self, c: f64) -> Control {
        Control { t_final: self.t_final, noise_dim: self.noise_dim, hdot: self.hdot.iter().map(|v| c * v).collect() }
    }

    pub fn plus(&self, other: &Control) -> Result<Control, ModelError> {
        if self.t_final != other.t_final || self.noise_dim != other.noise_dim || self.hdot.len() != other.hdot.len() {
            return Err(ModelError::Control("controls live on different grids".into()));
        }
        let hdot = self.hdot.iter().zip(&other.hdot).map(|(a, b)| a + b).collect();
        Ok(Control { t_final: self.t_final, noise_dim: self.noise_dim, hdot })
    }

    /// Number of solver steps per control step, if `time` refines this
    /// control's grid.
    pub fn refinement(&self, time: &TimeGrid) -> Result<usize, ModelError> {
        if (self.t_final - time.t_final).abs() > 1e-12 * time.t_final {
            return Err(ModelError::Control(format!("control horizon {} != solver horizon {}", self.t_final, time.t_final)));
        }
        if !time.steps.is_multiple_of(self.steps()) {
            return Err(ModelError::Control(format!(
                "solver steps {} are not a multiple of control steps {}",
                time.steps,
                self.steps()
            )));
        }
        Ok(time.steps / self.steps())
    }
}
