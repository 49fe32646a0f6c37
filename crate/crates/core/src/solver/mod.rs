//! Semi-implicit penalized solvers.
//!
//! One step of size `dt` solves
//!
//! ```text
//! (I - dt Delta_h) u^{k+1} = u^k + dt b(u^k) + dt sigma(u^k) hdot_k
//!                            + sqrt(eps) sigma(u^k) dB_k
//!                            - dt n gamma(u^k) |u^k - pi(u^k)|
//! ```
//!
//! node by node, with one tridiagonal solve per component. Everything but the
//! Laplacian is evaluated at the pre-step state. The deterministic skeleton
//! and the stochastic equation share this routine; with `eps = 0` the noise
//! term is skipped entirely, so both paths produce identical bits.

mod stochastic;
mod sweep;

pub use stochastic::{replica_seed, sample_brownian, solve_penalized_spde, NoisePath, ReplicaPlan, GENERATOR_ID};
pub use sweep::{penalty_sweep, solve_skeleton, PenaltySweep, SkeletonSolution, SweepPlan, SweepRow};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ConvexDomain, GeometryError, ObliqueField};
use crate::model::{Control, ModelCoefficients, ModelError, TimeGrid};
use crate::space::{Field, ReflectionMeasure, SpaceError, SpatialGrid, Tridiagonal};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("time step {dt:e} exceeds the explicit penalty bound 1/(2n) = {bound:e} for n = {n_pen}")]
    UnstableStep { dt: f64, n_pen: f64, bound: f64 },
    #[error("non-finite state after step {step}")]
    BlowUp { step: usize },
    #[error("penalty must be positive and finite, got {0}")]
    InvalidPenalty(f64),
    #[error("noise intensity must be non-negative and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("snapshot stride must be at least 1")]
    InvalidStride,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// Everything that defines a penalized run except the driving data.
#[derive(Debug, Clone, PartialEq)]
pub struct PenalizedProblem {
    pub coeffs: ModelCoefficients,
    pub domain: ConvexDomain,
    pub gamma: ObliqueField,
    pub grid: SpatialGrid,
    pub time: TimeGrid,
    pub n_pen: f64,
    pub stride: usize,
}

impl PenalizedProblem {
    pub fn with_penalty(&self, n_pen: f64) -> Self {
        PenalizedProblem { n_pen, ..self.clone() }
    }

    pub fn with_time(&self, time: TimeGrid) -> Self {
        PenalizedProblem { time, ..self.clone() }
    }

    /// Largest admissible step for the configured penalty.
    pub fn dt_bound(&self) -> f64 {
        1.0 / (2.0 * self.n_pen)
    }

    fn check(&self) -> Result<(), SolverError> {
        if !(self.n_pen.is_finite() && self.n_pen > 0.0) {
            return Err(SolverError::InvalidPenalty(self.n_pen));
        }
        if self.stride == 0 {
            return Err(SolverError::InvalidStride);
        }
        self.domain.validate()?;
        self.gamma.check(self.domain.dim())?;
        self.coeffs.check()?;
        self.coeffs.check_dim(self.domain.dim())?;
        if self.grid.dim() != self.domain.dim() {
            return Err(SolverError::Mismatch(format!(
                "grid carries d={}, domain has d={}",
                self.grid.dim(),
                self.domain.dim()
            )));
        }
        let dt = self.time.dt();
        let bound = self.dt_bound();
        if dt > bound * (1.0 + 1e-12) {
            return Err(SolverError::UnstableStep { dt, n_pen: self.n_pen, bound });
        }
        Ok(())
    }
}

/// Per-state norms recorded at every solver step, so diagnostics do not
/// depend on the snapshot stride.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepNorms {
    /// `||u||_H^2`
    pub h_sq: f64,
    /// `||u||_V^2`
    pub v_sq: f64,
    /// `||Delta_h u||_H^2`
    pub h2_sq: f64,
    /// `||u - pi(u)||_H`
    pub pen_h: f64,
    /// `||u - pi(u)||_{L^inf}`, component-wise maximum
    pub pen_linf: f64,
    /// `||u - pi(u)||_{L^1}`
    pub pen_l1: f64,
}

/// Scratch space for one pass over a state.
pub(crate) struct Scan {
    pub pen: Vec<f64>,
    pub gamma: Vec<f64>,
    proj: Vec<f64>,
}

impl Scan {
    pub(crate) fn new(grid: SpatialGrid) -> Self {
        Scan { pen: vec![0.0; grid.interior()], gamma: vec![0.0; grid.len()], proj: vec![0.0; grid.dim()] }
    }
}

/// Projects every node, fills the penetration depths and reflection
/// directions in `scan`, and returns the state's norms.
pub(crate) fn scan_state(
    u: &Field,
    domain: &ConvexDomain,
    gamma: &ObliqueField,
    scan: &mut Scan,
) -> Result<StepNorms, GeometryError> {
    let grid = u.grid();
    let d = grid.dim();
    let dx = grid.dx();
    let mut pen_sq = 0.0;
    let mut pen_l1 = 0.0;
    let mut pen_linf: f64 = 0.0;
    for (j, p) in u.points().enumerate() {
        domain.project_into(p, &mut scan.proj)?;
        let mut depth_sq = 0.0;
        for (a, b) in p.iter().zip(&scan.proj) {
            let e = a - b;
            depth_sq += e * e;
            pen_linf = pen_linf.max(e.abs());
        }
        let depth = depth_sq.sqrt();
        scan.pen[j] = depth;
        let g = &mut scan.gamma[j * d..(j + 1) * d];
        if depth > 0.0 {
            let n = domain.outward_normal(&scan.proj)?;
            gamma.direction_into(&scan.proj, &n.normal, g);
        } else {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        pen_sq += depth_sq;
        pen_l1 += depth;
    }
    Ok(StepNorms {
        h_sq: u.h_norm_sq(),
        v_sq: u.v_norm_sq(),
        h2_sq: u.h2_norm_sq(),
        pen_h: (dx * pen_sq).sqrt(),
        pen_linf,
        pen_l1: dx * pen_l1,
    })
}

/// Recomputes per-state norms from stored fields.
pub fn recompute_step_norms(
    fields: &[Field],
    domain: &ConvexDomain,
    gamma: &ObliqueField,
) -> Result<Vec<StepNorms>, GeometryError> {
    let Some(first) = fields.first() else { return Ok(Vec::new()) };
    let mut scan = Scan::new(first.grid());
    fields.iter().map(|f| scan_state(f, domain, gamma, &mut scan)).collect()
}

/// Solution of a penalized run: stored snapshots, the reflection measure,
/// and norms at every solver step.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: SpatialGrid,
    pub time: TimeGrid,
    pub stride: usize,
    pub n_pen: f64,
    pub domain: ConvexDomain,
    pub gamma: ObliqueField,
    /// Solver step index of each snapshot; always starts at 0 and ends at K.
    pub snapshot_steps: Vec<usize>,
    pub snapshots: Vec<Field>,
    pub measure: ReflectionMeasure,
    /// Norms of `u(t_k)` for `k = 0..=K`.
    pub step_norms: Vec<StepNorms>,
}

impl Trajectory {
    pub fn dt(&self) -> f64 {
        self.time.dt()
    }

    pub fn initial(&self) -> &Field {
        &self.snapshots[0]
    }

    pub fn terminal(&self) -> &Field {
        self.snapshots.last().expect("trajectory has snapshots")
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        self.snapshot_steps.iter().map(|&k| self.time.time(k)).collect()
    }

    /// True when every solver step is stored.
    pub fn is_dense(&self) -> bool {
        self.snapshot_steps.len() == self.time.steps + 1
    }

    /// Rebuilds a dense trajectory (one snapshot per step) from stored
    /// fields. Norms and the reflection measure are replayed with the same
    /// arithmetic as the solver, so they match the original run exactly.
    pub fn replay(
        snapshots: Vec<Field>,
        time: TimeGrid,
        n_pen: f64,
        domain: ConvexDomain,
        gamma: ObliqueField,
    ) -> Result<Trajectory, SolverError> {
        if snapshots.len() != time.steps + 1 {
            return Err(SolverError::Mismatch(format!(
                "replay needs every step: {} snapshots for {} steps",
                snapshots.len(),
                time.steps
            )));
        }
        let grid = snapshots[0].grid();
        for f in &snapshots {
            f.same_grid(&snapshots[0])?;
        }
        let dt = time.dt();
        let dx = grid.dx();
        let mut scan = Scan::new(grid);
        let mut measure = ReflectionMeasure::new(grid);
        let mut step_norms = Vec::with_capacity(snapshots.len());
        for (k, u) in snapshots.iter().enumerate() {
            step_norms.push(scan_state(u, &domain, &gamma, &mut scan)?);
            if k == time.steps {
                break;
            }
            measure.open_interval();
            let d = grid.dim();
            for j in 0..grid.interior() {
                let depth = scan.pen[j];
                if depth > 0.0 {
                    let push = dt * n_pen * depth;
                    measure.add(j, &scan.gamma[j * d..(j + 1) * d], push * dx);
                }
            }
        }
        Ok(Trajectory {
            grid,
            time,
            stride: 1,
            n_pen,
            domain,
            gamma,
            snapshot_steps: (0..=time.steps).collect(),
            snapshots,
            measure,
            step_norms,
        })
    }

    pub fn same_discretization(&self, other: &Trajectory) -> Result<(), SolverError> {
        if self.grid != other.grid || self.time != other.time || self.snapshot_steps != other.snapshot_steps {
            return Err(SolverError::Mismatch("trajectories use different grids, time steps or strides".into()));
        }
        Ok(())
    }
}

/// Driving data for one run.
#[derive(Debug, Clone, Copy, Default)]
pub struct Drive<'a> {
    pub control: Option<&'a Control>,
    pub noise: Option<(f64, &'a NoisePath)>,
}

fn check_initial(problem: &PenalizedProblem, u0: &Field) -> Result<(), SolverError> {
    if u0.grid() != problem.grid {
        return Err(SolverError::Mismatch("initial field grid differs from the problem grid".into()));
    }
    u0.check_finite()?;
    for (j, p) in u0.points().enumerate() {
        let dist = problem.domain.distance(p)?;
        if dist > 1e-12 {
            return Err(ModelError::InitialOutside { node: j, distance: dist }.into());
        }
    }
    Ok(())
}

/// Runs the penalized scheme under `drive`.
pub fn integrate(problem: &PenalizedProblem, u0: &Field, drive: Drive<'_>) -> Result<Trajectory, SolverError> {
    problem.check()?;
    check_initial(problem, u0)?;
    let grid = problem.grid;
    let d = grid.dim();
    let m = problem.coeffs.noise_dim();
    let steps = problem.time.steps;
    let dt = problem.time.dt();
    let dx = grid.dx();
    let n_pen = problem.n_pen;

    let refine = match drive.control {
        Some(c) => {
            if c.noise_dim != m {
                return Err(SolverError::Mismatch(format!("control has m={}, coefficients have m={m}", c.noise_dim)));
            }
            c.refinement(&problem.time)?
        }
        None => 1,
    };
    let noise = match drive.noise {
        Some((eps, path)) => {
            if !(eps.is_finite() && eps >= 0.0) {
                return Err(SolverError::InvalidEpsilon(eps));
            }
            if path.steps != steps || path.noise_dim != m || (path.dt - dt).abs() > 1e-12 * dt {
                return Err(SolverError::Mismatch(format!(
                    "noise path has K={}, m={}, dt={}; solver has K={steps}, m={m}, dt={dt}",
                    path.steps, path.noise_dim, path.dt
                )));
            }
            (eps > 0.0).then(|| (eps.sqrt(), path))
        }
        None => None,
    };

    let tri = Tridiagonal::implicit_heat(grid.interior(), dt / (dx * dx));
    let mut u = u0.clone();
    let mut rhs = vec![0.0; grid.len()];
    let mut scan = Scan::new(grid);
    let mut tmp = vec![0.0; d];
    let mut measure = ReflectionMeasure::new(grid);
    let mut snapshots = vec![u0.clone()];
    let mut snapshot_steps = vec![0];
    let mut step_norms = Vec::with_capacity(steps + 1);
    measure.open_interval();

    for k in 0..steps {
        step_norms.push(scan_state(&u, &problem.domain, &problem.gamma, &mut scan)?);
        rhs.copy_from_slice(u.values());
        let hdot = drive.control.map(|c| c.value(k / refine));
        let db = noise.map(|(s, path)| (s, path.increment(k)));
        for j in 0..grid.interior() {
            let p = u.point(j);
            let r = &mut rhs[j * d..(j + 1) * d];
            problem.coeffs.drift_into(p, &mut tmp);
            for i in 0..d {
                r[i] += dt * tmp[i];
            }
            if let Some(h) = hdot {
                problem.coeffs.diffusion_apply(p, h, &mut tmp);
                for i in 0..d {
                    r[i] += dt * tmp[i];
                }
            }
            if let Some((s, inc)) = db {
                problem.coeffs.diffusion_apply(p, inc, &mut tmp);
                for i in 0..d {
                    r[i] += s * tmp[i];
                }
            }
            let depth = scan.pen[j];
            if depth > 0.0 {
                let g = &scan.gamma[j * d..(j + 1) * d];
                let push = dt * n_pen * depth;
                for i in 0..d {
                    r[i] -= push * g[i];
                }
                measure.add(j, g, push * dx);
            }
        }
        for i in 0..d {
            tri.solve_strided(&mut rhs, i, d);
        }
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::BlowUp { step: k + 1 });
        }
        u.values_mut().copy_from_slice(&rhs);
        if (k + 1) % problem.stride == 0 || k + 1 == steps {
            snapshots.push(u.clone());
            snapshot_steps.push(k + 1);
            if k + 1 < steps {
                measure.open_interval();
            }
        }
    }
    step_norms.push(scan_state(&u, &problem.domain, &problem.gamma, &mut scan)?);

    Ok(Trajectory {
        grid,
        time: problem.time,
        stride: problem.stride,
        n_pen,
        domain: problem.domain.clone(),
        gamma: problem.gamma.clone(),
        snapshot_steps,
        snapshots,
        measure,
        step_norms,
    })
}

/// Penalized skeleton equation driven by a Cameron–Martin control.
pub fn solve_penalized_skeleton(problem: &PenalizedProblem, u0: &Field, control: &Control) -> Result<Trajectory, SolverError> {
    integrate(problem, u0, Drive { control: Some(control), noise: None })
}

#[cfg(test)]
mod tests;
