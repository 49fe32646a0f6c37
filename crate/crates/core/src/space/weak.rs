//! Discrete checks of the weak formulation and the variational inequality.

use super::{Field, SpaceError, TestFunction};
use crate::geometry::ObliqueMatrixField;
use crate::model::{Control, ModelCoefficients};
use crate::solver::{NoisePath, Trajectory};

fn require_dense(traj: &Trajectory) -> Result<(), SpaceError> {
    if !traj.is_dense() {
        return Err(SpaceError::Unsupported(format!(
            "residual checks need every solver step stored (stride {} given)",
            traj.stride
        )));
    }
    Ok(())
}

/// `max_k |R(t_k)|` with
///
/// ```text
/// R(t) = <u(t), phi(t)> - <u(0), phi(0)> - int <u, phi'' + d_t phi> - int <b(u), phi>
///        - int <sigma(u) hdot, phi> - sqrt(eps) sum <sigma(u) dB, phi> + iint phi . d eta
/// ```
///
/// Time integrals are left-endpoint sums over the solver steps and spatial
/// integrals use weight `dx`.
pub fn weak_form_residual(
    traj: &Trajectory,
    phi: &TestFunction,
    coeffs: &ModelCoefficients,
    control: Option<&Control>,
    noise: Option<(f64, &NoisePath)>,
) -> Result<f64, SpaceError> {
    require_dense(traj)?;
    let grid = traj.grid;
    let (d, dx, dt) = (grid.dim(), grid.dx(), traj.dt());
    let c = phi.component;
    if c >= d {
        return Err(SpaceError::GridMismatch(format!("test function component {c} with d={d}")));
    }
    if traj.measure.intervals() != traj.time.steps {
        return Err(SpaceError::GridMismatch("measure and trajectory disagree on step count".into()));
    }
    let refine = match control {
        Some(h) => h.refinement(&traj.time).map_err(|e| SpaceError::GridMismatch(e.to_string()))?,
        None => 1,
    };
    if let Some((_, path)) = noise {
        if path.steps != traj.time.steps {
            return Err(SpaceError::GridMismatch("noise path and trajectory disagree on step count".into()));
        }
    }
    let m = coeffs.noise_dim();
    let pair = |f: &dyn Fn(usize) -> f64, weight: &dyn Fn(usize) -> f64| -> f64 {
        (0..grid.interior()).map(|j| f(j) * weight(j)).sum::<f64>() * dx
    };
    let mut tmp = vec![0.0; d];
    let mut sig = vec![0.0; d * m];
    let t0 = traj.time.time(0);
    let u0 = &traj.snapshots[0];
    let base = pair(&|j| u0.point(j)[c], &|j| phi.value(t0, grid.x(j)));
    let mut accumulated = 0.0;
    let mut worst: f64 = 0.0;
    for k in 0..=traj.time.steps {
        let t = traj.time.time(k);
        let u = &traj.snapshots[k];
        let current = pair(&|j| u.point(j)[c], &|j| phi.value(t, grid.x(j)));
        worst = worst.max((current - base - accumulated).abs());
        if k == traj.time.steps {
            break;
        }
        let mut inc = pair(&|j| u.point(j)[c], &|j| phi.d2x(t, grid.x(j)) + phi.dt(t, grid.x(j))) * dt;
        let eta = traj.measure.vector(k);
        for j in 0..grid.interior() {
            let p = u.point(j);
            let w = phi.value(t, grid.x(j));
            if w == 0.0 {
                continue;
            }
            coeffs.drift_into(p, &mut tmp);
            let mut local = tmp[c] * dt;
            if control.is_some() || noise.is_some() {
                sig.copy_from_slice(&coeffs.diffusion_matrix(p));
            }
            if let Some(h) = control {
                let v = h.value(k / refine);
                local += dt * (0..m).map(|l| sig[c * m + l] * v[l]).sum::<f64>();
            }
            if let Some((eps, path)) = noise {
                if eps > 0.0 {
                    let db = path.increment(k);
                    local += eps.sqrt() * (0..m).map(|l| sig[c * m + l] * db[l]).sum::<f64>();
                }
            }
            inc += local * w * dx;
            inc -= w * eta[j * d + c];
        }
        accumulated += inc;
    }
    Ok(worst)
}

/// Comparison fields for the variational inequality. Every value must lie in
/// the closed domain.
#[derive(Debug, Clone)]
pub enum Probe {
    /// The same field at every time.
    Constant(Field),
    /// One field per solver step.
    Series(Vec<Field>),
    /// `pi(u(t))`, the projection of the trajectory itself.
    ProjectedTrajectory,
}

fn check_probe_field(traj: &Trajectory, f: &Field, probe: usize) -> Result<(), SpaceError> {
    f.same_grid(traj.initial())?;
    for (j, p) in f.points().enumerate() {
        let distance = traj.domain.distance(p)?;
        if distance > 1e-12 {
            return Err(SpaceError::ProbeOutsideDomain { probe, node: j, distance });
        }
    }
    Ok(())
}

/// `min` over probes of `sum_k sum_j <u - phi, a(u) eta>` at every solver
/// step. Probes are validated before any evaluation.
pub fn variational_inequality_check(
    traj: &Trajectory,
    a: &ObliqueMatrixField,
    probes: &[Probe],
) -> Result<f64, SpaceError> {
    require_dense(traj)?;
    if probes.is_empty() {
        return Err(SpaceError::Unsupported("no probes given".into()));
    }
    if a.dim() != traj.grid.dim() {
        return Err(SpaceError::GridMismatch("matrix field dimension differs from the trajectory".into()));
    }
    for (i, probe) in probes.iter().enumerate() {
        match probe {
            Probe::Constant(f) => check_probe_field(traj, f, i)?,
            Probe::Series(fs) => {
                if fs.len() != traj.time.steps {
                    return Err(SpaceError::GridMismatch(format!(
                        "probe {i} has {} fields for {} steps",
                        fs.len(),
                        traj.time.steps
                    )));
                }
                for f in fs {
                    check_probe_field(traj, f, i)?;
                }
            }
            Probe::ProjectedTrajectory => {}
        }
    }
    let d = traj.grid.dim();
    let mut totals = vec![0.0; probes.len()];
    let mut diff = vec![0.0; d];
    for k in 0..traj.time.steps {
        let mag = traj.measure.magnitude(k);
        let eta = traj.measure.vector(k);
        let u = &traj.snapshots[k];
        for j in (0..traj.grid.interior()).filter(|&j| mag[j] > 0.0) {
            let p = u.point(j);
            let e = &eta[j * d..(j + 1) * d];
            let ae = a.apply(p, e)?;
            for (i, probe) in probes.iter().enumerate() {
                let target: Vec<f64> = match probe {
                    Probe::Constant(f) => f.point(j).to_vec(),
                    Probe::Series(fs) => fs[k].point(j).to_vec(),
                    Probe::ProjectedTrajectory => traj.domain.project(p)?,
                };
                for l in 0..d {
                    diff[l] = p[l] - target[l];
                }
                totals[i] += diff.iter().zip(&ae).map(|(x, y)| x * y).sum::<f64>();
            }
        }
    }
    Ok(totals.into_iter().fold(f64::INFINITY, f64::min))
}
