//! Estimate quantities measured on penalized trajectories.
//!
//! Time integrals use the left-endpoint rule on the solver's own grid. The
//! penetration and energy quantities come from the per-step norms, so they
//! do not depend on the snapshot stride; distances between two trajectories
//! are taken at stored snapshots and are exact for dense runs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::{ConvexDomain, ObliqueField};
use crate::model::{Control, TimeGrid};
use crate::parallel::{try_map_indexed, Execution};
use crate::solver::{solve_skeleton, PenalizedProblem, SolverError, SweepPlan, Trajectory};
use crate::space::{read_trajectory_dir, Field};

/// Named estimate quantities. Unset entries are omitted from JSON.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateReport {
    #[serde(rename = "sup_H4", skip_serializing_if = "Option::is_none", default)]
    pub sup_h4: Option<f64>,
    #[serde(rename = "sup_V2", skip_serializing_if = "Option::is_none", default)]
    pub sup_v2: Option<f64>,
    #[serde(rename = "int_H2", skip_serializing_if = "Option::is_none", default)]
    pub int_h2: Option<f64>,
    #[serde(rename = "sup_pen_H", skip_serializing_if = "Option::is_none", default)]
    pub sup_pen_h: Option<f64>,
    #[serde(rename = "sup_pen_Linf", skip_serializing_if = "Option::is_none", default)]
    pub sup_pen_linf: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n_l1_integral: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n2_h2_integral: Option<f64>,
    /// `n * int ||u||_H^2 ||u - pi(u)||_{L^1} dt`, the weighted form of the
    /// penetration integral.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n_weighted_l1_integral: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eta_total_variation: Option<f64>,
    #[serde(rename = "cauchy_H", skip_serializing_if = "Option::is_none", default)]
    pub cauchy_h: Option<f64>,
    #[serde(rename = "cauchy_V", skip_serializing_if = "Option::is_none", default)]
    pub cauchy_v: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub weighted_sup: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub weighted_int: Option<f64>,
}

impl EstimateReport {
    /// Entries set in `other` override those in `self`.
    pub fn merge(mut self, other: &EstimateReport) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            sup_h4,
            sup_v2,
            int_h2,
            sup_pen_h,
            sup_pen_linf,
            n_l1_integral,
            n2_h2_integral,
            n_weighted_l1_integral,
            eta_total_variation,
            cauchy_h,
            cauchy_v,
            weighted_sup,
            weighted_int
        );
        self
    }

    pub fn values(&self) -> Vec<(&'static str, f64)> {
        let all = [
            ("sup_H4", self.sup_h4),
            ("sup_V2", self.sup_v2),
            ("int_H2", self.int_h2),
            ("sup_pen_H", self.sup_pen_h),
            ("sup_pen_Linf", self.sup_pen_linf),
            ("n_l1_integral", self.n_l1_integral),
            ("n2_h2_integral", self.n2_h2_integral),
            ("n_weighted_l1_integral", self.n_weighted_l1_integral),
            ("eta_total_variation", self.eta_total_variation),
            ("cauchy_H", self.cauchy_h),
            ("cauchy_V", self.cauchy_v),
            ("weighted_sup", self.weighted_sup),
            ("weighted_int", self.weighted_int),
        ];
        all.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))).collect()
    }

    /// Every set entry is finite and non-negative.
    pub fn is_admissible(&self) -> bool {
        self.values().iter().all(|(_, v)| v.is_finite() && *v >= 0.0)
    }
}

fn left_integral(values: impl Iterator<Item = f64>, steps: usize, dt: f64) -> f64 {
    values.take(steps).sum::<f64>() * dt
}

/// Penetration depths, the scaled penetration integrals and `Var(eta)`.
pub fn penetration_report(traj: &Trajectory, n_pen: f64) -> EstimateReport {
    let norms = &traj.step_norms;
    let (k, dt) = (traj.time.steps, traj.dt());
    EstimateReport {
        sup_pen_h: Some(norms.iter().map(|s| s.pen_h).fold(0.0, f64::max)),
        sup_pen_linf: Some(norms.iter().map(|s| s.pen_linf).fold(0.0, f64::max)),
        n_l1_integral: Some(n_pen * left_integral(norms.iter().map(|s| s.pen_l1), k, dt)),
        n2_h2_integral: Some(n_pen * n_pen * left_integral(norms.iter().map(|s| s.pen_h * s.pen_h), k, dt)),
        n_weighted_l1_integral: Some(n_pen * left_integral(norms.iter().map(|s| s.h_sq * s.pen_l1), k, dt)),
        eta_total_variation: Some(traj.measure.total_variation()),
        ..Default::default()
    }
}

/// `sup ||u||_H^4`, `sup ||u||_V^2` and `int ||u||_{H^2}^2 dt`.
pub fn energy_report(traj: &Trajectory) -> EstimateReport {
    let norms = &traj.step_norms;
    EstimateReport {
        sup_h4: Some(norms.iter().map(|s| s.h_sq * s.h_sq).fold(0.0, f64::max)),
        sup_v2: Some(norms.iter().map(|s| s.v_sq).fold(0.0, f64::max)),
        int_h2: Some(left_integral(norms.iter().map(|s| s.h2_sq), traj.time.steps, traj.dt())),
        ..Default::default()
    }
}

/// Penetration and energy entries together.
pub fn trajectory_report(traj: &Trajectory) -> EstimateReport {
    penetration_report(traj, traj.n_pen).merge(&energy_report(traj))
}

fn snapshot_differences(a: &Trajectory, b: &Trajectory) -> Result<Vec<(f64, f64)>, SolverError> {
    a.same_discretization(b)?;
    a.snapshots
        .iter()
        .zip(&b.snapshots)
        .map(|(x, y)| {
            let d = x.sub(y)?;
            Ok((d.h_norm_sq(), d.v_norm_sq()))
        })
        .collect()
}

/// Widths of the snapshot intervals, used as left-endpoint weights.
fn snapshot_weights(traj: &Trajectory) -> Vec<f64> {
    let dt = traj.dt();
    traj.snapshot_steps.windows(2).map(|w| (w[1] - w[0]) as f64 * dt).collect()
}

/// `sup ||u_a - u_b||_H^2` and `int ||u_a - u_b||_V^2 dt`.
pub fn cauchy_report(a: &Trajectory, b: &Trajectory) -> Result<EstimateReport, SolverError> {
    let diffs = snapshot_differences(a, b)?;
    let weights = snapshot_weights(a);
    Ok(EstimateReport {
        cauchy_h: Some(diffs.iter().map(|d| d.0).fold(0.0, f64::max)),
        cauchy_v: Some(diffs.iter().zip(&weights).map(|(d, w)| d.1 * w).sum()),
        ..Default::default()
    })
}

/// Squared path distance `sup ||.||_H^2 + int ||.||_V^2 dt`.
pub fn path_distance_sq(a: &Trajectory, b: &Trajectory) -> Result<f64, SolverError> {
    let r = cauchy_report(a, b)?;
    Ok(r.cauchy_h.unwrap_or_default() + r.cauchy_v.unwrap_or_default())
}

/// Distances weighted by `psi(t) = exp(-lambda int_0^t (||Y||_V^2 + ||Z||_V^2) ds)`.
pub fn weighted_distance(y: &Trajectory, z: &Trajectory, lambda: f64) -> Result<EstimateReport, SolverError> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(SolverError::InvalidParameter(format!("lambda must be non-negative, got {lambda}")));
    }
    let diffs = snapshot_differences(y, z)?;
    let dt = y.dt();
    let mut exponent = 0.0;
    let mut psi = Vec::with_capacity(y.time.steps + 1);
    for k in 0..=y.time.steps {
        psi.push((-lambda * exponent).exp());
        exponent += (y.step_norms[k].v_sq + z.step_norms[k].v_sq) * dt;
    }
    assert!(psi.windows(2).all(|w| w[1] <= w[0]), "weight must be non-increasing");
    let weights = snapshot_weights(y);
    let at = |i: usize| psi[y.snapshot_steps[i]];
    Ok(EstimateReport {
        weighted_sup: Some(diffs.iter().enumerate().map(|(i, d)| at(i) * d.0).fold(0.0, f64::max)),
        weighted_int: Some(diffs.iter().zip(&weights).enumerate().map(|(i, (d, w))| at(i) * d.1 * w).sum()),
        ..Default::default()
    })
}

/// Rebuilds a trajectory written by [`crate::space::write_trajectory_dir`]
/// and recomputes its reports.
pub fn recompute_from_dir(
    dir: &Path,
    domain: &ConvexDomain,
    gamma: &ObliqueField,
) -> Result<(Trajectory, EstimateReport), SolverError> {
    let stored = read_trajectory_dir(dir)?;
    let time = TimeGrid::new(stored.index.t_final, stored.index.steps)?;
    let traj = Trajectory::replay(stored.snapshots, time, stored.index.n_pen, domain.clone(), gamma.clone())?;
    let report = trajectory_report(&traj);
    Ok((traj, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityRow {
    pub label: String,
    pub cm_norm_sq: f64,
    /// `sup ||u^{h_r} - u^h||_H^2 + int ||u^{h_r} - u^h||_V^2 dt`
    pub distance: f64,
    pub n_final: f64,
    /// Set when this member or the limit did not meet the Cauchy tolerance.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityTable {
    pub rows: Vec<ContinuityRow>,
    pub limit_converged: bool,
}

/// Skeleton limits for every member of `family` and for `limit`, with the
/// path distance of each member to the limit.
#[allow(clippy::too_many_arguments)]
pub fn continuity_experiment(
    base: &PenalizedProblem,
    u0: &Field,
    family: &[(String, Control)],
    limit: &Control,
    plan: &SweepPlan,
    tol_cauchy: f64,
    ball: Option<f64>,
    exec: Execution,
) -> Result<ContinuityTable, SolverError> {
    if let Some(n) = ball {
        for (label, h) in family.iter().map(|(l, h)| (l.as_str(), h)).chain([("limit", limit)]) {
            if !h.in_ball(n) {
                return Err(SolverError::InvalidParameter(format!(
                    "control {label} has |h|^2 = {} outside the ball of radius^2 {n}",
                    h.cm_norm_sq()
                )));
            }
        }
    }
    let solved = try_map_indexed(exec, family.len() + 1, |i| {
        let h = if i == 0 { limit } else { &family[i - 1].1 };
        solve_skeleton(base, u0, h, plan, tol_cauchy)
    })?;
    let (reference, members) = solved.split_first().expect("limit solve present");
    let rows = members
        .iter()
        .zip(family)
        .map(|(sol, (label, h))| {
            Ok(ContinuityRow {
                label: label.clone(),
                cm_norm_sq: h.cm_norm_sq(),
                distance: path_distance_sq(&sol.trajectory, &reference.trajectory)?,
                n_final: sol.trajectory.n_pen,
                flagged: !(sol.converged && reference.converged),
            })
        })
        .collect::<Result<_, SolverError>>()?;
    Ok(ContinuityTable { rows, limit_converged: reference.converged })
}
