use serde::{Deserialize, Serialize};

use super::{solve_penalized_skeleton, PenalizedProblem, SolverError, Trajectory};
use crate::diagnostics::{cauchy_report, energy_report, penetration_report};
use crate::model::{Control, TimeGrid};
use crate::parallel::{try_map_indexed, Execution};
use crate::space::Field;

/// Geometric penalty ladder `n_start * factor^i <= n_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    pub n_start: f64,
    pub factor: f64,
    pub n_max: f64,
}

impl SweepPlan {
    pub fn levels(&self) -> Result<Vec<f64>, SolverError> {
        if !(self.n_start.is_finite() && self.n_start > 0.0) {
            return Err(SolverError::InvalidPenalty(self.n_start));
        }
        if !(self.factor.is_finite() && self.factor > 1.0) || !(self.n_max >= self.n_start && self.n_max.is_finite()) {
            return Err(SolverError::Mismatch(format!(
                "sweep needs factor > 1 and n_max >= n_start, got factor={} n_max={}",
                self.factor, self.n_max
            )));
        }
        let mut out = vec![self.n_start];
        loop {
            let next = out[out.len() - 1] * self.factor;
            if next > self.n_max * (1.0 + 1e-12) {
                return Ok(out);
            }
            out.push(next);
        }
    }

    /// One time grid shared by every level, so neighbouring members are
    /// compared step by step.
    pub fn time_grid(&self, base: &TimeGrid, control_steps: usize) -> Result<TimeGrid, SolverError> {
        let n_top = *self.levels()?.last().expect("non-empty ladder");
        let dt = base.dt().min(1.0 / (2.0 * n_top));
        Ok(TimeGrid::fitted(base.t_final, dt, control_steps)?)
    }
}

/// One line of the penalty-sweep table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_pen: f64,
    #[serde(rename = "sup_pen_H")]
    pub sup_pen_h: f64,
    pub n_times_l1_integral: f64,
    pub n2_times_h2_integral: f64,
    /// `cauchy_H + cauchy_V` against the next member; empty on the last row.
    pub cauchy_to_next: Option<f64>,
    #[serde(rename = "sup_H4")]
    pub sup_h4: f64,
    #[serde(rename = "sup_V2")]
    pub sup_v2: f64,
    #[serde(rename = "int_H2")]
    pub int_h2: f64,
}

impl SweepRow {
    fn from_trajectory(traj: &Trajectory) -> Self {
        let pen = penetration_report(traj, traj.n_pen);
        let energy = energy_report(traj);
        SweepRow {
            n_pen: traj.n_pen,
            sup_pen_h: pen.sup_pen_h.unwrap_or_default(),
            n_times_l1_integral: pen.n_l1_integral.unwrap_or_default(),
            n2_times_h2_integral: pen.n2_h2_integral.unwrap_or_default(),
            cauchy_to_next: None,
            sup_h4: energy.sup_h4.unwrap_or_default(),
            sup_v2: energy.sup_v2.unwrap_or_default(),
            int_h2: energy.int_h2.unwrap_or_default(),
        }
    }
}

fn cauchy_sum(a: &Trajectory, b: &Trajectory) -> Result<f64, SolverError> {
    let r = cauchy_report(a, b)?;
    Ok(r.cauchy_h.unwrap_or_default() + r.cauchy_v.unwrap_or_default())
}

#[derive(Debug, Clone)]
pub struct PenaltySweep {
    pub rows: Vec<SweepRow>,
    pub trajectories: Vec<Trajectory>,
    pub time: TimeGrid,
}

/// Runs every level of `plan` (concurrently under `exec`) on one shared
/// time grid and tabulates estimates plus neighbour Cauchy distances.
pub fn penalty_sweep(
    base: &PenalizedProblem,
    u0: &Field,
    control: &Control,
    plan: &SweepPlan,
    exec: Execution,
) -> Result<PenaltySweep, SolverError> {
    let levels = plan.levels()?;
    let time = plan.time_grid(&base.time, control.steps())?;
    let problem = base.with_time(time);
    let trajectories = try_map_indexed(exec, levels.len(), |i| {
        solve_penalized_skeleton(&problem.with_penalty(levels[i]), u0, control)
    })?;
    let mut rows: Vec<SweepRow> = trajectories.iter().map(SweepRow::from_trajectory).collect();
    for i in 0..rows.len().saturating_sub(1) {
        rows[i].cauchy_to_next = Some(cauchy_sum(&trajectories[i], &trajectories[i + 1])?);
    }
    Ok(PenaltySweep { rows, trajectories, time })
}

#[derive(Debug, Clone)]
pub struct SkeletonSolution {
    /// Finest member computed.
    pub trajectory: Trajectory,
    pub table: Vec<SweepRow>,
    pub converged: bool,
}

/// Climbs the penalty ladder until the Cauchy distance between neighbours
/// drops below `tol_cauchy`. Reaching `n_max` first returns the finest run
/// with `converged = false`.
pub fn solve_skeleton(
    base: &PenalizedProblem,
    u0: &Field,
    control: &Control,
    plan: &SweepPlan,
    tol_cauchy: f64,
) -> Result<SkeletonSolution, SolverError> {
    let levels = plan.levels()?;
    let problem = base.with_time(plan.time_grid(&base.time, control.steps())?);
    let mut prev = solve_penalized_skeleton(&problem.with_penalty(levels[0]), u0, control)?;
    let mut table = vec![SweepRow::from_trajectory(&prev)];
    for &n in &levels[1..] {
        let next = solve_penalized_skeleton(&problem.with_penalty(n), u0, control)?;
        let gap = cauchy_sum(&prev, &next)?;
        table.last_mut().expect("table is non-empty").cauchy_to_next = Some(gap);
        table.push(SweepRow::from_trajectory(&next));
        prev = next;
        if gap < tol_cauchy {
            return Ok(SkeletonSolution { trajectory: prev, table, converged: true });
        }
    }
    Ok(SkeletonSolution { trajectory: prev, table, converged: false })
}
