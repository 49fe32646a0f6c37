use serde::{Deserialize, Serialize};

use super::{EventSpec, LdpError, RateResult};
use crate::diagnostics::{path_distance_sq, penetration_report, weighted_distance};
use crate::model::Control;
use crate::parallel::{try_map_indexed, CompensatedSum, Execution};
use crate::solver::{sample_brownian, solve_penalized_skeleton, solve_penalized_spde, PenalizedProblem, ReplicaPlan};
use crate::space::Field;

/// Summary of one replica.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaRecord {
    pub replica: usize,
    pub seed: u64,
    pub sup_pen_h: f64,
    pub terminal_h_norm: f64,
    /// One indicator per event, in the order given.
    pub hits: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub p_hat: f64,
    pub stderr: f64,
    pub hits: usize,
    #[serde(rename = "R")]
    pub replicas: usize,
    /// `3 / R` when no replica hit the event.
    pub upper_bound: Option<f64>,
}

impl McEstimate {
    pub fn from_hits(hits: usize, replicas: usize) -> Self {
        let r = replicas as f64;
        let p = hits as f64 / r;
        McEstimate {
            p_hat: p,
            stderr: (p * (1.0 - p) / r).sqrt(),
            hits,
            replicas,
            upper_bound: (hits == 0).then(|| 3.0 / r),
        }
    }
}

#[derive(Debug, Clone)]
pub struct McRun {
    pub epsilon: f64,
    pub records: Vec<ReplicaRecord>,
    pub estimates: Vec<McEstimate>,
}

fn check_plan(plan: &ReplicaPlan) -> Result<(), LdpError> {
    if plan.replicas == 0 {
        return Err(LdpError::InvalidParameter("replica plan needs at least one replica".into()));
    }
    Ok(())
}

/// Simulates `plan.replicas` independent paths of the penalized equation at
/// noise level `epsilon` and records every event indicator. Replica `i`
/// always uses seed `plan.seed(i)`, whatever the execution order.
pub fn mc_run(
    problem: &PenalizedProblem,
    u0: &Field,
    events: &[EventSpec],
    epsilon: f64,
    plan: &ReplicaPlan,
    control: Option<&Control>,
    exec: Execution,
) -> Result<McRun, LdpError> {
    check_plan(plan)?;
    for e in events {
        e.check()?;
    }
    let m = problem.coeffs.noise_dim();
    let records = try_map_indexed(exec, plan.replicas, |i| -> Result<ReplicaRecord, LdpError> {
        let seed = plan.seed(i);
        let noise = sample_brownian(m, &problem.time, seed);
        let traj = solve_penalized_spde(problem, u0, epsilon, &noise, control)?;
        let hits = events.iter().map(|e| e.occurs(&traj)).collect::<Result<_, _>>()?;
        Ok(ReplicaRecord {
            replica: i,
            seed,
            sup_pen_h: penetration_report(&traj, traj.n_pen).sup_pen_h.unwrap_or_default(),
            terminal_h_norm: traj.terminal().h_norm(),
            hits,
        })
    })?;
    let estimates = (0..events.len())
        .map(|e| McEstimate::from_hits(records.iter().filter(|r| r.hits[e]).count(), plan.replicas))
        .collect();
    Ok(McRun { epsilon, records, estimates })
}

/// `P(event)` at noise level `epsilon` by plain Monte Carlo.
pub fn mc_probability(
    problem: &PenalizedProblem,
    u0: &Field,
    event: &EventSpec,
    epsilon: f64,
    plan: &ReplicaPlan,
    exec: Execution,
) -> Result<McEstimate, LdpError> {
    let run = mc_run(problem, u0, std::slice::from_ref(event), epsilon, plan, None, exec)?;
    Ok(run.estimates[0])
}

/// Distance event between the controlled stochastic path and its skeleton.
#[derive(Debug, Clone)]
pub struct Ldp1Spec {
    pub control: Control,
    /// Threshold on `sup ||Y - Z||_H^2 + int ||Y - Z||_V^2 dt`.
    pub delta: f64,
}

/// `P(rho(Y^eps, Z)^2 > delta)` with `Y^eps` driven by `control` plus noise
/// and `Z` the skeleton under the same control.
pub fn ldp1_probability(
    problem: &PenalizedProblem,
    u0: &Field,
    spec: &Ldp1Spec,
    epsilon: f64,
    plan: &ReplicaPlan,
    exec: Execution,
) -> Result<McEstimate, LdpError> {
    check_plan(plan)?;
    if spec.delta.is_nan() || spec.delta <= 0.0 {
        return Err(LdpError::InvalidParameter(format!("LDP1 threshold must be positive, got {}", spec.delta)));
    }
    let z = solve_penalized_skeleton(problem, u0, &spec.control)?;
    let m = problem.coeffs.noise_dim();
    let hits = try_map_indexed(exec, plan.replicas, |i| -> Result<bool, LdpError> {
        let noise = sample_brownian(m, &problem.time, plan.seed(i));
        let y = solve_penalized_spde(problem, u0, epsilon, &noise, Some(&spec.control))?;
        Ok(path_distance_sq(&y, &z)? > spec.delta)
    })?;
    Ok(McEstimate::from_hits(hits.iter().filter(|h| **h).count(), plan.replicas))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpRow {
    pub epsilon: f64,
    pub p_hat: f64,
    pub stderr: f64,
    /// Empty when no replica hit the event.
    pub neg_eps_log_p: Option<f64>,
    #[serde(rename = "I_star")]
    pub i_star: f64,
    pub ldp1_prob: Option<f64>,
    /// `-eps log(3/R)`, a lower bound on `-eps log p` reported for zero-hit rows.
    pub neg_eps_log_p_lower_bound: Option<f64>,
}

/// `-eps log p_hat` across a decreasing list of noise levels, next to the
/// minimal rate, plus the LDP1 probability column when `ldp1` is given.
#[allow(clippy::too_many_arguments)]
pub fn ldp_compare(
    problem: &PenalizedProblem,
    u0: &Field,
    event: &EventSpec,
    epsilons: &[f64],
    plan: &ReplicaPlan,
    rate: &RateResult,
    ldp1: Option<&Ldp1Spec>,
    exec: Execution,
) -> Result<Vec<LdpRow>, LdpError> {
    if epsilons.is_empty() || epsilons.windows(2).any(|w| w[1] >= w[0]) || epsilons.iter().any(|e| e.is_nan() || *e <= 0.0) {
        return Err(LdpError::InvalidParameter("epsilon list must be positive and strictly decreasing".into()));
    }
    epsilons
        .iter()
        .map(|&eps| {
            let est = mc_probability(problem, u0, event, eps, plan, exec)?;
            let ldp1_prob = ldp1.map(|s| ldp1_probability(problem, u0, s, eps, plan, exec)).transpose()?.map(|e| e.p_hat);
            Ok(LdpRow {
                epsilon: eps,
                p_hat: est.p_hat,
                stderr: est.stderr,
                neg_eps_log_p: (est.hits > 0).then(|| -eps * est.p_hat.ln()),
                i_star: rate.value,
                ldp1_prob,
                neg_eps_log_p_lower_bound: est.upper_bound.map(|b| -eps * b.ln()),
            })
        })
        .collect()
}

/// Trend of the LDP column toward the rate: whether `|-eps log p - I*|`
/// never increases along the rows, and the final relative gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendSummary {
    pub monotone: bool,
    pub final_relative_gap: Option<f64>,
    pub ldp1_non_increasing: Option<bool>,
}

pub fn trend_summary(rows: &[LdpRow]) -> TrendSummary {
    let fitted: Vec<&LdpRow> = rows.iter().filter(|r| r.neg_eps_log_p.is_some()).collect();
    let gaps: Vec<f64> = fitted.iter().map(|r| (r.neg_eps_log_p.unwrap() - r.i_star).abs()).collect();
    let ldp1: Option<Vec<f64>> = rows.iter().map(|r| r.ldp1_prob).collect();
    TrendSummary {
        monotone: gaps.windows(2).all(|w| w[1] <= w[0]),
        final_relative_gap: fitted.last().map(|r| (r.neg_eps_log_p.unwrap() - r.i_star).abs() / r.i_star.abs()),
        ldp1_non_increasing: ldp1.map(|p| p.windows(2).all(|w| w[1] <= w[0])),
    }
}

/// Replica averages of the weighted distance between the controlled
/// stochastic path and its skeleton at one noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedRow {
    pub epsilon: f64,
    pub mean_weighted_sup: f64,
    pub stderr_weighted_sup: f64,
    pub mean_weighted_int: f64,
    /// `max_replicas sup_t ||Y||_H^2`
    pub max_sup_h2: f64,
    /// `max_replicas int ||Y||_V^2 dt`
    pub max_int_v2: f64,
}

pub fn weighted_trend(
    problem: &PenalizedProblem,
    u0: &Field,
    control: &Control,
    epsilons: &[f64],
    plan: &ReplicaPlan,
    lambda: f64,
    exec: Execution,
) -> Result<Vec<WeightedRow>, LdpError> {
    check_plan(plan)?;
    let z = solve_penalized_skeleton(problem, u0, control)?;
    let m = problem.coeffs.noise_dim();
    epsilons
        .iter()
        .map(|&eps| {
            let per = try_map_indexed(exec, plan.replicas, |i| -> Result<[f64; 4], LdpError> {
                let noise = sample_brownian(m, &problem.time, plan.seed(i));
                let y = solve_penalized_spde(problem, u0, eps, &noise, Some(control))?;
                let w = weighted_distance(&y, &z, lambda)?;
                let sup_h2 = y.step_norms.iter().map(|s| s.h_sq).fold(0.0, f64::max);
                let int_v2 = y.step_norms.iter().take(y.time.steps).map(|s| s.v_sq).sum::<f64>() * y.dt();
                Ok([w.weighted_sup.unwrap_or_default(), w.weighted_int.unwrap_or_default(), sup_h2, int_v2])
            })?;
            let r = per.len() as f64;
            let mean_sup = per.iter().map(|v| v[0]).collect::<CompensatedSum>().value() / r;
            let var = per.iter().map(|v| (v[0] - mean_sup).powi(2)).collect::<CompensatedSum>().value() / (r - 1.0).max(1.0);
            Ok(WeightedRow {
                epsilon: eps,
                mean_weighted_sup: mean_sup,
                stderr_weighted_sup: (var / r).sqrt(),
                mean_weighted_int: per.iter().map(|v| v[1]).collect::<CompensatedSum>().value() / r,
                max_sup_h2: per.iter().map(|v| v[2]).fold(0.0, f64::max),
                max_int_v2: per.iter().map(|v| v[3]).fold(0.0, f64::max),
            })
        })
        .collect()
}
