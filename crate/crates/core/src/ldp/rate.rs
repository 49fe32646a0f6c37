use serde::{Deserialize, Serialize};

use super::{EventSpec, LdpError};
use crate::model::{Control, TimeGrid};
use crate::parallel::{try_map_indexed, Execution};
use crate::solver::{solve_penalized_skeleton, PenalizedProblem};
use crate::space::Field;

/// `I(h) = 1/2 sum_k |hdot_k|^2 dt`, exact for piecewise-constant controls.
pub fn rate_functional(control: &Control) -> f64 {
    0.5 * control.cm_norm_sq()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerOptions {
    /// Number of piecewise-constant control steps.
    pub control_steps: usize,
    /// Forward-difference step per coefficient.
    pub fd_step: f64,
    pub mu_schedule: Vec<f64>,
    pub max_iterations: usize,
    pub stagnation_window: usize,
    pub stagnation_tol: f64,
    /// A stage ends once the gradient norm falls below this fraction of its
    /// value at the start of the stage.
    pub grad_tol: f64,
    /// Relative shrinkage of the target radius used inside the penalty, so
    /// that penalized optima land strictly feasible.
    pub margin: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
    /// Upper bound on `control_steps * m`.
    pub max_coefficients: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            control_steps: 16,
            fd_step: 1e-4,
            mu_schedule: vec![10.0, 1e2, 1e3, 1e4],
            max_iterations: 200,
            stagnation_window: 50,
            stagnation_tol: 1e-8,
            grad_tol: 1e-5,
            margin: 0.02,
            armijo: 1e-4,
            max_backtracks: 40,
            max_coefficients: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub mu: f64,
    pub iteration: usize,
    pub objective: f64,
    pub rate: f64,
    pub terminal_distance: f64,
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    #[serde(rename = "I_star")]
    pub value: f64,
    pub control: Control,
    /// `||G(h*)(T) - g||_H`
    pub terminal_distance: f64,
    pub radius: f64,
    pub complement: bool,
    /// Amount by which the terminal constraint is violated; zero when feasible.
    pub residual: f64,
    pub feasible: bool,
    pub stagnated: bool,
    pub solves: usize,
    pub trace: Vec<TraceEntry>,
}

struct Target<'a> {
    center: &'a Field,
    radius: f64,
    complement: bool,
}

impl Target<'_> {
    fn residual(&self, dist: f64, radius: f64) -> f64 {
        if self.complement {
            (radius - dist).max(0.0)
        } else {
            (dist - radius).max(0.0)
        }
    }

    fn feasible(&self, dist: f64) -> bool {
        if self.complement {
            dist > self.radius
        } else {
            dist <= self.radius
        }
    }
}

struct Objective<'a> {
    problem: PenalizedProblem,
    u0: &'a Field,
    target: Target<'a>,
    inner_radius: f64,
    t_final: f64,
    noise_dim: usize,
    dt_control: f64,
}

impl Objective<'_> {
    fn distance(&self, x: &[f64]) -> Result<f64, LdpError> {
        let h = Control::new(self.t_final, self.noise_dim, x.to_vec())?;
        let traj = solve_penalized_skeleton(&self.problem, self.u0, &h)?;
        Ok(traj.terminal().sub(self.target.center)?.h_norm())
    }

    fn rate(&self, x: &[f64]) -> f64 {
        0.5 * x.iter().map(|v| v * v).sum::<f64>() * self.dt_control
    }

    fn value(&self, x: &[f64], dist: f64, mu: f64) -> f64 {
        let v = self.target.residual(dist, self.inner_radius);
        self.rate(x) + mu * v * v
    }
}

/// Minimizes `I(h)` subject to the terminal state reaching (or leaving) the
/// event ball, by penalty continuation over `mu` with forward-difference
/// gradients and a Barzilai–Borwein step under Armijo backtracking.
///
/// A stage ends when the gradient has shrunk by `grad_tol`, when the line
/// search fails, or after `stagnation_window` iterations of negligible
/// decrease; `stagnated` records the last case for the final stage.
/// Returns the best feasible iterate seen. When none is feasible the last
/// iterate is returned with `feasible = false`.
pub fn minimize_rate(
    problem: &PenalizedProblem,
    u0: &Field,
    event: &EventSpec,
    opts: &OptimizerOptions,
    exec: Execution,
) -> Result<RateResult, LdpError> {
    let EventSpec::TerminalBall { center, radius, complement } = event else {
        return Err(LdpError::InvalidEvent("rate minimization needs a terminal_ball event".into()));
    };
    event.check()?;
    let m = problem.coeffs.noise_dim();
    let kc = opts.control_steps;
    let n = kc * m;
    if kc == 0 || n > opts.max_coefficients {
        return Err(LdpError::InvalidParameter(format!(
            "control has {n} coefficients, allowed 1..={}",
            opts.max_coefficients
        )));
    }
    if opts.mu_schedule.is_empty() || opts.fd_step.is_nan() || opts.fd_step <= 0.0 || !(0.0..1.0).contains(&opts.margin) {
        return Err(LdpError::InvalidParameter("optimizer needs a mu schedule, fd_step > 0 and margin in [0, 1)".into()));
    }
    let t_final = problem.time.t_final;
    let time = if problem.time.steps.is_multiple_of(kc) && problem.time.dt() <= problem.dt_bound() {
        problem.time
    } else {
        TimeGrid::fitted(t_final, problem.time.dt().min(problem.dt_bound()), kc)?
    };
    let inner_radius = if *complement { radius * (1.0 + opts.margin) } else { radius * (1.0 - opts.margin) };
    let obj = Objective {
        problem: problem.with_time(time),
        u0,
        target: Target { center, radius: *radius, complement: *complement },
        inner_radius,
        t_final,
        noise_dim: m,
        dt_control: t_final / kc as f64,
    };

    let mut solves = 0usize;
    let mut trace = Vec::new();
    let mut x = vec![0.0; n];
    let mut dist = obj.distance(&x)?;
    solves += 1;
    let mut best: Option<(Vec<f64>, f64)> = obj.target.feasible(dist).then(|| (x.clone(), dist));
    let mut stagnated = false;

    let gradient = |x: &[f64], dist: f64, mu: f64| -> Result<Vec<f64>, LdpError> {
        let base = obj.value(x, dist, mu) - obj.rate(x);
        let probes = try_map_indexed(exec, n, |i| {
            let mut y = x.to_vec();
            y[i] += opts.fd_step;
            obj.distance(&y)
        })?;
        Ok(probes
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let v = obj.target.residual(*d, obj.inner_radius);
                (mu * v * v - base) / opts.fd_step + x[i] * obj.dt_control
            })
            .collect())
    };
    let norm2 = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();

    for &mu in &opts.mu_schedule {
        stagnated = false;
        let mut f = obj.value(&x, dist, mu);
        let mut g = gradient(&x, dist, mu)?;
        solves += n;
        let mut step = 1.0 / obj.dt_control;
        let mut stall = 0;
        let g_start = norm2(&g).sqrt();
        for iteration in 0..opts.max_iterations {
            let gg = norm2(&g);
            trace.push(TraceEntry { mu, iteration, objective: f, rate: obj.rate(&x), terminal_distance: dist, gradient_norm: gg.sqrt() });
            if gg.sqrt() <= opts.grad_tol * g_start || gg == 0.0 {
                break;
            }
            let mut accepted = None;
            for _ in 0..=opts.max_backtracks {
                let y: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
                let dy = obj.distance(&y)?;
                solves += 1;
                let fy = obj.value(&y, dy, mu);
                if fy <= f - opts.armijo * step * gg {
                    accepted = Some((y, dy, fy));
                    break;
                }
                step *= 0.5;
            }
            let Some((y, dy, fy)) = accepted else { break };
            let gy = gradient(&y, dy, mu)?;
            solves += n;
            let s: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
            let r: Vec<f64> = gy.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sr: f64 = s.iter().zip(&r).map(|(a, b)| a * b).sum();
            step = if sr > 0.0 { norm2(&s) / sr } else { 2.0 * step };
            let decrease = (f - fy) / f.abs().max(f64::MIN_POSITIVE);
            stall = if decrease < opts.stagnation_tol { stall + 1 } else { 0 };
            x = y;
            dist = dy;
            f = fy;
            g = gy;
            if obj.target.feasible(dist) && best.as_ref().is_none_or(|(b, _)| obj.rate(&x) < obj.rate(b)) {
                best = Some((x.clone(), dist));
            }
            if stall >= opts.stagnation_window {
                stagnated = true;
                break;
            }
        }
    }

    let (feasible, (xs, d)) = match best {
        Some(b) => (true, b),
        None => (false, (x, dist)),
    };
    let control = Control::new(t_final, m, xs)?;
    Ok(RateResult {
        value: rate_functional(&control),
        control,
        terminal_distance: d,
        radius: *radius,
        complement: *complement,
        residual: obj.target.residual(d, *radius),
        feasible,
        stagnated,
        solves,
        trace,
    })
}
