//! Command-line runner: one subcommand per experiment, one output directory
//! per run.
//!
//! Exit codes: 0 on success, 1 on configuration, validation or solver
//! failure (with `error.json`), 2 on usage errors. `manifest.json` is written
//! whenever an output directory is known, on failure too.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, Ldp1Control, DEFAULT_TOL_VI_FRACTION};
use crate::diagnostics::{cauchy_report, continuity_experiment, trajectory_report};
use crate::geometry::{build_oblique_matrix, certify_geometry, validate_oblique_field, GeometryError};
use crate::ldp::{ldp_compare, mc_run, minimize_rate, trend_summary, weighted_trend, Ldp1Spec, LdpError, RateResult};
use crate::model::Control;
use crate::parallel::{with_workers, Execution};
use crate::solver::{
    penalty_sweep, sample_brownian, solve_penalized_spde, solve_skeleton, NoisePath, PenalizedProblem, SolverError,
    Trajectory, GENERATOR_ID,
};
use crate::space::{
    variational_inequality_check, weak_form_residual, write_json, write_table_csv, write_trajectory_dir, Field, Probe,
    SpaceError, TestFunction,
};

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Validate the domain, the oblique field and the matrix field.
    ValidateDomain,
    /// Skeleton equation, refined along the penalty ladder until Cauchy.
    Skeleton,
    /// One penalized stochastic run.
    Spde,
    /// Estimate table across the penalty ladder.
    PenaltySweep,
    /// Cauchy distances between neighbouring penalty levels.
    Cauchy,
    /// Distances of a weakly converging control family to its limit.
    Continuity,
    /// Minimal rate over controls reaching the configured event.
    Rate,
    /// Monte Carlo event probabilities at one noise level.
    Mc,
    /// Monte Carlo across the epsilon list next to the minimal rate.
    LdpCompare,
    /// Every applicable stage, one subdirectory each.
    All,
}

#[derive(Parser, Debug)]
#[command(name = "reflect-lab", version, about = "Penalized reflected stochastic heat equations: solvers, estimates and small-noise experiments")]
struct Invocation {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    args: RunArgs,
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0, value_name = "N")]
    workers: usize,
    /// Base seed; overrides the config.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// No progress lines on stdout.
    #[arg(long, global = true)]
    quiet: bool,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::ValidateDomain => "validate-domain",
            Command::Skeleton => "skeleton",
            Command::Spde => "spde",
            Command::PenaltySweep => "penalty-sweep",
            Command::Cauchy => "cauchy",
            Command::Continuity => "continuity",
            Command::Rate => "rate",
            Command::Mc => "mc",
            Command::LdpCompare => "ldp-compare",
            Command::All => "all",
        }
    }
}

const STAGES: [Command; 9] = [
    Command::ValidateDomain,
    Command::Skeleton,
    Command::Spde,
    Command::PenaltySweep,
    Command::Cauchy,
    Command::Continuity,
    Command::Rate,
    Command::Mc,
    Command::LdpCompare,
];

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Ldp(#[from] LdpError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("{0}")]
    Failed(String),
    #[error("{0}")]
    NotApplicable(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Solver(_) => "solver",
            CliError::Ldp(_) => "ldp",
            CliError::Geometry(_) => "geometry",
            CliError::Space(_) => "io",
            CliError::Failed(_) => "validation",
            CliError::NotApplicable(_) => "config",
        }
    }

    fn to_json(&self, subcommand: &str) -> Value {
        let mut v = json!({
            "status": "error",
            "subcommand": subcommand,
            "kind": self.kind(),
            "message": self.to_string(),
        });
        if let CliError::Config(ConfigError::Parse { field, line, column, .. }) = self {
            v["field"] = json!(field);
            v["line"] = json!(line);
            v["column"] = json!(column);
        }
        v
    }
}

type Outcome = Result<(), CliError>;

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    problem: PenalizedProblem,
    u0: Field,
    exec: Execution,
    quiet: bool,
}

impl Context<'_> {
    fn say(&self, line: &str) {
        if !self.quiet {
            println!("{line}");
        }
    }
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let inv = match Invocation::try_parse_from(args) {
        Ok(inv) => inv,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let Some(config_path) = inv.args.config.clone() else {
        eprintln!("error: --config PATH is required\n\nUsage: reflect-lab <COMMAND> --config <PATH> [--out <DIR>] [--workers <N>] [--seed <U64>] [--quiet]");
        return 2;
    };
    let start = Instant::now();
    let name = inv.command.name();
    let loaded = ExperimentConfig::load(&config_path);
    let out = inv
        .args
        .out
        .clone()
        .or_else(|| loaded.as_ref().ok().and_then(|(c, _)| c.output.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("error: cannot create output directory {}: {e}", out.display());
        return 1;
    }
    let hash = match &loaded {
        Ok((_, bytes)) => hex::encode(Sha256::digest(bytes)),
        Err(_) => std::fs::read(&config_path).map(|b| hex::encode(Sha256::digest(&b))).unwrap_or_default(),
    };

    let mut skipped = Vec::new();
    let result = loaded.map_err(CliError::from).and_then(|(mut cfg, _)| {
        if let Some(s) = inv.args.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        let seed = cfg.seed;
        let replicas = cfg.replicas;
        let outcome = with_workers(inv.args.workers, || dispatch(inv.command, &cfg, &out, inv.args.quiet, &mut skipped));
        outcome.map(|_| (seed, replicas))
    });

    let (status, seeds) = match &result {
        Ok((seed, replicas)) => ("ok", json!({ "base_seed": seed, "replicas": replicas })),
        Err(_) => ("error", Value::Null),
    };
    if let Err(e) = &result {
        eprintln!("error: {e}");
        let _ = write_json(&out.join("error.json"), &e.to_json(name));
    }
    let manifest = json!({
        "status": status,
        "subcommand": name,
        "config_hash": format!("sha256:{hash}"),
        "seeds": seeds,
        "replica_seed_rule": "splitmix64(base_seed + splitmix64(index ^ 0xA5A55A5AC3C33C3C))",
        "versions": {
            "reflect-lab": env!("CARGO_PKG_VERSION"),
            "noise_generator": GENERATOR_ID,
            "config_schema": 1,
        },
        "features": { "parallel": cfg!(feature = "parallel") },
        "skipped": skipped,
        "outputs": list_outputs(&out),
        "wall_time_s": start.elapsed().as_secs_f64(),
    });
    if let Err(e) = write_json(&out.join("manifest.json"), &manifest) {
        eprintln!("error: cannot write manifest: {e}");
        return 1;
    }
    match result {
        Ok(_) => 0,
        Err(_) => 1,
    }
}

fn list_outputs(dir: &Path) -> Vec<String> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) {
        let Ok(entries) = std::fs::read_dir(dir) else { return };
        for e in entries.flatten() {
            let p = e.path();
            if p.is_dir() {
                walk(root, &p, out);
            } else if let Ok(rel) = p.strip_prefix(root) {
                let rel = rel.to_string_lossy().replace('\\', "/");
                if rel != "manifest.json" && !rel.ends_with("/manifest.json") {
                    out.push(rel);
                }
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

fn dispatch(command: Command, cfg: &ExperimentConfig, out: &Path, quiet: bool, skipped: &mut Vec<String>) -> Outcome {
    let ctx = Context { cfg, problem: cfg.problem()?, u0: cfg.initial_field()?, exec: Execution::Parallel, quiet };
    if command != Command::All {
        return stage(command, &ctx, out);
    }
    for s in STAGES {
        let dir = out.join(s.name());
        std::fs::create_dir_all(&dir).map_err(SpaceError::from)?;
        match stage(s, &ctx, &dir) {
            Err(CliError::NotApplicable(why)) => {
                ctx.say(&format!("{}: skipped ({why})", s.name()));
                let _ = std::fs::remove_dir(&dir);
                skipped.push(s.name().to_string());
            }
            other => other?,
        }
    }
    Ok(())
}

fn stage(command: Command, ctx: &Context<'_>, out: &Path) -> Outcome {
    let r = match command {
        Command::ValidateDomain => validate_domain(ctx, out),
        Command::Skeleton => skeleton(ctx, out),
        Command::Spde => spde(ctx, out),
        Command::PenaltySweep => sweep(ctx, out),
        Command::Cauchy => cauchy(ctx, out),
        Command::Continuity => continuity(ctx, out),
        Command::Rate => rate(ctx, out).map(|_| ()),
        Command::Mc => mc(ctx, out),
        Command::LdpCompare => compare(ctx, out),
        Command::All => unreachable!("handled by dispatch"),
    };
    if r.is_ok() {
        ctx.say(&format!("{}: ok", command.name()));
    }
    r
}

fn validate_domain(ctx: &Context<'_>, out: &Path) -> Outcome {
    let cfg = ctx.cfg;
    let (oblique, oblique_ok) =
        match validate_oblique_field(&cfg.domain, &cfg.gamma, cfg.validation.samples, cfg.seed, cfg.thresholds()) {
            Ok(r) => (r, true),
            Err(GeometryError::ValidationFailed(r)) => (*r, false),
            Err(e) => return Err(e.into()),
        };
    let cert = certify_geometry(&cfg.domain, &cfg.gamma, cfg.validation.counts, cfg.tolerances.c0, cfg.seed)?;
    let audit = cfg.coefficients.audit_lipschitz(cfg.dim(), cfg.validation.samples, 1.0, cfg.seed);
    let passed = oblique_ok && cert.passed() && audit.passed;
    write_json(
        &out.join("report.json"),
        &json!({
            "rho_hat": oblique.rho_hat,
            "delta_hat": oblique.delta_hat,
            "theta_hat": cert.theta_hat,
            "lipschitz_hat": oblique.lipschitz_hat,
            "violations": oblique.violations,
            "certificate": cert,
            "coefficients_lipschitz": audit,
            "passed": passed,
        }),
    )?;
    if !passed {
        return Err(CliError::Failed("domain validation failed; see report.json".into()));
    }
    Ok(())
}

/// Weak-form residual (first sine mode, every component) and the
/// variational inequality on dense trajectories.
fn residual_checks(ctx: &Context<'_>, traj: &Trajectory, control: Option<&Control>, noise: Option<(f64, &NoisePath)>) -> Result<Value, CliError> {
    if !traj.is_dense() {
        return Ok(json!({ "skipped": "trajectory stored with stride > 1" }));
    }
    let mut weak: f64 = 0.0;
    for c in 0..traj.grid.dim() {
        weak = weak.max(weak_form_residual(traj, &TestFunction::sine(1, c), &ctx.problem.coeffs, control, noise)?);
    }
    let tv = traj.measure.total_variation();
    let tol_vi = ctx.cfg.tolerances.tol_vi.unwrap_or(DEFAULT_TOL_VI_FRACTION * tv);
    let vi = match build_oblique_matrix(&traj.domain, &traj.gamma, ctx.cfg.validation.samples, ctx.cfg.seed) {
        Ok(a) => {
            let probes = [Probe::Constant(Field::zeros(traj.grid)), Probe::ProjectedTrajectory];
            let min = variational_inequality_check(traj, &a, &probes)?;
            json!({ "min": min, "tol_vi": tol_vi, "passed": min >= -tol_vi })
        }
        Err(e) => json!({ "skipped": e.to_string() }),
    };
    Ok(json!({ "weak_form_residual": weak, "variational_inequality": vi }))
}

fn skeleton(ctx: &Context<'_>, out: &Path) -> Outcome {
    let control = ctx.cfg.control()?;
    let sol = solve_skeleton(&ctx.problem, &ctx.u0, &control, &ctx.cfg.penalty.plan(), ctx.cfg.penalty.tol_cauchy)?;
    write_table_csv(&out.join("sweep.csv"), &sol.table)?;
    write_trajectory_dir(&out.join("trajectory"), &sol.trajectory)?;
    write_json(
        &out.join("report.json"),
        &json!({
            "converged": sol.converged,
            "n_final": sol.trajectory.n_pen,
            "steps": sol.trajectory.time.steps,
            "estimates": trajectory_report(&sol.trajectory),
            "checks": residual_checks(ctx, &sol.trajectory, Some(&control), None)?,
        }),
    )?;
    Ok(())
}

fn spde(ctx: &Context<'_>, out: &Path) -> Outcome {
    let control = ctx.cfg.control()?;
    let eps = ctx.cfg.noise.epsilon;
    let seed = ctx.cfg.replica_plan().seed(0);
    let noise = sample_brownian(ctx.problem.coeffs.noise_dim(), &ctx.problem.time, seed);
    let traj = solve_penalized_spde(&ctx.problem, &ctx.u0, eps, &noise, Some(&control))?;
    write_trajectory_dir(&out.join("trajectory"), &traj)?;
    write_json(
        &out.join("report.json"),
        &json!({
            "epsilon": eps,
            "seed": seed,
            "generator": GENERATOR_ID,
            "n_pen": traj.n_pen,
            "steps": traj.time.steps,
            "estimates": trajectory_report(&traj),
            "checks": residual_checks(ctx, &traj, Some(&control), Some((eps, &noise)))?,
        }),
    )?;
    Ok(())
}

/// Least-squares slope of `log y` against `log x` over positive pairs.
fn loglog_slope(points: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some(sxy / sxx)
}

fn spread(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    (min > 0.0).then(|| max / min)
}

fn sweep(ctx: &Context<'_>, out: &Path) -> Outcome {
    let control = ctx.cfg.control()?;
    let sw = penalty_sweep(&ctx.problem, &ctx.u0, &control, &ctx.cfg.penalty.plan(), ctx.exec)?;
    write_table_csv(&out.join("sweep.csv"), &sw.rows)?;
    let sup: Vec<f64> = sw.rows.iter().map(|r| r.sup_pen_h).collect();
    write_json(
        &out.join("report.json"),
        &json!({
            "levels": sw.rows.iter().map(|r| r.n_pen).collect::<Vec<_>>(),
            "steps": sw.time.steps,
            "dt": sw.time.dt(),
            "sup_pen_H_slope": loglog_slope(sw.rows.iter().map(|r| (r.n_pen, r.sup_pen_h))),
            "sup_pen_H_strictly_decreasing": sup.windows(2).all(|w| w[1] < w[0]),
            "n_l1_spread": spread(sw.rows.iter().map(|r| r.n_times_l1_integral)),
            "n2_h2_spread": spread(sw.rows.iter().map(|r| r.n2_times_h2_integral)),
        }),
    )?;
    Ok(())
}

#[derive(Serialize)]
struct CauchyRow {
    n_a: f64,
    n_b: f64,
    #[serde(rename = "cauchy_H")]
    cauchy_h: f64,
    #[serde(rename = "cauchy_V")]
    cauchy_v: f64,
    total: f64,
}

fn cauchy(ctx: &Context<'_>, out: &Path) -> Outcome {
    let control = ctx.cfg.control()?;
    let sw = penalty_sweep(&ctx.problem, &ctx.u0, &control, &ctx.cfg.penalty.plan(), ctx.exec)?;
    let rows = sw
        .trajectories
        .windows(2)
        .map(|w| {
            let r = cauchy_report(&w[0], &w[1])?;
            let (h, v) = (r.cauchy_h.unwrap_or_default(), r.cauchy_v.unwrap_or_default());
            Ok(CauchyRow { n_a: w[0].n_pen, n_b: w[1].n_pen, cauchy_h: h, cauchy_v: v, total: h + v })
        })
        .collect::<Result<Vec<_>, SolverError>>()?;
    write_table_csv(&out.join("cauchy.csv"), &rows)?;
    write_json(
        &out.join("report.json"),
        &json!({
            "strictly_decreasing": rows.windows(2).all(|w| w[1].total < w[0].total),
            "final": rows.last().map(|r| r.total),
            "tol_cauchy": ctx.cfg.penalty.tol_cauchy,
        }),
    )?;
    Ok(())
}

fn continuity(ctx: &Context<'_>, out: &Path) -> Outcome {
    let Some((family, limit)) = ctx.cfg.family()? else {
        return Err(CliError::NotApplicable("no continuity family configured".into()));
    };
    let ball = ctx.cfg.continuity.as_ref().and_then(|c| c.ball);
    let table =
        continuity_experiment(&ctx.problem, &ctx.u0, &family, &limit, &ctx.cfg.penalty.plan(), ctx.cfg.penalty.tol_cauchy, ball, ctx.exec)?;
    write_table_csv(&out.join("continuity.csv"), &table.rows)?;
    let d: Vec<f64> = table.rows.iter().map(|r| r.distance).collect();
    write_json(
        &out.join("report.json"),
        &json!({
            "limit_converged": table.limit_converged,
            "decreasing_within_10pct": d.windows(2).all(|w| w[1] <= 1.1 * w[0]),
            "flagged": table.rows.iter().filter(|r| r.flagged).map(|r| r.label.clone()).collect::<Vec<_>>(),
        }),
    )?;
    Ok(())
}

fn rate_event(ctx: &Context<'_>) -> Result<crate::ldp::EventSpec, CliError> {
    if ctx.cfg.events.is_empty() {
        return Err(CliError::NotApplicable("no events configured".into()));
    }
    let mut events = ctx.cfg.events(&ctx.problem, &ctx.u0)?;
    Ok(events.swap_remove(ctx.cfg.ldp.event))
}

#[derive(Serialize)]
struct TraceRow {
    mu: f64,
    iteration: usize,
    objective: f64,
    rate: f64,
    terminal_distance: f64,
    gradient_norm: f64,
}

fn rate(ctx: &Context<'_>, out: &Path) -> Result<RateResult, CliError> {
    let event = rate_event(ctx)?;
    if !matches!(event, crate::ldp::EventSpec::TerminalBall { .. }) {
        return Err(CliError::NotApplicable("ldp.event is not a terminal_ball event".into()));
    }
    let r = minimize_rate(&ctx.problem, &ctx.u0, &event, &ctx.cfg.optimizer, ctx.exec)?;
    let trace: Vec<TraceRow> = r
        .trace
        .iter()
        .map(|t| TraceRow {
            mu: t.mu,
            iteration: t.iteration,
            objective: t.objective,
            rate: t.rate,
            terminal_distance: t.terminal_distance,
            gradient_norm: t.gradient_norm,
        })
        .collect();
    write_table_csv(&out.join("trace.csv"), &trace)?;
    let mut summary = serde_json::to_value(&r).map_err(SpaceError::from)?;
    if let Value::Object(m) = &mut summary {
        m.remove("trace");
    }
    write_json(&out.join("report.json"), &summary)?;
    Ok(r)
}

fn mc(ctx: &Context<'_>, out: &Path) -> Outcome {
    if ctx.cfg.events.is_empty() {
        return Err(CliError::NotApplicable("no events configured".into()));
    }
    let events = ctx.cfg.events(&ctx.problem, &ctx.u0)?;
    let eps = ctx.cfg.noise.epsilon;
    let run = mc_run(&ctx.problem, &ctx.u0, &events, eps, &ctx.cfg.replica_plan(), None, ctx.exec)?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(out.join("replicas.csv")).map_err(SpaceError::from)?;
    let mut header = vec!["replica".to_string(), "seed".into(), "sup_pen_H".into(), "terminal_H_norm".into()];
    header.extend((0..events.len()).map(|i| format!("event_{i}")));
    w.write_record(&header).map_err(SpaceError::from)?;
    for r in &run.records {
        let mut rec = vec![r.replica.to_string(), r.seed.to_string(), r.sup_pen_h.to_string(), r.terminal_h_norm.to_string()];
        rec.extend(r.hits.iter().map(|h| u8::from(*h).to_string()));
        w.write_record(&rec).map_err(SpaceError::from)?;
    }
    w.flush().map_err(SpaceError::from)?;
    write_json(&out.join("report.json"), &json!({ "epsilon": eps, "estimates": run.estimates }))?;
    Ok(())
}

fn compare(ctx: &Context<'_>, out: &Path) -> Outcome {
    let event = rate_event(ctx)?;
    let r = rate(ctx, out)?;
    std::fs::rename(out.join("report.json"), out.join("rate.json")).map_err(SpaceError::from)?;
    let ldp1 = match &ctx.cfg.ldp.ldp1 {
        Some(l) => Some(Ldp1Spec {
            control: match l.control {
                Ldp1Control::RateMinimizer => r.control.clone(),
                Ldp1Control::Configured => ctx.cfg.control()?,
            },
            delta: l.delta,
        }),
        None => None,
    };
    let plan = ctx.cfg.replica_plan();
    let rows = ldp_compare(&ctx.problem, &ctx.u0, &event, &ctx.cfg.epsilons, &plan, &r, ldp1.as_ref(), ctx.exec)?;
    write_table_csv(&out.join("ldp.csv"), &rows)?;
    let mut report = json!({ "I_star": r.value, "feasible": r.feasible, "trend": trend_summary(&rows) });
    if let Some(w) = &ctx.cfg.ldp.weighted {
        let wplan = crate::solver::ReplicaPlan::new(plan.base_seed, w.replicas);
        let control = ctx.cfg.control()?;
        let rows = weighted_trend(&ctx.problem, &ctx.u0, &control, &w.epsilons, &wplan, w.lambda, ctx.exec)?;
        write_table_csv(&out.join("weighted.csv"), &rows)?;
        let m: Vec<f64> = rows.iter().map(|r| r.mean_weighted_sup).collect();
        report["weighted_non_increasing"] = json!(m.windows(2).all(|w| w[1] <= w[0]));
        report["weighted_final_over_initial"] = json!(m.last().zip(m.first()).map(|(l, f)| l / f));
    }
    write_json(&out.join("report.json"), &report)?;
    Ok(())
}
