use std::f64::consts::PI;

use super::*;
use crate::diagnostics::penetration_report;
use crate::model::{DiffusionSpec, DriftSpec};

fn problem(domain: ConvexDomain, drift: DriftSpec, diffusion: DiffusionSpec, j: usize, time: TimeGrid, n_pen: f64) -> PenalizedProblem {
    let d = domain.dim();
    PenalizedProblem {
        coeffs: ModelCoefficients::new(drift, diffusion).unwrap(),
        domain,
        gamma: ObliqueField::Normal,
        grid: SpatialGrid::new(j, d).unwrap(),
        time,
        n_pen,
        stride: 1,
    }
}

fn heat(j: usize, steps: usize, t: f64) -> PenalizedProblem {
    let big = ConvexDomain::ball(vec![0.0], 100.0).unwrap();
    problem(big, DriftSpec::Zero, DiffusionSpec::Zero { noise_dim: 1 }, j, TimeGrid::new(t, steps).unwrap(), 1.0)
}

fn sine(grid: SpatialGrid) -> Field {
    Field::from_fn(grid, |x| vec![(PI * x).sin()])
}

fn outward_drift(radius: f64, n_pen: f64, steps: usize) -> PenalizedProblem {
    problem(
        ConvexDomain::ball(vec![0.0], radius).unwrap(),
        DriftSpec::Constant { value: vec![4.0] },
        DiffusionSpec::Constant { matrix: vec![vec![1.0]] },
        31,
        TimeGrid::new(0.5, steps).unwrap(),
        n_pen,
    )
}

#[test]
fn zero_data_gives_zero_trajectory() {
    let p = problem(
        ConvexDomain::unit_ball(2),
        DriftSpec::Zero,
        DiffusionSpec::Constant { matrix: vec![vec![1.0], vec![0.5]] },
        7,
        TimeGrid::new(1.0, 40).unwrap(),
        16.0,
    );
    let u0 = Field::zeros(p.grid);
    let traj = solve_penalized_skeleton(&p, &u0, &Control::zeros(1.0, 8, 1)).unwrap();
    assert!(traj.snapshots.iter().all(|f| f.values().iter().all(|v| *v == 0.0)));
    assert!(traj.measure.is_zero());
    assert_eq!(traj.measure.total_variation(), 0.0);
    assert_eq!(traj.snapshots.len(), 41);
}

#[test]
fn heat_oracle_total_error() {
    let p = heat(63, 1000, 0.1);
    let traj = solve_penalized_skeleton(&p, &sine(p.grid), &Control::zeros(0.1, 1, 1)).unwrap();
    let mut err: f64 = 0.0;
    for (k, f) in traj.snapshots.iter().enumerate() {
        let decay = (-PI * PI * p.time.time(k)).exp();
        for (j, u) in f.points().enumerate() {
            err = err.max((u[0] - decay * (PI * p.grid.x(j)).sin()).abs());
        }
    }
    assert!(err <= 2e-3, "sup error {err}");
    assert!(traj.measure.is_zero());
}

/// Spatial error at `T`, with the first-order time error removed by
/// Richardson extrapolation over `dt` and `dt / 2`.
fn spatial_error(j: usize) -> f64 {
    let t = 0.1;
    let run = |steps| {
        let p = heat(j, steps, t);
        solve_penalized_skeleton(&p, &sine(p.grid), &Control::zeros(t, 1, 1)).unwrap().terminal().clone()
    };
    let (coarse, fine) = (run(1000), run(2000));
    let grid = coarse.grid();
    let decay = (-PI * PI * t).exp();
    (0..grid.interior())
        .map(|i| (2.0 * fine.point(i)[0] - coarse.point(i)[0] - decay * (PI * grid.x(i)).sin()).abs())
        .fold(0.0, f64::max)
}

#[test]
fn heat_spatial_error_is_second_order() {
    let ratio = spatial_error(63) / spatial_error(127);
    assert!(ratio >= 3.0, "ratio {ratio}");
}

#[test]
fn penetration_halves_when_penalty_doubles() {
    let sup = |n: f64| {
        let p = outward_drift(0.25, n, 2048);
        let traj = solve_penalized_skeleton(&p, &Field::zeros(p.grid), &Control::zeros(0.5, 1, 1)).unwrap();
        penetration_report(&traj, n).sup_pen_h.unwrap()
    };
    let ratio = sup(256.0) / sup(512.0);
    assert!((ratio - 2.0).abs() <= 0.4, "ratio {ratio}");
}

#[test]
fn unstable_step_rejected() {
    let p = outward_drift(0.25, 1024.0, 256);
    let err = solve_penalized_skeleton(&p, &Field::zeros(p.grid), &Control::zeros(0.5, 1, 1)).unwrap_err();
    assert!(matches!(err, SolverError::UnstableStep { .. }));
}

#[test]
fn blow_up_reports_step() {
    let p = problem(
        ConvexDomain::ball(vec![0.0], 1e6).unwrap(),
        DriftSpec::Linear { matrix: vec![vec![1e200]], offset: vec![0.0] },
        DiffusionSpec::Zero { noise_dim: 1 },
        5,
        TimeGrid::new(1.0, 10).unwrap(),
        1e-3,
    );
    let u0 = Field::from_fn(p.grid, |_| vec![1.0]);
    let err = solve_penalized_skeleton(&p, &u0, &Control::zeros(1.0, 1, 1)).unwrap_err();
    assert!(matches!(err, SolverError::BlowUp { step } if (1..=10).contains(&step)), "{err}");
}

#[test]
fn initial_outside_rejected() {
    let p = outward_drift(0.25, 64.0, 256);
    let u0 = Field::from_fn(p.grid, |_| vec![0.3]);
    assert!(matches!(
        solve_penalized_skeleton(&p, &u0, &Control::zeros(0.5, 1, 1)),
        Err(SolverError::Model(ModelError::InitialOutside { .. }))
    ));
}

#[test]
fn zero_epsilon_matches_skeleton_bitwise() {
    let p = outward_drift(0.25, 128.0, 512);
    let h = Control::from_fn(0.5, 16, 1, |t| vec![(6.0 * t).cos()]);
    let u0 = Field::from_fn(p.grid, |x| vec![0.2 * (PI * x).sin()]);
    let skeleton = solve_penalized_skeleton(&p, &u0, &h).unwrap();
    let noise = sample_brownian(1, &p.time, 5);
    let spde = solve_penalized_spde(&p, &u0, 0.0, &noise, Some(&h)).unwrap();
    assert_eq!(skeleton.snapshots, spde.snapshots);
    assert_eq!(skeleton.measure, spde.measure);
    assert_eq!(skeleton.step_norms, spde.step_norms);
}

#[test]
fn vanishing_sigma_ignores_noise() {
    let mut p = outward_drift(0.25, 128.0, 512);
    p.coeffs = ModelCoefficients::new(DriftSpec::Constant { value: vec![4.0] }, DiffusionSpec::Zero { noise_dim: 1 }).unwrap();
    let u0 = Field::zeros(p.grid);
    let a = solve_penalized_spde(&p, &u0, 0.3, &sample_brownian(1, &p.time, 1), None).unwrap();
    let b = solve_penalized_spde(&p, &u0, 0.3, &sample_brownian(1, &p.time, 2), None).unwrap();
    assert_eq!(a.snapshots, b.snapshots);
}

#[test]
fn doubling_control_doubles_response_exactly() {
    let p = heat(15, 64, 1.0);
    let mut p = p;
    p.coeffs = ModelCoefficients::new(DriftSpec::Zero, DiffusionSpec::Constant { matrix: vec![vec![0.75]] }).unwrap();
    let h = Control::from_fn(1.0, 8, 1, |t| vec![1.0 + t]);
    let u0 = Field::zeros(p.grid);
    let one = solve_penalized_skeleton(&p, &u0, &h).unwrap();
    let two = solve_penalized_skeleton(&p, &u0, &h.scaled(2.0)).unwrap();
    for (a, b) in one.snapshots.iter().zip(&two.snapshots) {
        assert_eq!(a.scaled(2.0), *b);
    }
}

#[test]
fn step_norms_do_not_depend_on_stride() {
    let mut p = outward_drift(0.25, 128.0, 512);
    let u0 = Field::zeros(p.grid);
    let h = Control::zeros(0.5, 1, 1);
    let dense = solve_penalized_skeleton(&p, &u0, &h).unwrap();
    p.stride = 7;
    let sparse = solve_penalized_skeleton(&p, &u0, &h).unwrap();
    assert_eq!(dense.step_norms, sparse.step_norms);
    assert_eq!(dense.measure.total_variation(), sparse.measure.total_variation());
    assert_eq!(sparse.snapshot_steps.last(), Some(&512));
    assert_eq!(sparse.snapshot_steps.len(), 512 / 7 + 2);
    assert_eq!(sparse.measure.intervals(), sparse.snapshot_steps.len() - 1);
    assert_eq!(sparse.terminal(), dense.terminal());
}

#[test]
fn replay_reproduces_run() {
    let p = outward_drift(0.25, 64.0, 256);
    let traj = solve_penalized_skeleton(&p, &Field::zeros(p.grid), &Control::zeros(0.5, 1, 1)).unwrap();
    let again = Trajectory::replay(traj.snapshots.clone(), traj.time, traj.n_pen, traj.domain.clone(), traj.gamma.clone()).unwrap();
    assert_eq!(again.step_norms, traj.step_norms);
    assert_eq!(again.measure, traj.measure);
}

#[test]
fn skeleton_stopping_rules() {
    let plan = SweepPlan { n_start: 4.0, factor: 2.0, n_max: 64.0 };
    let inactive = heat(15, 64, 0.5);
    let u0 = sine(inactive.grid);
    let h = Control::zeros(0.5, 1, 1);
    let sol = solve_skeleton(&inactive, &u0, &h, &plan, 1e-12).unwrap();
    assert!(sol.converged);
    assert_eq!(sol.table.len(), 2);
    assert_eq!(sol.table[0].cauchy_to_next, Some(0.0));

    let active = outward_drift(0.25, 1.0, 64);
    let sol = solve_skeleton(&active, &Field::zeros(active.grid), &h, &plan, 0.0).unwrap();
    assert!(!sol.converged);
    assert_eq!(sol.trajectory.n_pen, 64.0);
    assert_eq!(sol.table.len(), 5);
    assert!(sol.table.last().unwrap().cauchy_to_next.is_none());
}

#[test]
fn sweep_levels() {
    let plan = SweepPlan { n_start: 4.0, factor: 2.0, n_max: 4096.0 };
    let levels = plan.levels().unwrap();
    assert_eq!(levels.len(), 11);
    assert_eq!(levels[10], 4096.0);
    assert!(SweepPlan { n_start: 4.0, factor: 1.0, n_max: 8.0 }.levels().is_err());
}
