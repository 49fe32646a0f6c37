//! Small-replica Monte Carlo estimate against an independent large-replica
//! run of the same event.

use reflect_lab::geometry::{ConvexDomain, ObliqueField};
use reflect_lab::ldp::{mc_probability, EventSpec};
use reflect_lab::model::{DiffusionSpec, DriftSpec, ModelCoefficients, TimeGrid};
use reflect_lab::solver::{PenalizedProblem, ReplicaPlan};
use reflect_lab::{Execution, Field, SpatialGrid};

#[test]
fn small_run_agrees_with_large_independent_run() {
    let grid = SpatialGrid::new(15, 1).unwrap();
    let p = PenalizedProblem {
        coeffs: ModelCoefficients::new(DriftSpec::Zero, DiffusionSpec::Constant { matrix: vec![vec![1.0]] }).unwrap(),
        domain: ConvexDomain::ball(vec![0.0], 1.0).unwrap(),
        gamma: ObliqueField::Normal,
        grid,
        time: TimeGrid::new(0.5, 256).unwrap(),
        n_pen: 256.0,
        stride: 256,
    };
    let u0 = Field::zeros(grid);
    let event = EventSpec::ball_exit(Field::zeros(grid), 0.06).unwrap();
    let small = mc_probability(&p, &u0, &event, 0.1, &ReplicaPlan::new(1, 2000), Execution::Parallel).unwrap();
    let large = mc_probability(&p, &u0, &event, 0.1, &ReplicaPlan::new(2, 20_000), Execution::Parallel).unwrap();
    println!("p_hat {} +- {} vs {} +- {}", small.p_hat, small.stderr, large.p_hat, large.stderr);
    assert!(small.p_hat > 0.1 && small.p_hat < 0.9, "event is not moderate: {}", small.p_hat);
    assert!((small.p_hat - large.p_hat).abs() <= 3.0 * small.stderr);
}
