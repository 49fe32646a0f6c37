use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{integrate, Drive, PenalizedProblem, SolverError, Trajectory};
use crate::geometry::sampling::splitmix64;
use crate::model::{Control, TimeGrid};
use crate::space::Field;

/// Identifies the increment generator; part of the reproducibility key.
pub const GENERATOR_ID: &str = "chacha8-standard-normal-v1";

/// Brownian increments `dB_k`, step-major (`m` values per step).
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub noise_dim: usize,
    pub steps: usize,
    pub dt: f64,
    pub seed: u64,
    pub generator: &'static str,
    increments: Vec<f64>,
}

impl NoisePath {
    /// Builds a path from given increments, e.g. for common random numbers
    /// across noise levels.
    pub fn from_increments(noise_dim: usize, time: &TimeGrid, increments: Vec<f64>) -> Result<Self, SolverError> {
        if noise_dim == 0 || increments.len() != noise_dim * time.steps {
            return Err(SolverError::Mismatch(format!(
                "expected {} increments, got {}",
                noise_dim * time.steps,
                increments.len()
            )));
        }
        Ok(NoisePath { noise_dim, steps: time.steps, dt: time.dt(), seed: 0, generator: "explicit", increments })
    }

    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.noise_dim..(k + 1) * self.noise_dim]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }
}

/// Draws i.i.d. `N(0, dt)` increments for every step and noise component.
pub fn sample_brownian(noise_dim: usize, time: &TimeGrid, seed: u64) -> NoisePath {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = time.dt().sqrt();
    let increments = (0..noise_dim * time.steps)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        })
        .collect();
    NoisePath { noise_dim, steps: time.steps, dt: time.dt(), seed, generator: GENERATOR_ID, increments }
}

/// Counter-based seed of replica `index`. Both mixing stages are bijections,
/// so distinct indices always give distinct seeds.
pub fn replica_seed(base_seed: u64, index: u64) -> u64 {
    splitmix64(base_seed.wrapping_add(splitmix64(index ^ 0xA5A5_5A5A_C3C3_3C3C)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicaPlan {
    pub base_seed: u64,
    pub replicas: usize,
}

impl ReplicaPlan {
    pub fn new(base_seed: u64, replicas: usize) -> Self {
        ReplicaPlan { base_seed, replicas }
    }

    pub fn seed(&self, index: usize) -> u64 {
        replica_seed(self.base_seed, index as u64)
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.replicas).map(|i| self.seed(i)).collect()
    }
}

/// Penalized small-noise equation. `control` adds `sigma(u) hdot dt`; with
/// `epsilon = 0` the noise term is never evaluated.
pub fn solve_penalized_spde(
    problem: &PenalizedProblem,
    u0: &Field,
    epsilon: f64,
    noise: &NoisePath,
    control: Option<&Control>,
) -> Result<Trajectory, SolverError> {
    integrate(problem, u0, Drive { control, noise: Some((epsilon, noise)) })
}
