use super::SpatialGrid;
use crate::parallel::CompensatedSum;

/// Discrete reflection measure `eta = gamma(u) dk` on `[0, T] x [0, 1]`.
///
/// Increments are aggregated per snapshot interval (one interval per solver
/// step when every step is stored). `magnitude` holds `dk = n |u - pi(u)|
/// dt dx` per node and `vector` holds `gamma(u) dk`. The total variation is
/// accumulated step by step and does not depend on the snapshot stride.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionMeasure {
    grid: SpatialGrid,
    vector: Vec<f64>,
    magnitude: Vec<f64>,
    intervals: usize,
    total: CompensatedSumCell,
}

#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSumCell(CompensatedSum);

impl PartialEq for CompensatedSumCell {
    fn eq(&self, other: &Self) -> bool {
        self.0.value() == other.0.value()
    }
}

impl ReflectionMeasure {
    pub fn new(grid: SpatialGrid) -> Self {
        ReflectionMeasure { grid, vector: Vec::new(), magnitude: Vec::new(), intervals: 0, total: Default::default() }
    }

    pub fn grid(&self) -> SpatialGrid {
        self.grid
    }

    /// Opens a new snapshot interval with zero increments.
    pub fn open_interval(&mut self) {
        self.vector.extend(std::iter::repeat_n(0.0, self.grid.len()));
        self.magnitude.extend(std::iter::repeat_n(0.0, self.grid.interior()));
        self.intervals += 1;
    }

    /// Adds `dk * gamma` at node `j` of the current interval.
    pub fn add(&mut self, j: usize, gamma: &[f64], dk: f64) {
        assert!(self.intervals > 0, "no open interval");
        let d = self.grid.dim();
        let base = (self.intervals - 1) * self.grid.len() + j * d;
        for (v, g) in self.vector[base..base + d].iter_mut().zip(gamma) {
            *v += g * dk;
        }
        self.magnitude[(self.intervals - 1) * self.grid.interior() + j] += dk;
        self.total.0.add(dk);
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// `gamma dk` per node in interval `k`, point-major.
    pub fn vector(&self, k: usize) -> &[f64] {
        let n = self.grid.len();
        &self.vector[k * n..(k + 1) * n]
    }

    /// `dk` per node in interval `k`.
    pub fn magnitude(&self, k: usize) -> &[f64] {
        let n = self.grid.interior();
        &self.magnitude[k * n..(k + 1) * n]
    }

    /// `Var(eta)` over the whole run. With `|gamma| = 1` this is the total
    /// mass of `k`.
    pub fn total_variation(&self) -> f64 {
        self.total.0.value()
    }

    pub fn is_zero(&self) -> bool {
        self.magnitude.iter().all(|m| *m == 0.0)
    }
}
