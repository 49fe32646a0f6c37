//! Thomas algorithm for constant tridiagonal systems.

/// Pre-factored tridiagonal matrix `tri(lower, diag, upper)` of size `n`.
///
/// Stores the modified super-diagonal and the pivots of the forward sweep,
/// so each solve is one forward and one backward pass.
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    lower: Vec<f64>,
    upper_mod: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl Tridiagonal {
    /// `lower` and `upper` have length `n - 1`. Panics on a zero pivot; the
    /// implicit heat operator is strictly diagonally dominant so that never
    /// happens there.
    pub fn new(lower: &[f64], diag: &[f64], upper: &[f64]) -> Self {
        let n = diag.len();
        assert!(n >= 1 && lower.len() + 1 == n && upper.len() + 1 == n);
        let mut upper_mod = vec![0.0; n.saturating_sub(1)];
        let mut inv_pivot = vec![0.0; n];
        let mut pivot = diag[0];
        assert!(pivot != 0.0, "zero pivot");
        inv_pivot[0] = 1.0 / pivot;
        for i in 1..n {
            upper_mod[i - 1] = upper[i - 1] * inv_pivot[i - 1];
            pivot = diag[i] - lower[i - 1] * upper_mod[i - 1];
            assert!(pivot != 0.0, "zero pivot");
            inv_pivot[i] = 1.0 / pivot;
        }
        Tridiagonal { lower: lower.to_vec(), upper_mod, inv_pivot }
    }

    /// `I - r * tri(1, -2, 1)`: one implicit Euler step of the Dirichlet
    /// Laplacian with `r = dt / dx^2`.
    pub fn implicit_heat(n: usize, r: f64) -> Self {
        let off = vec![-r; n - 1];
        let diag = vec![1.0 + 2.0 * r; n];
        Tridiagonal::new(&off, &diag, &off)
    }

    pub fn len(&self) -> usize {
        self.inv_pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_pivot.is_empty()
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        self.solve_strided(rhs, 0, 1);
    }

    /// Solves for the entries `rhs[offset + k * stride]`, `k = 0..n`.
    pub fn solve_strided(&self, rhs: &mut [f64], offset: usize, stride: usize) {
        let n = self.len();
        let at = |k: usize| offset + k * stride;
        rhs[at(0)] *= self.inv_pivot[0];
        for k in 1..n {
            let prev = rhs[at(k - 1)];
            rhs[at(k)] = (rhs[at(k)] - self.lower[k - 1] * prev) * self.inv_pivot[k];
        }
        for k in (0..n - 1).rev() {
            let next = rhs[at(k + 1)];
            rhs[at(k)] -= self.upper_mod[k] * next;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matvec(l: &[f64], d: &[f64], u: &[f64], x: &[f64]) -> Vec<f64> {
        let n = d.len();
        (0..n)
            .map(|i| {
                let mut s = d[i] * x[i];
                if i > 0 {
                    s += l[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += u[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    #[test]
    fn recovers_known_solution() {
        let l = [1.0, -0.5, 2.0, 0.3];
        let d = [4.0, 5.0, 6.0, 7.0, 3.0];
        let u = [0.5, 1.5, -1.0, 0.2];
        let x = [1.0, -2.0, 3.0, 0.5, -1.5];
        let mut b = matvec(&l, &d, &u, &x);
        Tridiagonal::new(&l, &d, &u).solve_in_place(&mut b);
        for (a, e) in b.iter().zip(&x) {
            assert!((a - e).abs() < 1e-13);
        }
    }

    #[test]
    fn strided_matches_contiguous() {
        let t = Tridiagonal::implicit_heat(6, 3.7);
        let mut a: Vec<f64> = (0..6).map(|k| (k as f64).sin()).collect();
        let mut inter = vec![0.0; 12];
        for k in 0..6 {
            inter[2 * k + 1] = a[k];
            inter[2 * k] = 99.0;
        }
        t.solve_in_place(&mut a);
        t.solve_strided(&mut inter, 1, 2);
        for k in 0..6 {
            assert_eq!(a[k], inter[2 * k + 1]);
            assert_eq!(inter[2 * k], 99.0);
        }
    }
}
