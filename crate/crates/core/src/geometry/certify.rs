//! Randomized certification of the projection and matrix-field properties.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sampling::splitmix64;
use super::{boundary_samples, build_oblique_matrix, dist, dot, interior_samples, lions_sznitman_margin};
use super::{ConvexDomain, GeometryError, ObliqueField, ObliqueMatrixField};

/// Sample counts per check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertificationCounts {
    pub contraction: usize,
    pub idempotence: usize,
    pub convexity: usize,
    pub matrix: usize,
}

impl Default for CertificationCounts {
    fn default() -> Self {
        CertificationCounts { contraction: 100_000, idempotence: 10_000, convexity: 10_000, matrix: 1_000 }
    }
}

/// Worst sampled value of one property against its tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub samples: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckOutcome {
    /// `worst <= tolerance`.
    fn at_most(samples: usize, worst: f64, tolerance: f64) -> Self {
        CheckOutcome { samples, worst, tolerance, passed: worst <= tolerance }
    }

    /// `worst >= -tolerance`.
    fn at_least(samples: usize, worst: f64, tolerance: f64) -> Self {
        CheckOutcome { samples, worst, tolerance, passed: worst >= -tolerance }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryCertificate {
    /// `max (|pi(x) - pi(y)| - |x - y|)` over random pairs.
    pub contraction: CheckOutcome,
    /// `max |pi(pi(x)) - pi(x)|_inf`.
    pub idempotence: CheckOutcome,
    /// `min <x - y, n(x)>` over boundary `x` and interior `y`.
    pub convexity: CheckOutcome,
    /// `max |a(x) gamma(x) - n(x)|_inf` on boundary samples, when the matrix
    /// field could be built.
    pub matrix_identity: Option<CheckOutcome>,
    pub matrix_symmetric: Option<bool>,
    pub theta_hat: Option<f64>,
    /// `min C0 |x-y|^2 + sum a_ij(x)(x_i-y_i) gamma_j(x)`.
    pub lions_sznitman: Option<CheckOutcome>,
    /// Why the matrix field was not built.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix_error: Option<String>,
}

impl GeometryCertificate {
    pub fn passed(&self) -> bool {
        self.contraction.passed
            && self.idempotence.passed
            && self.convexity.passed
            && self.matrix_identity.is_some_and(|c| c.passed)
            && self.matrix_symmetric == Some(true)
            && self.lions_sznitman.is_none_or(|c| c.passed)
    }
}

fn box_point(rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter()
        .zip(hi)
        .map(|(a, b)| {
            let c = 0.5 * (a + b);
            let w = 3.0 * (b - a);
            c + w * (rng.random::<f64>() - 0.5)
        })
        .collect()
}

/// Runs every check with seeded samples. Points for the projection checks
/// are drawn uniformly from the bounding box enlarged three times, so most
/// land outside the domain. Idempotence is exact for balls and boxes and
/// holds to 1e-12 for the kinds projected by alternating projection.
pub fn certify_geometry(
    domain: &ConvexDomain,
    gamma: &ObliqueField,
    counts: CertificationCounts,
    c0: Option<f64>,
    seed: u64,
) -> Result<GeometryCertificate, GeometryError> {
    domain.validate()?;
    gamma.check(domain.dim())?;
    let (lo, hi) = domain.bounding_box();
    let idem_tol = if matches!(domain, ConvexDomain::Intersection { .. } | ConvexDomain::Polytope { .. }) { 1e-12 } else { 0.0 };

    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x4444));
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..counts.contraction {
        let x = box_point(&mut rng, &lo, &hi);
        let y = box_point(&mut rng, &lo, &hi);
        worst = worst.max(dist(&domain.project(&x)?, &domain.project(&y)?) - dist(&x, &y));
    }
    let contraction = CheckOutcome::at_most(counts.contraction, worst, 1e-12);

    let mut worst: f64 = 0.0;
    for _ in 0..counts.idempotence {
        let p = domain.project(&box_point(&mut rng, &lo, &hi))?;
        let q = domain.project(&p)?;
        worst = worst.max(p.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    let idempotence = CheckOutcome::at_most(counts.idempotence, worst, idem_tol);

    let xs = boundary_samples(domain, counts.convexity, splitmix64(seed ^ 0x5555));
    let ys = interior_samples(domain, counts.convexity, splitmix64(seed ^ 0x6666));
    let mut worst = f64::INFINITY;
    for (x, y) in xs.iter().zip(&ys) {
        let n = domain.outward_normal(x)?;
        let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        worst = worst.min(dot(&diff, &n.normal));
    }
    let convexity = CheckOutcome::at_least(counts.convexity, worst, 1e-10);

    let mut cert = GeometryCertificate {
        contraction,
        idempotence,
        convexity,
        matrix_identity: None,
        matrix_symmetric: None,
        theta_hat: None,
        lions_sznitman: None,
        matrix_error: None,
    };
    let field = match build_oblique_matrix(domain, gamma, counts.matrix, seed) {
        Ok(f) => f,
        Err(e @ GeometryError::MatrixRejected { .. }) => {
            cert.matrix_error = Some(e.to_string());
            return Ok(cert);
        }
        Err(e) => return Err(e),
    };
    let d = domain.dim();
    let mut worst: f64 = 0.0;
    let mut symmetric = true;
    for x in boundary_samples(domain, counts.matrix, splitmix64(seed ^ 0x7777)) {
        let f = gamma.frame(domain, &x)?;
        let a = ObliqueMatrixField::matrix_from_frame(&f.normal, &f.gamma);
        for i in 0..d {
            let ag: f64 = (0..d).map(|j| a[i * d + j] * f.gamma[j]).sum();
            worst = worst.max((ag - f.normal[i]).abs());
            symmetric &= (0..d).all(|j| a[i * d + j] == a[j * d + i]);
        }
    }
    cert.matrix_identity = Some(CheckOutcome::at_most(counts.matrix, worst, 1e-12));
    cert.matrix_symmetric = Some(symmetric);
    cert.theta_hat = Some(field.theta_hat());
    if let Some(c0) = c0 {
        let margin = lions_sznitman_margin(&field, c0, counts.matrix, seed)?;
        cert.lions_sznitman = Some(CheckOutcome::at_least(counts.matrix, margin, 1e-10));
    }
    Ok(cert)
}
