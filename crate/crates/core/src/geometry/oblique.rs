use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{boundary_samples, dist, dot, exterior_samples, interior_samples, norm, ConvexDomain, GeometryError};

/// Reflection direction field `gamma`, defined on the boundary and extended
/// to all of `R^d` through [`ConvexDomain::boundary_anchor`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObliqueField {
    /// `gamma = n o pi`: normal reflection.
    Normal,
    /// The normal rotated by a fixed angle in the coordinate plane
    /// `(plane[0], plane[1])`.
    RotatedNormal {
        angle_deg: f64,
        #[serde(default = "default_plane")]
        plane: [usize; 2],
    },
    /// Directions tabulated at boundary points; the nearest entry wins.
    Tabulated { points: Vec<Vec<f64>>, directions: Vec<Vec<f64>> },
}

fn default_plane() -> [usize; 2] {
    [0, 1]
}

/// Boundary data at the anchor of a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub anchor: Vec<f64>,
    pub normal: Vec<f64>,
    pub gamma: Vec<f64>,
    pub nonsmooth: bool,
}

impl ObliqueField {
    pub fn check(&self, dim: usize) -> Result<(), GeometryError> {
        let bad = |m: String| Err(GeometryError::InvalidField(m));
        match self {
            ObliqueField::Normal => Ok(()),
            ObliqueField::RotatedNormal { angle_deg, plane } => {
                if !angle_deg.is_finite() {
                    return bad("rotation angle must be finite".into());
                }
                if *angle_deg != 0.0 && (plane[0] == plane[1] || plane[0] >= dim || plane[1] >= dim) {
                    return bad(format!("rotation plane {plane:?} invalid for d={dim}"));
                }
                Ok(())
            }
            ObliqueField::Tabulated { points, directions } => {
                if points.is_empty() || points.len() != directions.len() {
                    return bad("tabulated field needs matching, non-empty points and directions".into());
                }
                for (p, v) in points.iter().zip(directions) {
                    if p.len() != dim || v.len() != dim || norm(v) == 0.0 {
                        return bad("tabulated entries must be non-zero d-vectors".into());
                    }
                }
                Ok(())
            }
        }
    }

    /// `gamma` at a boundary point with known outward normal.
    pub fn direction_into(&self, anchor: &[f64], normal: &[f64], out: &mut [f64]) {
        match self {
            ObliqueField::Normal => out.copy_from_slice(normal),
            ObliqueField::RotatedNormal { angle_deg, plane } => {
                out.copy_from_slice(normal);
                if *angle_deg != 0.0 {
                    let (s, c) = angle_deg.to_radians().sin_cos();
                    let (i, j) = (plane[0], plane[1]);
                    out[i] = c * normal[i] - s * normal[j];
                    out[j] = s * normal[i] + c * normal[j];
                }
            }
            ObliqueField::Tabulated { points, directions } => {
                let k = points
                    .iter()
                    .enumerate()
                    .map(|(k, p)| (k, dist(p, anchor)))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(k, _)| k)
                    .unwrap_or(0);
                let v = &directions[k];
                let len = norm(v);
                for (o, vi) in out.iter_mut().zip(v) {
                    *o = vi / len;
                }
            }
        }
    }

    /// Anchor, normal and direction for an arbitrary point.
    pub fn frame(&self, domain: &ConvexDomain, y: &[f64]) -> Result<Frame, GeometryError> {
        let anchor = domain.boundary_anchor(y)?;
        let bn = domain.outward_normal(&anchor)?;
        let mut gamma = vec![0.0; y.len()];
        self.direction_into(&anchor, &bn.normal, &mut gamma);
        Ok(Frame { anchor, normal: bn.normal, gamma, nonsmooth: bn.nonsmooth })
    }
}

/// Acceptance thresholds for [`validate_oblique_field`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationThresholds {
    #[serde(default)]
    pub rho_min: f64,
    #[serde(default)]
    pub delta_min: f64,
}

impl Default for ValidationThresholds {
    fn default() -> Self {
        ValidationThresholds { rho_min: 0.0, delta_min: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub check: String,
    pub point: Vec<f64>,
    pub value: f64,
}

/// Result of sampling the boundary conditions on `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObliqueReport {
    /// `min <gamma(x), n(x)>` over boundary samples.
    pub rho_hat: f64,
    /// `min <pi(x), gamma(x)>` over exterior samples.
    pub delta_hat: f64,
    /// Certified lower eigenvalue of the matrix field, when built.
    pub theta_hat: Option<f64>,
    /// Largest difference quotient of `gamma` between boundary samples.
    pub lipschitz_hat: f64,
    pub violations: Vec<Violation>,
}

const MAX_VIOLATIONS: usize = 32;

/// Samples the boundary and the exterior and measures the nontangentiality
/// constant `rho_hat` and the exterior lower bound `delta_hat` of
/// `<pi(x), gamma(x)>`. Also checks `|gamma| = 1` on the boundary to 1e-9.
///
/// Fails with [`GeometryError::ValidationFailed`] when either constant is not
/// positive, falls below its threshold, or a unit-length check fails. The
/// failure carries the full report, worst sample first.
pub fn validate_oblique_field(
    domain: &ConvexDomain,
    gamma: &ObliqueField,
    samples: usize,
    seed: u64,
    thresholds: ValidationThresholds,
) -> Result<ObliqueReport, GeometryError> {
    if samples == 0 {
        return Err(GeometryError::InvalidField("need at least one sample".into()));
    }
    domain.validate()?;
    gamma.check(domain.dim())?;

    let mut violations = Vec::new();
    let boundary = boundary_samples(domain, samples, seed);
    let mut rho_hat = f64::INFINITY;
    let mut rho_worst = None;
    let mut dirs = Vec::with_capacity(boundary.len());
    for x in &boundary {
        let f = gamma.frame(domain, x)?;
        let unit_err = (norm(&f.gamma) - 1.0).abs();
        if unit_err > 1e-9 {
            violations.push(Violation { check: "unit_norm".into(), point: x.clone(), value: norm(&f.gamma) });
        }
        let rho = dot(&f.gamma, &f.normal);
        if rho < rho_hat {
            rho_hat = rho;
            rho_worst = Some(x.clone());
        }
        dirs.push(f.gamma);
    }

    let mut delta_hat = f64::INFINITY;
    let mut delta_worst = None;
    for x in exterior_samples(domain, samples, seed) {
        let f = gamma.frame(domain, &x)?;
        let v = dot(&f.anchor, &f.gamma);
        if v < delta_hat {
            delta_hat = v;
            delta_worst = Some(x);
        }
    }

    let mut lipschitz_hat: f64 = 0.0;
    for a in 0..boundary.len() {
        for b in (a + 1)..boundary.len() {
            let dx = dist(&boundary[a], &boundary[b]);
            if dx > 1e-9 {
                lipschitz_hat = lipschitz_hat.max(dist(&dirs[a], &dirs[b]) / dx);
            }
        }
    }

    if rho_hat <= 0.0 || rho_hat < thresholds.rho_min {
        violations.push(Violation { check: "rho".into(), point: rho_worst.unwrap_or_default(), value: rho_hat });
    }
    if delta_hat <= 0.0 || delta_hat < thresholds.delta_min {
        violations.push(Violation {
            check: "delta".into(),
            point: delta_worst.unwrap_or_default(),
            value: delta_hat,
        });
    }
    violations.sort_by(|a, b| a.value.total_cmp(&b.value));
    violations.truncate(MAX_VIOLATIONS);

    let report = ObliqueReport { rho_hat, delta_hat, theta_hat: None, lipschitz_hat, violations };
    if report.violations.is_empty() {
        Ok(report)
    } else {
        Err(GeometryError::ValidationFailed(Box::new(report)))
    }
}

/// Symmetric matrix field `a(x)` with `a(x) gamma(x) = n(x)` on the boundary
/// and a certified lower eigenvalue.
///
/// The construction is the rank-two symmetric correction
/// `a = c I + gamma m^T + m gamma^T` with `c = <n, gamma>` and
/// `m = n - c gamma`, evaluated at the boundary anchor. Its spectrum is
/// `{c - |m|, c + |m|, c, ..., c}`, so it is positive definite exactly when
/// the angle between `gamma` and `n` is below 45 degrees.
#[derive(Debug, Clone)]
pub struct ObliqueMatrixField {
    domain: ConvexDomain,
    gamma: ObliqueField,
    theta_hat: f64,
}

impl ObliqueMatrixField {
    pub fn theta_hat(&self) -> f64 {
        self.theta_hat
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &ConvexDomain {
        &self.domain
    }

    pub fn gamma(&self) -> &ObliqueField {
        &self.gamma
    }

    /// Row-major `d x d` matrix from boundary data.
    pub fn matrix_from_frame(normal: &[f64], gamma: &[f64]) -> Vec<f64> {
        let d = normal.len();
        let c = dot(normal, gamma);
        let m: Vec<f64> = normal.iter().zip(gamma).map(|(n, g)| n - c * g).collect();
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let diag = if i == j { c } else { 0.0 };
                a[i * d + j] = diag + gamma[i] * m[j] + m[i] * gamma[j];
            }
        }
        a
    }

    /// `a(x)` evaluated at the anchor of `x`.
    pub fn matrix_at(&self, x: &[f64]) -> Result<Vec<f64>, GeometryError> {
        let f = self.gamma.frame(&self.domain, x)?;
        Ok(Self::matrix_from_frame(&f.normal, &f.gamma))
    }

    /// `a(x) v`.
    pub fn apply(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>, GeometryError> {
        let a = self.matrix_at(x)?;
        let d = v.len();
        Ok((0..d).map(|i| (0..d).map(|j| a[i * d + j] * v[j]).sum()).collect())
    }
}

pub(crate) fn smallest_eigenvalue(a: &[f64], d: usize) -> f64 {
    let m = DMatrix::from_row_slice(d, d, a);
    SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Builds the matrix field and certifies `theta_hat` as the minimum of the
/// smallest eigenvalue over `samples` boundary points.
pub fn build_oblique_matrix(
    domain: &ConvexDomain,
    gamma: &ObliqueField,
    samples: usize,
    seed: u64,
) -> Result<ObliqueMatrixField, GeometryError> {
    domain.validate()?;
    gamma.check(domain.dim())?;
    let d = domain.dim();
    let mut theta_hat = f64::INFINITY;
    for x in boundary_samples(domain, samples.max(1), seed) {
        let f = gamma.frame(domain, &x)?;
        let a = ObliqueMatrixField::matrix_from_frame(&f.normal, &f.gamma);
        let theta = smallest_eigenvalue(&a, d);
        if theta <= 0.0 {
            return Err(GeometryError::MatrixRejected { point: x, theta });
        }
        theta_hat = theta_hat.min(theta);
    }
    Ok(ObliqueMatrixField { domain: domain.clone(), gamma: gamma.clone(), theta_hat })
}

/// Minimum over sampled pairs `(x on the boundary, y in the domain)` of
/// `C0 |x - y|^2 + sum_ij a_ij(x) (x_i - y_i) gamma_j(x)`.
pub fn lions_sznitman_margin(field: &ObliqueMatrixField, c0: f64, samples: usize, seed: u64) -> Result<f64, GeometryError> {
    let xs = boundary_samples(&field.domain, samples, seed);
    let ys = interior_samples(&field.domain, samples, seed);
    let mut min = f64::INFINITY;
    for (x, y) in xs.iter().zip(&ys) {
        let f = field.gamma.frame(&field.domain, x)?;
        let a = ObliqueMatrixField::matrix_from_frame(&f.normal, &f.gamma);
        let d = x.len();
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += a[i * d + j] * (x[i] - y[i]) * f.gamma[j];
            }
        }
        let r = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
        min = min.min(c0 * r + s);
    }
    Ok(min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotated(deg: f64) -> ObliqueField {
        ObliqueField::RotatedNormal { angle_deg: deg, plane: [0, 1] }
    }

    #[test]
    fn normal_field_on_unit_ball() {
        let b = ConvexDomain::unit_ball(2);
        let r = validate_oblique_field(&b, &ObliqueField::Normal, 1000, 1, ValidationThresholds::default()).unwrap();
        assert!((r.rho_hat - 1.0).abs() < 1e-9);
        assert!((r.delta_hat - 1.0).abs() < 1e-9);
        assert!(r.violations.is_empty());
    }

    #[test]
    fn eighty_degrees_fails_threshold() {
        let b = ConvexDomain::unit_ball(2);
        let th = ValidationThresholds { rho_min: 0.2, delta_min: 0.0 };
        let err = validate_oblique_field(&b, &rotated(80.0), 500, 1, th).unwrap_err();
        let GeometryError::ValidationFailed(rep) = err else { panic!("wrong error") };
        let expected = 80f64.to_radians().cos();
        assert!((expected - 0.173_648_177_666_930_4).abs() < 1e-15);
        assert!((rep.rho_hat - expected).abs() < 1e-12);
        assert_eq!(rep.violations[0].check, "rho");
    }

    #[test]
    fn identity_matrix_for_normal_field() {
        let b = ConvexDomain::unit_ball(3);
        let a = build_oblique_matrix(&b, &ObliqueField::Normal, 200, 3).unwrap();
        assert!((a.theta_hat() - 1.0).abs() < 1e-12);
        let m = a.matrix_at(&[0.0, 0.6, 0.8]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((m[i * 3 + j] - e).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn thirty_degree_matrix() {
        let n = [1.0, 0.0];
        let (s, c) = 30f64.to_radians().sin_cos();
        let g = [c, s];
        let a = ObliqueMatrixField::matrix_from_frame(&n, &g);
        // Direct multiply: a * gamma should be n.
        let ag = [a[0] * g[0] + a[1] * g[1], a[2] * g[0] + a[3] * g[1]];
        assert!((ag[0] - 1.0).abs() < 1e-14 && ag[1].abs() < 1e-14);
        // 2x2 symmetric closed form: (tr - sqrt(tr^2 - 4 det)) / 2.
        let tr = a[0] + a[3];
        let det = a[0] * a[3] - a[1] * a[2];
        let lam = 0.5 * (tr - (tr * tr - 4.0 * det).sqrt());
        assert!((lam - (c - s)).abs() < 1e-12);
        assert!((lam - 0.366_025_403_784_438_6).abs() < 1e-12);
        assert!((smallest_eigenvalue(&a, 2) - lam).abs() < 1e-12);
        assert_eq!(a[1], a[2]);
    }

    #[test]
    fn wide_angle_rejected() {
        let b = ConvexDomain::unit_ball(2);
        let err = build_oblique_matrix(&b, &rotated(50.0), 64, 0).unwrap_err();
        assert!(matches!(err, GeometryError::MatrixRejected { theta, .. } if theta < 0.0));
    }

    #[test]
    fn lions_sznitman_display_holds_with_zero_c0() {
        let b = ConvexDomain::unit_ball(2);
        let a = build_oblique_matrix(&b, &rotated(30.0), 200, 0).unwrap();
        let m = lions_sznitman_margin(&a, 0.0, 2000, 5).unwrap();
        assert!(m >= -1e-10, "{m}");
    }

    #[test]
    fn tabulated_field_uses_nearest_entry() {
        let b = ConvexDomain::unit_ball(2);
        let t = ObliqueField::Tabulated {
            points: vec![vec![1.0, 0.0], vec![-1.0, 0.0]],
            directions: vec![vec![2.0, 0.0], vec![-1.0, 0.0]],
        };
        let f = t.frame(&b, &[0.9, 0.1]).unwrap();
        assert_eq!(f.gamma, vec![1.0, 0.0]);
        assert!(t.check(3).is_err());
    }
}
