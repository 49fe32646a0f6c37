use serde::{Deserialize, Serialize};

use super::{dist, dot, norm, GeometryError};

/// Convergence tolerance for Dykstra's alternating projection.
pub const DYKSTRA_TOL: f64 = 1e-12;
/// Sweep budget for Dykstra's alternating projection.
pub const DYKSTRA_MAX_SWEEPS: usize = 10_000;
/// A face counts as active at `x` when `x` is within this distance of it.
pub const ACTIVE_TOL: f64 = 1e-9;
/// Points this close to the boundary are accepted as boundary points.
pub const BOUNDARY_TOL: f64 = 1e-9;
/// Relative slack under which a point counts as inside for projection, so
/// that projected points are fixed points despite rounding.
const ROUNDING: f64 = 4.0 * f64::EPSILON;

/// `{ x : <normal, x> <= offset }` with a unit normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Halfspace {
    fn violation(&self, y: &[f64]) -> f64 {
        dot(&self.normal, y) - self.offset
    }

    fn project_into(&self, y: &[f64], out: &mut [f64]) {
        let v = self.violation(y);
        if v > 0.0 {
            for ((o, yi), ni) in out.iter_mut().zip(y).zip(&self.normal) {
                *o = yi - v * ni;
            }
        } else {
            out.copy_from_slice(y);
        }
    }
}

/// Closed bounded convex set `O-bar` in `R^d` containing the origin in its
/// interior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConvexDomain {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Polytope { halfspaces: Vec<Halfspace> },
    Intersection { parts: Vec<ConvexDomain> },
}

/// Outward unit normal at a boundary point. At corners and edges this is the
/// normalized sum of the active face normals and `nonsmooth` is set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryNormal {
    pub normal: Vec<f64>,
    pub nonsmooth: bool,
}

impl ConvexDomain {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self, GeometryError> {
        let d = ConvexDomain::Ball { center, radius };
        d.validate()?;
        Ok(d)
    }

    pub fn unit_ball(dim: usize) -> Self {
        ConvexDomain::Ball { center: vec![0.0; dim], radius: 1.0 }
    }

    pub fn cube(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, GeometryError> {
        let d = ConvexDomain::Box { lower, upper };
        d.validate()?;
        Ok(d)
    }

    pub fn polytope(halfspaces: Vec<Halfspace>) -> Result<Self, GeometryError> {
        let d = ConvexDomain::Polytope { halfspaces };
        d.validate()?;
        Ok(d)
    }

    pub fn intersection(parts: Vec<ConvexDomain>) -> Result<Self, GeometryError> {
        let d = ConvexDomain::Intersection { parts };
        d.validate()?;
        Ok(d)
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexDomain::Ball { center, .. } => center.len(),
            ConvexDomain::Box { lower, .. } => lower.len(),
            ConvexDomain::Polytope { halfspaces } => halfspaces.first().map_or(0, |h| h.normal.len()),
            ConvexDomain::Intersection { parts } => parts.first().map_or(0, |p| p.dim()),
        }
    }

    /// Checks the structural invariants: consistent dimension, finite data,
    /// unit halfspace normals, origin in the interior, boundedness.
    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |msg: String| Err(GeometryError::InvalidDomain(msg));
        let d = self.dim();
        if d == 0 {
            return bad("dimension must be positive".into());
        }
        match self {
            ConvexDomain::Ball { center, radius } => {
                if !center.iter().all(|c| c.is_finite()) || !radius.is_finite() || *radius <= 0.0 {
                    return bad(format!("ball needs finite center and positive radius, got r={radius}"));
                }
                if norm(center) >= *radius {
                    return bad("ball must contain the origin in its interior".into());
                }
            }
            ConvexDomain::Box { lower, upper } => {
                if lower.len() != upper.len() {
                    return bad("box bounds have different lengths".into());
                }
                for (l, u) in lower.iter().zip(upper) {
                    if !l.is_finite() || !u.is_finite() {
                        return bad("box bounds must be finite".into());
                    }
                    if !(*l < 0.0 && 0.0 < *u) {
                        return bad(format!("box side [{l}, {u}] must contain 0 in its interior"));
                    }
                }
            }
            ConvexDomain::Polytope { halfspaces } => {
                if halfspaces.is_empty() {
                    return bad("polytope needs at least one halfspace".into());
                }
                for h in halfspaces {
                    if h.normal.len() != d {
                        return bad("halfspace normals have inconsistent dimension".into());
                    }
                    if !h.offset.is_finite() || !h.normal.iter().all(|v| v.is_finite()) {
                        return bad("halfspace data must be finite".into());
                    }
                    if (norm(&h.normal) - 1.0).abs() > 1e-12 {
                        return bad(format!("halfspace normal {:?} is not unit length", h.normal));
                    }
                    if h.offset <= 0.0 {
                        return bad("polytope must contain the origin in its interior".into());
                    }
                }
            }
            ConvexDomain::Intersection { parts } => {
                if parts.is_empty() {
                    return bad("intersection needs at least one part".into());
                }
                for p in parts {
                    if p.dim() != d {
                        return bad("intersection parts have inconsistent dimension".into());
                    }
                    p.validate()?;
                }
            }
        }
        // Boundedness: every coordinate direction and a fixed fan of probe
        // directions must leave the set at finite distance.
        for v in probe_directions(d) {
            let t = self.radial_extent(&v);
            if !t.is_finite() {
                return bad(format!("domain is unbounded along {v:?}"));
            }
        }
        Ok(())
    }

    fn check_point(&self, y: &[f64]) -> Result<(), GeometryError> {
        if y.len() != self.dim() {
            return Err(GeometryError::DimensionMismatch { expected: self.dim(), found: y.len() });
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite(y.to_vec()));
        }
        Ok(())
    }

    /// Membership with an absolute slack.
    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        match self {
            ConvexDomain::Ball { center, radius } => dist(y, center) <= radius + tol,
            ConvexDomain::Box { lower, upper } => y
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol),
            ConvexDomain::Polytope { halfspaces } => halfspaces.iter().all(|h| h.violation(y) <= tol),
            ConvexDomain::Intersection { parts } => parts.iter().all(|p| p.contains(y, tol)),
        }
    }

    /// Euclidean projection onto the domain.
    pub fn project(&self, y: &[f64]) -> Result<Vec<f64>, GeometryError> {
        let mut out = vec![0.0; y.len()];
        self.project_into(y, &mut out)?;
        Ok(out)
    }

    /// Euclidean projection written into `out`. Polytopes and intersections
    /// use Dykstra's alternating projection.
    pub fn project_into(&self, y: &[f64], out: &mut [f64]) -> Result<(), GeometryError> {
        self.check_point(y)?;
        self.project_unchecked(y, out)
    }

    fn project_unchecked(&self, y: &[f64], out: &mut [f64]) -> Result<(), GeometryError> {
        match self {
            ConvexDomain::Ball { center, radius } => {
                let r = dist(y, center);
                if r <= *radius * (1.0 + ROUNDING) {
                    out.copy_from_slice(y);
                } else {
                    let s = radius / r;
                    for ((o, yi), ci) in out.iter_mut().zip(y).zip(center) {
                        *o = ci + s * (yi - ci);
                    }
                }
                Ok(())
            }
            ConvexDomain::Box { lower, upper } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = y[i].clamp(lower[i], upper[i]);
                }
                Ok(())
            }
            ConvexDomain::Polytope { halfspaces } => {
                if halfspaces.iter().all(|h| h.violation(y) <= ROUNDING * h.offset.abs().max(1.0)) {
                    out.copy_from_slice(y);
                    return Ok(());
                }
                if halfspaces.len() == 1 {
                    halfspaces[0].project_into(y, out);
                    return Ok(());
                }
                dykstra(y, out, halfspaces.len(), |i, z, o| {
                    halfspaces[i].project_into(z, o);
                    Ok(())
                })
            }
            ConvexDomain::Intersection { parts } => {
                if parts.iter().all(|p| p.contains(y, 0.0)) {
                    out.copy_from_slice(y);
                    return Ok(());
                }
                if parts.len() == 1 {
                    return parts[0].project_unchecked(y, out);
                }
                dykstra(y, out, parts.len(), |i, z, o| parts[i].project_unchecked(z, o))
            }
        }
    }

    /// `|y - pi(y)|`.
    pub fn distance(&self, y: &[f64]) -> Result<f64, GeometryError> {
        let p = self.project(y)?;
        Ok(dist(y, &p))
    }

    /// `sup { t >= 0 : t v in O-bar }`; infinite along unbounded directions.
    pub fn radial_extent(&self, v: &[f64]) -> f64 {
        match self {
            ConvexDomain::Ball { center, radius } => {
                let vv = dot(v, v);
                if vv == 0.0 {
                    return f64::INFINITY;
                }
                let vc = dot(v, center);
                let cc = dot(center, center);
                let disc = vc * vc - vv * (cc - radius * radius);
                (vc + disc.max(0.0).sqrt()) / vv
            }
            ConvexDomain::Box { lower, upper } => {
                let mut t = f64::INFINITY;
                for i in 0..v.len() {
                    if v[i] > 0.0 {
                        t = t.min(upper[i] / v[i]);
                    } else if v[i] < 0.0 {
                        t = t.min(lower[i] / v[i]);
                    }
                }
                t
            }
            ConvexDomain::Polytope { halfspaces } => halfspaces
                .iter()
                .filter_map(|h| {
                    let s = dot(&h.normal, v);
                    (s > 0.0).then(|| h.offset / s)
                })
                .fold(f64::INFINITY, f64::min),
            ConvexDomain::Intersection { parts } => {
                parts.iter().map(|p| p.radial_extent(v)).fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// The boundary point that represents `y` when extending boundary
    /// quantities (normals, oblique directions, matrices) off the boundary:
    /// `pi(y)` outside the domain, the radial boundary point along `y` from
    /// the origin inside it (the `e_1` ray at the origin).
    pub fn boundary_anchor(&self, y: &[f64]) -> Result<Vec<f64>, GeometryError> {
        let p = self.project(y)?;
        if p != y {
            return Ok(p);
        }
        let mut dir = y.to_vec();
        if norm(&dir) == 0.0 {
            dir[0] = 1.0;
        }
        let t = self.radial_extent(&dir);
        Ok(dir.iter().map(|v| v * t).collect())
    }

    /// Distance from `x` to the boundary for points inside (or within
    /// tolerance of) the domain.
    fn boundary_gap(&self, x: &[f64]) -> f64 {
        match self {
            ConvexDomain::Ball { center, radius } => (dist(x, center) - radius).abs(),
            ConvexDomain::Box { lower, upper } => {
                let mut gap = f64::INFINITY;
                for i in 0..x.len() {
                    gap = gap.min((x[i] - lower[i]).abs()).min((x[i] - upper[i]).abs());
                }
                gap
            }
            ConvexDomain::Polytope { halfspaces } => {
                halfspaces.iter().map(|h| h.violation(x).abs()).fold(f64::INFINITY, f64::min)
            }
            ConvexDomain::Intersection { parts } => {
                parts.iter().map(|p| p.boundary_gap(x)).fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Outward unit normal at a boundary point `x` (within
    /// [`BOUNDARY_TOL`]).
    pub fn outward_normal(&self, x: &[f64]) -> Result<BoundaryNormal, GeometryError> {
        self.check_point(x)?;
        let gap = self.boundary_gap(x);
        if gap > BOUNDARY_TOL || !self.contains(x, BOUNDARY_TOL) {
            return Err(GeometryError::NotOnBoundary { point: x.to_vec(), gap });
        }
        let mut n = vec![0.0; x.len()];
        let faces = self.accumulate_active_normals(x, &mut n);
        let len = norm(&n);
        if faces == 0 || len == 0.0 {
            return Err(GeometryError::NotOnBoundary { point: x.to_vec(), gap });
        }
        n.iter_mut().for_each(|v| *v /= len);
        Ok(BoundaryNormal { normal: n, nonsmooth: faces > 1 })
    }

    /// Adds the unit normals of all faces active at `x` to `acc`; returns
    /// how many faces were active. Smooth parts count as one face.
    fn accumulate_active_normals(&self, x: &[f64], acc: &mut [f64]) -> usize {
        match self {
            ConvexDomain::Ball { center, radius } => {
                let r = dist(x, center);
                if (r - radius).abs() > ACTIVE_TOL || r == 0.0 {
                    return 0;
                }
                for ((a, xi), ci) in acc.iter_mut().zip(x).zip(center) {
                    *a += (xi - ci) / r;
                }
                1
            }
            ConvexDomain::Box { lower, upper } => {
                let mut k = 0;
                for i in 0..x.len() {
                    if (x[i] - upper[i]).abs() <= ACTIVE_TOL {
                        acc[i] += 1.0;
                        k += 1;
                    } else if (x[i] - lower[i]).abs() <= ACTIVE_TOL {
                        acc[i] -= 1.0;
                        k += 1;
                    }
                }
                k
            }
            ConvexDomain::Polytope { halfspaces } => {
                let mut k = 0;
                for h in halfspaces {
                    if h.violation(x).abs() <= ACTIVE_TOL {
                        for (a, ni) in acc.iter_mut().zip(&h.normal) {
                            *a += ni;
                        }
                        k += 1;
                    }
                }
                k
            }
            ConvexDomain::Intersection { parts } => {
                let mut k = 0;
                for p in parts {
                    if p.boundary_gap(x) <= ACTIVE_TOL {
                        let mut n = vec![0.0; x.len()];
                        let faces = p.accumulate_active_normals(x, &mut n);
                        let len = norm(&n);
                        if faces > 0 && len > 0.0 {
                            for (a, v) in acc.iter_mut().zip(&n) {
                                *a += v / len;
                            }
                            k += faces;
                        }
                    }
                }
                k
            }
        }
    }

    /// Normal extended off the boundary: the outward normal at
    /// [`boundary_anchor`](Self::boundary_anchor).
    pub fn normal_at(&self, y: &[f64]) -> Result<BoundaryNormal, GeometryError> {
        let anchor = self.boundary_anchor(y)?;
        self.outward_normal(&anchor)
    }

    /// Axis-aligned box enclosing the domain (exact for balls and boxes, a
    /// fan-of-directions estimate otherwise).
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            ConvexDomain::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            ConvexDomain::Box { lower, upper } => (lower.clone(), upper.clone()),
            _ => {
                let d = self.dim();
                let ext = probe_directions(d)
                    .iter()
                    .map(|v| self.radial_extent(v) * norm(v))
                    .fold(0.0, f64::max);
                (vec![-ext; d], vec![ext; d])
            }
        }
    }
}

/// Generic Dykstra alternating projection onto the intersection of `sets`
/// convex pieces, each given by its projector.
fn dykstra<F>(y: &[f64], out: &mut [f64], sets: usize, mut proj: F) -> Result<(), GeometryError>
where
    F: FnMut(usize, &[f64], &mut [f64]) -> Result<(), GeometryError>,
{
    let d = y.len();
    let mut x = y.to_vec();
    let mut incr = vec![0.0; sets * d];
    let mut z = vec![0.0; d];
    let mut next = vec![0.0; d];
    let mut residual = f64::INFINITY;
    for _ in 0..DYKSTRA_MAX_SWEEPS {
        let mut change: f64 = 0.0;
        for s in 0..sets {
            let p = &mut incr[s * d..(s + 1) * d];
            for i in 0..d {
                z[i] = x[i] + p[i];
            }
            proj(s, &z, &mut next)?;
            for i in 0..d {
                p[i] = z[i] - next[i];
                change = change.max((next[i] - x[i]).abs());
                x[i] = next[i];
            }
        }
        residual = change;
        if change <= DYKSTRA_TOL {
            out.copy_from_slice(&x);
            return Ok(());
        }
    }
    Err(GeometryError::ProjectionNotConverged { sweeps: DYKSTRA_MAX_SWEEPS, residual })
}

/// Coordinate directions, diagonals and a deterministic spread of extra
/// directions used for boundedness probing.
fn probe_directions(d: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for i in 0..d {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; d];
            e[i] = s;
            dirs.push(e);
        }
    }
    for k in 0..64u64 {
        let v: Vec<f64> = (0..d)
            .map(|i| {
                let h = super::sampling::splitmix64(k.wrapping_mul(31).wrapping_add(i as u64 + 1));
                (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
            })
            .collect();
        if norm(&v) > 1e-3 {
            dirs.push(v);
        }
    }
    dirs
}
