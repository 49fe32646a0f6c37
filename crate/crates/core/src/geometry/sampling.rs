//! Reproducible point sets on, inside and outside a convex domain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{norm, ConvexDomain};

/// SplitMix64 finalizer; a bijection on `u64`.
pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn gaussian_direction(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Low-discrepancy unit directions: alternating signs in d=1, a golden-angle
/// sequence in d=2, a Fibonacci lattice in d=3 (both with a seeded offset),
/// and seeded Gaussian directions beyond that.
fn directions(d: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    const GOLDEN: f64 = 0.618_033_988_749_894_9;
    let offset: f64 = rng.random();
    match d {
        1 => (0..count).map(|k| vec![if k % 2 == 0 { 1.0 } else { -1.0 }]).collect(),
        2 => (0..count)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * (offset + k as f64 * GOLDEN).fract();
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => (0..count)
            .map(|k| {
                let z = 1.0 - (2.0 * k as f64 + 1.0) / count as f64;
                let r = (1.0 - z * z).max(0.0).sqrt();
                let a = 2.0 * std::f64::consts::PI * (offset + k as f64 * GOLDEN).fract();
                vec![r * a.cos(), r * a.sin(), z]
            })
            .collect(),
        _ => (0..count).map(|_| gaussian_direction(rng, d)).collect(),
    }
}

/// `count` points on the boundary. Boxes are sampled face by face with
/// stratified positions; other domains along low-discrepancy rays from the
/// origin.
pub fn boundary_samples(domain: &ConvexDomain, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = domain.dim();
    if let ConvexDomain::Box { lower, upper } = domain {
        let faces = 2 * d;
        let per_face = count.div_ceil(faces).max(1);
        return (0..count)
            .map(|k| {
                let face = k % faces;
                let slot = k / faces;
                let axis = face / 2;
                let mut x = vec![0.0; d];
                for i in 0..d {
                    if i == axis {
                        x[i] = if face.is_multiple_of(2) { upper[i] } else { lower[i] };
                    } else {
                        let u: f64 = rng.random();
                        let t = if d == 2 { (slot as f64 + u) / per_face as f64 } else { u };
                        x[i] = lower[i] + t * (upper[i] - lower[i]);
                    }
                }
                x
            })
            .collect();
    }
    directions(d, count, &mut rng)
        .into_iter()
        .map(|v| {
            let t = domain.radial_extent(&v);
            v.iter().map(|c| c * t).collect()
        })
        .collect()
}

/// Points in the closed domain: boundary rays scaled by a uniform factor.
pub fn interior_samples(domain: &ConvexDomain, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x1111));
    let d = domain.dim();
    (0..count)
        .map(|_| {
            let v = gaussian_direction(&mut rng, d);
            let t = domain.radial_extent(&v);
            let s: f64 = rng.random();
            v.iter().map(|c| c * t * s).collect()
        })
        .collect()
}

/// Points strictly outside the domain. Half are pushed off boundary samples
/// along the outward normal, half are drawn from an enlarged bounding box
/// and kept when they fall outside.
pub fn exterior_samples(domain: &ConvexDomain, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x2222));
    let d = domain.dim();
    let (lo, hi) = domain.bounding_box();
    let scale = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max);
    let mut out = Vec::with_capacity(count);
    let on_boundary = boundary_samples(domain, count / 2, splitmix64(seed ^ 0x3333));
    for b in on_boundary {
        if let Ok(n) = domain.outward_normal(&b) {
            let t = scale * (0.01 + rng.random::<f64>());
            out.push(b.iter().zip(&n.normal).map(|(x, ni)| x + t * ni).collect());
        }
    }
    let mut guard = 0;
    while out.len() < count && guard < 1000 * count.max(1) {
        guard += 1;
        let x: Vec<f64> = (0..d)
            .map(|i| {
                let c = 0.5 * (lo[i] + hi[i]);
                let w = 1.5 * (hi[i] - lo[i]);
                c + w * (rng.random::<f64>() - 0.5)
            })
            .collect();
        if !domain.contains(&x, 1e-9) {
            out.push(x);
        }
    }
    out
}
