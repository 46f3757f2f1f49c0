//! Deterministic low-discrepancy sampling of balls in `C^n`.
//!
//! Points come from the additive recurrence `frac(s + k α)` with the
//! generalized golden-ratio vector `α` (a rank-1 lattice), randomly shifted
//! by a seeded ChaCha stream (Cranley-Patterson rotation).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tseries::C64;

pub const DEFAULT_SEED: u64 = 0x5eed_b1e5;

pub struct LatticeSequence {
    alpha: Vec<f64>,
    shift: Vec<f64>,
    k: u64,
}

impl LatticeSequence {
    pub fn new(dim: usize, seed: u64) -> Self {
        // phi_d is the positive root of x^{d+1} = x + 1.
        let mut phi = 2.0f64;
        for _ in 0..64 {
            phi = (1.0 + phi).powf(1.0 / (dim as f64 + 1.0));
        }
        let alpha = (1..=dim).map(|i| (1.0 / phi.powi(i as i32)).fract()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift = (0..dim).map(|_| rng.gen::<f64>()).collect();
        LatticeSequence { alpha, shift, k: 0 }
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        self.k += 1;
        let k = self.k as f64;
        self.alpha
            .iter()
            .zip(&self.shift)
            .map(|(a, s)| (s + k * a).fract())
            .collect()
    }
}

fn cube_to_complex(u: &[f64]) -> Vec<C64> {
    u.chunks(2)
        .map(|c| C64::new(2.0 * c[0] - 1.0, 2.0 * c[1] - 1.0))
        .collect()
}

fn norm(z: &[C64]) -> f64 {
    z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// `count` points of the ball `|z - center| < radius` in `C^n`.
pub fn ball_points(center: &[C64], radius: f64, count: usize, seed: u64) -> Vec<Vec<C64>> {
    let n = center.len();
    let mut seq = LatticeSequence::new(2 * n, seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let z = cube_to_complex(&seq.next_point());
        if norm(&z) < 1.0 {
            out.push(z.iter().zip(center).map(|(a, c)| c + a * radius).collect());
        }
    }
    out
}

/// `count` pairs `(x, y)`, each in the ball around `center`.
pub fn ball_pairs(center: &[C64], radius: f64, count: usize, seed: u64) -> Vec<(Vec<C64>, Vec<C64>)> {
    let n = center.len();
    let mut seq = LatticeSequence::new(4 * n, seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p = seq.next_point();
        let x = cube_to_complex(&p[..2 * n]);
        let y = cube_to_complex(&p[2 * n..]);
        if norm(&x) < 1.0 && norm(&y) < 1.0 {
            let map = |z: Vec<C64>| -> Vec<C64> { z.iter().zip(center).map(|(a, c)| c + a * radius).collect() };
            out.push((map(x), map(y)));
        }
    }
    out
}

/// Points of the distinguished boundary `|z_j - c_j| = radius` of a polydisc
/// in `C^m`, on a lattice of angles.
pub fn torus_points(center: &[C64], radius: f64, count: usize, seed: u64) -> Vec<Vec<C64>> {
    let m = center.len();
    let mut seq = LatticeSequence::new(m, seed);
    (0..count)
        .map(|_| {
            seq.next_point()
                .iter()
                .zip(center)
                .map(|(t, c)| c + C64::from_polar(radius, 2.0 * std::f64::consts::PI * t))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_are_inside_and_deterministic() {
        let c = [C64::new(0.1, 0.2)];
        let a = ball_points(&c, 0.3, 500, 7);
        let b = ball_points(&c, 0.3, 500, 7);
        assert_eq!(a, b);
        assert!(a.iter().all(|p| (p[0] - c[0]).norm() < 0.3));
        let other = ball_points(&c, 0.3, 500, 8);
        assert_ne!(a, other);
    }

    #[test]
    fn lattice_fills_the_disc() {
        let pts = ball_points(&[C64::new(0.0, 0.0)], 1.0, 4000, 1);
        let inner = pts.iter().filter(|p| p[0].norm() < 0.5).count() as f64;
        assert!((inner / 4000.0 - 0.25).abs() < 0.01);
    }
}
