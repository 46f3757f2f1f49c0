//! Quadrature rules on discs, polydiscs and small balls in `C^n`.
//!
//! Radial directions use Gauss-Legendre, angular directions the trapezoid
//! rule (spectrally accurate for periodic integrands).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tseries::C64;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, refined by Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrates `f` on `[a, b]` with an `n`-point Gauss-Legendre rule.
pub fn integrate_interval(n: usize, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    let vals: Vec<f64> = x.iter().zip(&w).map(|(xi, wi)| wi * f(mid + half * xi)).collect();
    pairwise_sum(&vals) * half
}

/// Pairwise summation; deterministic and accurate for long sums.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

pub fn pairwise_sum_c(v: &[C64]) -> C64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum_c(&v[..mid]) + pairwise_sum_c(&v[mid..])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Disc,
    Polydisc,
    Ball,
}

/// Tensor rule over a region in `C^n` centered at `center`.
#[derive(Clone, Debug)]
pub struct Rule {
    pub nodes: Vec<Vec<C64>>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// Concatenation of two rules over disjoint pieces.
    pub fn join(mut self, other: Rule) -> Rule {
        self.nodes.extend(other.nodes);
        self.weights.extend(other.weights);
        self
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `Σ w_i f(node_i)` with pairwise summation.
    pub fn integrate(&self, f: impl Fn(&[C64]) -> C64 + Sync) -> C64 {
        use rayon::prelude::*;
        let vals: Vec<C64> = self
            .nodes
            .par_iter()
            .zip(&self.weights)
            .map(|(x, w)| f(x) * *w)
            .collect();
        pairwise_sum_c(&vals)
    }
}

/// Polar rule on a disc in `C`: `nr` radial Gauss-Legendre nodes times
/// `nt` equispaced angles.
pub fn disc_rule(center: C64, radius: f64, nr: usize, nt: usize) -> Rule {
    annulus_rule(center, 0.0, radius, nr, nt)
}

/// Polar rule on `r0 <= |z - center| <= r1`.
pub fn annulus_rule(center: C64, r0: f64, r1: f64, nr: usize, nt: usize) -> Rule {
    let (x, w) = gauss_legendre(nr);
    let dt = 2.0 * PI / nt as f64;
    let half = 0.5 * (r1 - r0);
    let mut nodes = Vec::with_capacity(nr * nt);
    let mut weights = Vec::with_capacity(nr * nt);
    for (xi, wi) in x.iter().zip(&w) {
        let r = r0 + half * (xi + 1.0);
        let wr = half * wi * r * dt;
        for k in 0..nt {
            let t = dt * k as f64;
            nodes.push(vec![center + C64::from_polar(r, t)]);
            weights.push(wr);
        }
    }
    Rule { nodes, weights }
}

/// Rule for `shape` with the given radius around `center` in `C^n`.
pub fn region_rule(shape: Shape, center: &[C64], radius: f64, nr: usize, nt: usize) -> Result<Rule> {
    let n = center.len();
    match (shape, n) {
        (_, 0) => Err(Error::Unsupported("zero-dimensional region".into())),
        (Shape::Disc, 1) | (Shape::Polydisc, 1) | (Shape::Ball, 1) => Ok(disc_rule(center[0], radius, nr, nt)),
        (Shape::Disc, _) => Err(Error::Unsupported(format!("disc shape needs n = 1, got n = {n}"))),
        (Shape::Polydisc, _) => {
            let factors: Vec<Rule> = center.iter().map(|&c| disc_rule(c, radius, nr, nt)).collect();
            let mut rule = Rule {
                nodes: vec![vec![]],
                weights: vec![1.0],
            };
            for f in &factors {
                let mut nodes = Vec::with_capacity(rule.len() * f.len());
                let mut weights = Vec::with_capacity(rule.len() * f.len());
                for (a, wa) in rule.nodes.iter().zip(&rule.weights) {
                    for (b, wb) in f.nodes.iter().zip(&f.weights) {
                        let mut p = a.clone();
                        p.extend_from_slice(b);
                        nodes.push(p);
                        weights.push(wa * wb);
                    }
                }
                rule = Rule { nodes, weights };
            }
            Ok(rule)
        }
        (Shape::Ball, 2) => Ok(ball2_rule(center, radius, nr, nt)),
        (Shape::Ball, _) => Err(Error::Unsupported(format!(
            "ball quadrature implemented for n <= 2, got n = {n}"
        ))),
    }
}

/// Ball in `C^2` in Hopf coordinates
/// `z1 = r cos(e) e^{i s}`, `z2 = r sin(e) e^{i t}`,
/// volume element `r^3 sin(e) cos(e) dr de ds dt`.
fn ball2_rule(center: &[C64], radius: f64, nr: usize, nt: usize) -> Rule {
    let (x, w) = gauss_legendre(nr);
    let ne = nr.max(4);
    let (xe, we) = gauss_legendre(ne);
    let dt = 2.0 * PI / nt as f64;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (xi, wi) in x.iter().zip(&w) {
        let r = 0.5 * radius * (xi + 1.0);
        let wr = 0.5 * radius * wi * r.powi(3);
        for (ei, wei) in xe.iter().zip(&we) {
            let e = 0.25 * PI * (ei + 1.0);
            let wee = 0.25 * PI * wei * e.sin() * e.cos();
            for a in 0..nt {
                for b in 0..nt {
                    let s = dt * a as f64;
                    let t = dt * b as f64;
                    nodes.push(vec![
                        center[0] + C64::from_polar(r * e.cos(), s),
                        center[1] + C64::from_polar(r * e.sin(), t),
                    ]);
                    weights.push(wr * wee * dt * dt);
                }
            }
        }
    }
    Rule { nodes, weights }
}
