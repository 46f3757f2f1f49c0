//! The asymptotic kernel `K(x, ȳ) = h^{-n} e^{2Ψ(x, ȳ)/h} a(x, ȳ; h)` and
//! the operator `Π̃u(x) = ∫_V K(x, ȳ) u(y) e^{-2Φ(y)/h} L(dy)`.
//!
//! Projections are computed in weighted form,
//! `Π̃u(x) e^{-Φ(x)/h} = ∫ h^{-n} e^{(2Ψ(x,ȳ) - Φ(x) - Φ(y))/h} a u(y) e^{-Φ(y)/h}`,
//! whose exponent has real part `<= 0` near the diagonal.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amplitude::{self, Amplitude};
use crate::error::{Error, Result};
use crate::quadrature::{self, Rule, Shape};
use crate::tseries::{CompiledSeries, TruncatedSeries, C64};
use crate::weight::{Polarization, Weight};

/// Region `V` or `U` together with its quadrature resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub shape: Shape,
    pub center: Vec<C64>,
    pub radius: f64,
    /// Radial Gauss-Legendre nodes.
    pub nr: usize,
    /// Angular trapezoid nodes.
    pub nt: usize,
}

impl DomainSpec {
    pub fn disc(center: C64, radius: f64, nr: usize, nt: usize) -> Self {
        DomainSpec {
            shape: Shape::Disc,
            center: vec![center],
            radius,
            nr,
            nt,
        }
    }

    pub fn rule(&self) -> Result<Rule> {
        quadrature::region_rule(self.shape, &self.center, self.radius, self.nr, self.nt)
    }

    /// Same region with twice the nodes in each direction.
    pub fn doubled(&self) -> Self {
        DomainSpec {
            nr: 2 * self.nr,
            nt: 2 * self.nt,
            ..self.clone()
        }
    }

    pub fn check_inside(&self, w: &Weight) -> Result<()> {
        let offset: f64 = self
            .center
            .iter()
            .zip(w.base())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let reach = match self.shape {
            Shape::Polydisc => offset + self.radius * (self.center.len() as f64).sqrt(),
            _ => offset + self.radius,
        };
        if reach > w.trust_radius() {
            return Err(Error::ConfigInvalid(format!(
                "region reaches {reach} beyond the trust radius {}",
                w.trust_radius()
            )));
        }
        Ok(())
    }
}

/// Anything that evaluates `K(x, ȳ)`.
pub trait Kernel: Sync {
    fn eval(&self, x: &[C64], y: &[C64]) -> C64;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMode {
    /// Cutoff `K = min(N, 1/(C e h))` from the growth constant.
    Realized,
    /// All orders `0..=k`.
    FixedOrder(usize),
}

#[derive(Clone, Debug)]
pub struct KernelEvaluator {
    n: usize,
    base: Vec<C64>,
    h: f64,
    psi: CompiledSeries,
    amp: CompiledSeries,
    cutoff: usize,
    mode: KernelMode,
}

impl KernelEvaluator {
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Highest amplitude order summed.
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn mode(&self) -> KernelMode {
        self.mode
    }

    fn coords(&self, x: &[C64], y: &[C64]) -> Vec<C64> {
        let mut p: Vec<C64> = x.iter().zip(&self.base).map(|(a, b)| a - b).collect();
        p.extend(y.iter().zip(&self.base).map(|(a, b)| (a - b).conj()));
        p
    }

    /// `(Ψ(x, ȳ), a(x, ȳ))`.
    pub fn parts(&self, x: &[C64], y: &[C64]) -> (C64, C64) {
        let p = self.coords(x, y);
        (self.psi.eval(&p), self.amp.eval(&p))
    }

    /// `K(x, ȳ) e^{-(Φ(x) + Φ(y))/h}` given `Φ(x)` and `Φ(y)`.
    pub fn weighted(&self, x: &[C64], y: &[C64], phi_x: f64, phi_y: f64) -> C64 {
        let (psi, a) = self.parts(x, y);
        let e = (psi * 2.0 - phi_x - phi_y) / self.h;
        e.exp() * a * self.h.powi(-(self.n as i32))
    }
}

/// `K(x, ·)` for a fixed `x`, as polynomials in `η = ȳ - x̄₀`.
pub(crate) struct KernelRow {
    psi: CompiledSeries,
    amp: CompiledSeries,
    h: f64,
    norm: f64,
}

impl KernelRow {
    /// `K(x, ȳ) e^{-(Φ(x) + Φ(y))/h}` with `eta = ȳ - x̄₀`.
    fn weighted(&self, eta: &[C64], phi_x: f64, phi_y: f64) -> C64 {
        let e = (self.psi.eval(eta) * 2.0 - phi_x - phi_y) / self.h;
        e.exp() * self.amp.eval(eta) * self.norm
    }
}

impl KernelEvaluator {
    pub(crate) fn row(&self, x: &[C64]) -> KernelRow {
        let xi: Vec<C64> = x.iter().zip(&self.base).map(|(a, b)| a - b).collect();
        KernelRow {
            psi: self.psi.partial(&xi),
            amp: self.amp.partial(&xi),
            h: self.h,
            norm: self.h.powi(-(self.n as i32)),
        }
    }

    pub(crate) fn eta(&self, y: &[C64]) -> Vec<C64> {
        y.iter().zip(&self.base).map(|(a, b)| (a - b).conj()).collect()
    }
}

impl Kernel for KernelEvaluator {
    fn eval(&self, x: &[C64], y: &[C64]) -> C64 {
        let (psi, a) = self.parts(x, y);
        (psi * (2.0 / self.h)).exp() * a * self.h.powi(-(self.n as i32))
    }
}

/// Kernel with the realized amplitude; requires a growth estimate.
pub fn assemble_kernel(p: &Polarization, a: &Amplitude, h: f64) -> Result<KernelEvaluator> {
    assemble_kernel_with(p, a, h, KernelMode::Realized)
}

pub fn assemble_kernel_with(p: &Polarization, a: &Amplitude, h: f64, mode: KernelMode) -> Result<KernelEvaluator> {
    if !(h > 0.0) {
        return Err(Error::ConfigInvalid(format!("h must be positive, got {h}")));
    }
    let realized = match mode {
        KernelMode::Realized => amplitude::realize(a, h)?,
        KernelMode::FixedOrder(k) => amplitude::realize_to(a, h, k),
    };
    Ok(KernelEvaluator {
        n: p.n(),
        base: p.base().to_vec(),
        h,
        psi: p.psi().compile(),
        amp: realized.series.compile(),
        cutoff: realized.cutoff,
        mode,
    })
}

/// Holomorphic test function given as a polynomial in absolute coordinates.
pub fn holomorphic(u: &TruncatedSeries) -> impl Fn(&[C64]) -> C64 + Sync + '_ {
    let c = u.compile();
    move |x| c.eval(x)
}

/// Quadrature data at the nodes of `V`: `(ȳ - x̄₀, Φ(y), w_y u(y) e^{-Φ(y)/h})`.
fn node_data(
    k: &KernelEvaluator,
    w: &Weight,
    rule: &Rule,
    u: &(dyn Fn(&[C64]) -> C64 + Sync),
) -> Vec<(Vec<C64>, f64, C64)> {
    let h = k.h();
    rule.nodes
        .par_iter()
        .zip(&rule.weights)
        .map(|(y, wy)| {
            let phi = w.value(y);
            (k.eta(y), phi, u(y) * (*wy * (-phi / h).exp()))
        })
        .collect()
}

/// `Π̃u(x) e^{-Φ(x)/h}` at each point.
fn project_weighted(k: &KernelEvaluator, w: &Weight, data: &[(Vec<C64>, f64, C64)], xs: &[Vec<C64>]) -> Vec<C64> {
    xs.par_iter()
        .map(|x| {
            let phi_x = w.value(x);
            let row = k.row(x);
            let terms: Vec<C64> = data
                .iter()
                .map(|(eta, phi_y, c)| row.weighted(eta, phi_x, *phi_y) * c)
                .collect();
            quadrature::pairwise_sum_c(&terms)
        })
        .collect()
}

/// `Π̃u` at the evaluation points. The computation is repeated with doubled
/// nodes; a weighted change above `10 tol` is reported as under-resolved.
pub fn apply_projection(
    k: &KernelEvaluator,
    u: &(dyn Fn(&[C64]) -> C64 + Sync),
    w: &Weight,
    dom: &DomainSpec,
    eval_pts: &[Vec<C64>],
    tol: f64,
) -> Result<Vec<C64>> {
    let h = k.h();
    let coarse = project_weighted(k, w, &node_data(k, w, &dom.rule()?, u), eval_pts);
    let fine = project_weighted(k, w, &node_data(k, w, &dom.doubled().rule()?, u), eval_pts);
    let change = coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    if change > 10.0 * tol {
        return Err(Error::QuadratureUnderresolved { change, tolerance: tol });
    }
    Ok(fine
        .iter()
        .zip(eval_pts)
        .map(|(v, x)| v * (w.value(x) / h).exp())
        .collect())
}

/// `‖Π̃u - u‖_{U} / ‖u‖_{V}` in the norm `∫ |·|² e^{-2Φ/h} L(dx)`.
pub fn reproducing_error(
    k: &KernelEvaluator,
    u: &(dyn Fn(&[C64]) -> C64 + Sync),
    w: &Weight,
    inner: &DomainSpec,
    outer: &DomainSpec,
) -> Result<f64> {
    if inner.radius >= outer.radius {
        return Err(Error::ConfigInvalid(format!(
            "U radius {} must be smaller than V radius {}",
            inner.radius, outer.radius
        )));
    }
    let h = k.h();
    let vrule = outer.rule()?;
    let data = node_data(k, w, &vrule, u);
    let norm2: f64 = quadrature::pairwise_sum(
        &data
            .iter()
            .zip(&vrule.weights)
            .map(|((_, _, c), wy)| c.norm_sqr() / wy)
            .collect::<Vec<_>>(),
    );
    if norm2 == 0.0 {
        return Ok(0.0);
    }
    let urule = inner.rule()?;
    let proj = project_weighted(k, w, &data, &urule.nodes);
    let err2: Vec<f64> = urule
        .nodes
        .iter()
        .zip(&urule.weights)
        .zip(&proj)
        .map(|((x, wx), p)| {
            let ux = u(x) * (-w.value(x) / h).exp();
            wx * (p - ux).norm_sqr()
        })
        .collect();
    Ok((quadrature::pairwise_sum(&err2) / norm2).sqrt())
}

/// Least-squares fit of `log err = α - β/h`, with a log-log model
/// `log err = c + s log h` reported for comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub alpha: f64,
    pub beta: f64,
    pub r2: f64,
    pub loglog_slope: f64,
    pub loglog_r2: f64,
    pub npoints: usize,
}

/// Errors at or below this are treated as the numerical floor.
pub const FIT_FLOOR: f64 = 1e-12;

fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let ssr: f64 = xs.iter().zip(ys).map(|(x, y)| (y - icpt - slope * x).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 };
    (icpt, slope, r2)
}

pub fn decay_fit(points: &[(f64, f64)]) -> Result<DecayFit> {
    if points.len() < 4 {
        return Err(Error::DegenerateFit(format!(
            "need at least 4 points, got {}",
            points.len()
        )));
    }
    if let Some(p) = points.iter().find(|p| !(p.0 > 0.0) || !(p.1 > 0.0) || !p.1.is_finite()) {
        return Err(Error::DegenerateFit(format!("non-positive entry {p:?}")));
    }
    if points.iter().all(|p| p.1 <= FIT_FLOOR) {
        return Err(Error::DegenerateFit(format!(
            "all errors at or below the floor {FIT_FLOOR:.0e}"
        )));
    }
    let logs: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let spread =
        logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - logs.iter().cloned().fold(f64::INFINITY, f64::min);
    if spread < 1e-9 {
        return Err(Error::DegenerateFit("errors are flat across the grid".into()));
    }
    let inv: Vec<f64> = points.iter().map(|p| 1.0 / p.0).collect();
    let (alpha, slope, r2) = linear_fit(&inv, &logs);
    let logh: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let (_, loglog_slope, loglog_r2) = linear_fit(&logh, &logs);
    Ok(DecayFit {
        alpha,
        beta: -slope,
        r2,
        loglog_slope,
        loglog_r2,
        npoints: points.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub errors: Vec<f64>,
    pub max: f64,
    pub median: f64,
}

pub(crate) fn stats(mut errors: Vec<f64>) -> ErrorStats {
    let mut sorted = errors.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if sorted.is_empty() {
        0.0
    } else if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let max = sorted.last().copied().unwrap_or(0.0);
    errors.shrink_to_fit();
    ErrorStats { errors, max, median }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amplitude::{estimate_growth, solve_amplitude};
    use crate::phase::build_phase;
    use crate::tseries::MultiIndex;
    use crate::weight::{examples, polarize, validate_weight};
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn gaussian(trust: f64) -> (Weight, Polarization, Amplitude) {
        let w = validate_weight(&examples::quadratic(0.5, 12), &[c(0.0, 0.0)], trust).unwrap();
        let p = polarize(&w).unwrap();
        let pd = build_phase(&p).unwrap();
        let mut a = solve_amplitude(&pd, 4).unwrap();
        a.growth = Some(estimate_growth(&a, 0.5, 64, 1));
        (w, p, a)
    }

    fn mono(e: u16) -> TruncatedSeries {
        TruncatedSeries::monomial(1, e as u32, &MultiIndex::from_slice(&[e]), c(1.0, 0.0))
    }

    #[test]
    fn gaussian_kernel_values() {
        let (_, p, a) = gaussian(2.0);
        let k = assemble_kernel(&p, &a, 0.1).unwrap();
        let o = [c(0.0, 0.0)];
        assert!((k.eval(&o, &o) - c(1.0 / (PI * 0.1), 0.0)).norm() < 1e-12);
        let x = [c(0.3, 0.0)];
        let want = (0.09f64 / 0.1).exp() / (PI * 0.1);
        assert!((k.eval(&x, &x).re - want).abs() < 1e-12 * want);
        let w2 = validate_weight(&examples::quadratic(1.0, 12), &o, 2.0).unwrap();
        let p2 = polarize(&w2).unwrap();
        let mut a2 = solve_amplitude(&build_phase(&p2).unwrap(), 4).unwrap();
        a2.growth = Some(estimate_growth(&a2, 0.5, 64, 1));
        let k2 = assemble_kernel(&p2, &a2, 0.1).unwrap();
        assert!((k2.eval(&o, &o).re - 2.0 / (PI * 0.1)).abs() < 1e-12);
    }

    #[test]
    fn gaussian_projection_examples() {
        let (w, p, a) = gaussian(2.0);
        let k = assemble_kernel(&p, &a, 0.1).unwrap();
        let dom = DomainSpec::disc(c(0.0, 0.0), 1.0, 48, 64);
        let one = mono(0);
        let v = apply_projection(&k, &holomorphic(&one), &w, &dom, &[vec![c(0.0, 0.0)]], 1e-6).unwrap();
        assert!((v[0] - c(1.0, 0.0)).norm() < 1e-4);
        let y = mono(1);
        let pts = vec![vec![c(0.0, 0.0)], vec![c(0.2, 0.0)]];
        let v = apply_projection(&k, &holomorphic(&y), &w, &dom, &pts, 1e-6).unwrap();
        assert!(v[0].norm() < 1e-12);
        assert!((v[1] - c(0.2, 0.0)).norm() < 1e-4);
    }

    #[test]
    fn under_resolution_is_detected() {
        let (w, p, a) = gaussian(2.0);
        let k = assemble_kernel(&p, &a, 0.02).unwrap();
        let dom = DomainSpec::disc(c(0.0, 0.0), 1.0, 3, 4);
        let y3 = mono(3);
        let r = apply_projection(&k, &holomorphic(&y3), &w, &dom, &[vec![c(0.3, 0.1)]], 1e-8);
        assert!(matches!(r, Err(Error::QuadratureUnderresolved { .. })));
    }

    #[test]
    fn projection_is_linear() {
        let (w, p, a) = gaussian(2.0);
        let k = assemble_kernel(&p, &a, 0.1).unwrap();
        let dom = DomainSpec::disc(c(0.0, 0.0), 1.0, 24, 32);
        let pts = vec![vec![c(0.1, 0.2)], vec![c(-0.3, 0.05)]];
        let f = mono(2);
        let g = mono(1);
        let comb = f.pad_to(2).scale(c(2.0, -1.0)).add(&g.pad_to(2).scale_re(3.0)).unwrap();
        let vf = apply_projection(&k, &holomorphic(&f), &w, &dom, &pts, 1.0).unwrap();
        let vg = apply_projection(&k, &holomorphic(&g), &w, &dom, &pts, 1.0).unwrap();
        let vc = apply_projection(&k, &holomorphic(&comb), &w, &dom, &pts, 1.0).unwrap();
        for i in 0..2 {
            let lin = vf[i] * c(2.0, -1.0) + vg[i] * 3.0;
            assert!((vc[i] - lin).norm() < 1e-13 * (1.0 + lin.norm()));
        }
    }

    #[test]
    fn gaussian_reproducing_error() {
        let (w, p, a) = gaussian(2.0);
        let u_dom = DomainSpec::disc(c(0.0, 0.0), 0.5, 24, 32);
        let v_dom = DomainSpec::disc(c(0.0, 0.0), 1.0, 48, 64);
        let one = mono(0);
        let e1 = reproducing_error(
            &assemble_kernel(&p, &a, 0.1).unwrap(),
            &holomorphic(&one),
            &w,
            &u_dom,
            &v_dom,
        )
        .unwrap();
        let e2 = reproducing_error(
            &assemble_kernel(&p, &a, 0.05).unwrap(),
            &holomorphic(&one),
            &w,
            &u_dom,
            &v_dom,
        )
        .unwrap();
        assert!(e1 <= 1e-3, "{e1}");
        assert!(e2 < e1);
        let zero = TruncatedSeries::zero(1, 0);
        let e0 = reproducing_error(
            &assemble_kernel(&p, &a, 0.1).unwrap(),
            &holomorphic(&zero),
            &w,
            &u_dom,
            &v_dom,
        )
        .unwrap();
        assert_eq!(e0, 0.0);
    }

    #[test]
    fn decay_fit_examples() {
        let hs = [0.2f64, 0.15, 0.1, 0.05];
        let exact: Vec<(f64, f64)> = hs.iter().map(|&h| (h, (-0.5f64 / h).exp())).collect();
        let f = decay_fit(&exact).unwrap();
        assert!((f.beta - 0.5).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);

        let poly: Vec<(f64, f64)> = [0.2, 0.15, 0.1, 0.07, 0.05].iter().map(|&h| (h, h * h)).collect();
        let f = decay_fit(&poly).unwrap();
        assert!(f.r2 < f.loglog_r2);
        assert!((f.loglog_slope - 2.0).abs() < 1e-12);

        let flat: Vec<(f64, f64)> = hs.iter().map(|&h| (h, 1e-15)).collect();
        assert!(matches!(decay_fit(&flat), Err(Error::DegenerateFit(_))));
        assert!(matches!(decay_fit(&exact[..3]), Err(Error::DegenerateFit(_))));
    }
}
