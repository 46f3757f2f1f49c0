//! Reference computations that do not go through the symbol calculus:
//! brute-force Bergman kernels, direct contour integrals and sampled
//! inequalities.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amplitude::formal_expansion;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::phase::{build_good_contour, inversion_ratio, verify_amplitude_contour, MarginReport, PhaseData};
use crate::projector::{self, DomainSpec, ErrorStats, Kernel};
use crate::quadrature::{self, Rule};
use crate::sampling;
use crate::tseries::{HGradedSeries, MultiIndex, TruncatedSeries, C64};
use crate::weight::{Polarization, Weight};

/// Largest accepted condition number of the scaled Gram matrix.
pub const MAX_CONDITION: f64 = 1e12;

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

fn dist2(x: &[C64], y: &[C64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).norm_sqr()).sum()
}

/// All exponents `α ∈ N^n` with `|α| <= d`, graded by degree.
fn exponents(n: usize, d: usize) -> Vec<MultiIndex> {
    let mut out = vec![MultiIndex::zero(n)];
    let mut layer = vec![MultiIndex::zero(n)];
    for _ in 0..d {
        let mut next: Vec<MultiIndex> = Vec::new();
        for a in &layer {
            for j in 0..n {
                let b = a.plus(&MultiIndex::unit(n, j));
                if !next.contains(&b) {
                    next.push(b);
                }
            }
        }
        next.sort();
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

fn monomials(exps: &[MultiIndex], center: &[C64], x: &[C64]) -> Vec<C64> {
    let d: Vec<C64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
    exps.iter()
        .map(|e| {
            e.exponents()
                .iter()
                .zip(&d)
                .fold(C64::new(1.0, 0.0), |acc, (&k, z)| acc * z.powu(k as u32))
        })
        .collect()
}

/// Reproducing kernel of the span of monomials of degree `<= D` in the
/// discretized `L²(V, e^{-2Φ/h})`.
///
/// With `G` the Gram matrix and `S = diag(G_ii^{-1/2})`, the scaled matrix
/// `S G S = L L*` is factored, and `K(x, ȳ) = Σ z_i(x) conj(z_i(y))` with
/// `z(x) = L⁻¹ S m(x)`.
#[derive(Clone, Debug)]
pub struct GramKernel {
    degree: usize,
    h: f64,
    center: Vec<C64>,
    exps: Vec<MultiIndex>,
    gram: CMatrix,
    scale: Vec<f64>,
    factor: CMatrix,
    condition: f64,
}

impl GramKernel {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.exps.len()
    }

    /// Eigenvalue ratio of the scaled Gram matrix.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn gram(&self) -> &CMatrix {
        &self.gram
    }

    fn features(&self, x: &[C64]) -> DVector<C64> {
        let m = monomials(&self.exps, &self.center, x);
        let v = DVector::from_iterator(m.len(), m.iter().zip(&self.scale).map(|(a, s)| a * *s));
        self.factor
            .solve_lower_triangular(&v)
            .expect("factor has a positive diagonal")
    }

    /// Gram matrix as CSV, one row per line, `re+imi` entries.
    pub fn gram_csv(&self) -> String {
        let mut s = String::new();
        for i in 0..self.gram.nrows() {
            let row: Vec<String> = (0..self.gram.ncols())
                .map(|j| {
                    let c = self.gram[(i, j)];
                    format!("{:e}{:+e}i", c.re, c.im)
                })
                .collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

impl Kernel for GramKernel {
    fn eval(&self, x: &[C64], y: &[C64]) -> C64 {
        let zx = self.features(x);
        let zy = self.features(y);
        zx.iter().zip(zy.iter()).map(|(a, b)| a * b.conj()).sum()
    }
}

fn angular_nodes_ok(dom: &DomainSpec, d: usize) -> Result<()> {
    if dom.nt < 4 * d.max(1) {
        return Err(Error::ConfigInvalid(format!(
            "basis degree {d} needs at least {} angular nodes, got {}",
            4 * d.max(1),
            dom.nt
        )));
    }
    Ok(())
}

pub fn gram_bergman(w: &Weight, dom: &DomainSpec, d: usize, h: f64) -> Result<GramKernel> {
    angular_nodes_ok(dom, d)?;
    let rule = dom.rule()?;
    gram_from_rule(w, &rule, &dom.center, d, h)
}

fn gram_from_rule(w: &Weight, rule: &Rule, center: &[C64], d: usize, h: f64) -> Result<GramKernel> {
    let n = w.n();
    let exps = exponents(n, d);
    let m = exps.len();
    let phi0 = w.value(w.base());
    // rows[node] = sqrt(w_y e^{-2(Φ(y) - Φ(x₀))/h}) m(y)
    let rows: Vec<Vec<C64>> = rule
        .nodes
        .par_iter()
        .zip(&rule.weights)
        .map(|(y, wy)| {
            let s = (wy * (-2.0 * (w.value(y) - phi0) / h).exp()).sqrt();
            monomials(&exps, center, y).into_iter().map(|v| v * s).collect()
        })
        .collect();
    let upper: Vec<(usize, usize)> = (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect();
    let entries: Vec<C64> = upper
        .par_iter()
        .map(|&(i, j)| {
            let terms: Vec<C64> = rows.iter().map(|r| r[i].conj() * r[j]).collect();
            quadrature::pairwise_sum_c(&terms)
        })
        .collect();
    // G_ij = <m_j, m_i>, so K(x, ȳ) = m(x)ᵀ G⁻¹ conj(m(y)) in this layout.
    let mut gram = CMatrix::zeros(m, m);
    for (&(i, j), v) in upper.iter().zip(&entries) {
        gram[(i, j)] = *v;
        gram[(j, i)] = v.conj();
    }
    for i in 0..m {
        gram[(i, i)] = C64::new(gram[(i, i)].re, 0.0);
    }
    let scale: Vec<f64> = (0..m).map(|i| 1.0 / gram[(i, i)].re.sqrt()).collect();
    let scaled = CMatrix::from_fn(m, m, |i, j| gram[(i, j)] * (scale[i] * scale[j]));
    let eig = linalg::hermitian_eigenvalues(&scaled);
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    // The Cholesky factor of G̃ᵀ = conj(G̃) gives z(x) = L⁻¹ S m(x) with
    // Σ z_i(x) conj(z_i(y)) = m(x)ᵀ G⁻¹ conj(m(y)).
    let chol = Cholesky::new(scaled.map(|c| c.conj())).ok_or(Error::IllConditioned { condition })?;
    // The constant e^{2Φ(x₀)/h} removed above is restored in the scale.
    let restore = (-phi0 / h).exp();
    Ok(GramKernel {
        degree: d,
        h,
        center: center.to_vec(),
        exps,
        gram,
        scale: scale.iter().map(|s| s * restore).collect(),
        factor: chol.l(),
        condition,
    })
}

/// Result of raising the basis degree until the kernel stabilizes.
#[derive(Clone, Debug)]
pub struct AdaptiveGram {
    pub kernel: GramKernel,
    /// Largest relative change of `K(x, x̄)` at the probes in the last step,
    /// `None` if no step was taken.
    pub last_change: Option<f64>,
    pub converged: bool,
    /// `(D, condition)` per attempted degree.
    pub history: Vec<(usize, f64)>,
}

/// Relative change below which the Gram kernel counts as converged in `D`.
pub const GRAM_STABILITY: f64 = 1e-6;

/// Raises `D` in steps of 5 from `d_start` until `K(x, x̄)` at every probe
/// changes by less than [`GRAM_STABILITY`], stopping early at the angular
/// resolution limit or when the scaled Gram matrix becomes ill-conditioned.
pub fn gram_bergman_adaptive(
    w: &Weight,
    dom: &DomainSpec,
    h: f64,
    probes: &[Vec<C64>],
    d_start: usize,
) -> Result<AdaptiveGram> {
    let rule = dom.rule()?;
    let d_cap = dom.nt / 4;
    let mut d = d_start.min(d_cap);
    let mut current = gram_from_rule(w, &rule, &dom.center, d, h)?;
    let mut history = vec![(d, current.condition)];
    let diag = |k: &GramKernel| -> Vec<f64> { probes.iter().map(|x| k.eval(x, x).re).collect() };
    let mut values = diag(&current);
    let mut last_change = None;
    while d + 5 <= d_cap {
        let next = match gram_from_rule(w, &rule, &dom.center, d + 5, h) {
            Ok(k) => k,
            Err(Error::IllConditioned { condition }) => {
                history.push((d + 5, condition));
                break;
            }
            Err(e) => return Err(e),
        };
        d += 5;
        history.push((d, next.condition));
        let nv = diag(&next);
        let change = values
            .iter()
            .zip(&nv)
            .map(|(a, b)| (a - b).abs() / b.abs())
            .fold(0.0, f64::max);
        last_change = Some(change);
        current = next;
        values = nv;
        if change < GRAM_STABILITY {
            break;
        }
    }
    Ok(AdaptiveGram {
        kernel: current,
        last_change,
        converged: last_change.is_some_and(|c| c < GRAM_STABILITY),
        history,
    })
}

/// Relative errors `|K_asym - K_exact| / |K_exact|` at point pairs `(x, y)`.
pub fn compare_kernels(asym: &dyn Kernel, exact: &dyn Kernel, pairs: &[(Vec<C64>, Vec<C64>)]) -> ErrorStats {
    let errors: Vec<f64> = pairs
        .par_iter()
        .map(|(x, y)| {
            let e = exact.eval(x, y);
            (asym.eval(x, y) - e).norm() / e.norm()
        })
        .collect();
    projector::stats(errors)
}

/// Pairs `(x, y)` with `x` in the ball of radius `radius - offset` and
/// `|y - x| < offset`.
pub fn near_diagonal_pairs(
    center: &[C64],
    radius: f64,
    offset: f64,
    count: usize,
    seed: u64,
) -> Vec<(Vec<C64>, Vec<C64>)> {
    let xs = sampling::ball_points(center, radius - offset, count, seed);
    let zero = vec![zero(); center.len()];
    let ds = sampling::ball_points(&zero, offset, count, seed.wrapping_add(1));
    xs.into_iter()
        .zip(ds)
        .map(|(x, d)| {
            let y = x.iter().zip(&d).map(|(a, b)| a + b).collect();
            (x, y)
        })
        .collect()
}

/// Radial cutoff equal to 1 on `|x - c| <= plateau` and 0 beyond `support`,
/// with the C^∞ step `s(t) = ψ(1-t) / (ψ(1-t) + ψ(t))`, `ψ(t) = e^{-1/t}`, in
/// between.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub center: Vec<C64>,
    pub plateau: f64,
    pub support: f64,
}

impl Cutoff {
    /// Plateau and support at 0.6 and 0.9 times the domain radius.
    pub fn for_domain(dom: &DomainSpec) -> Self {
        Cutoff {
            center: dom.center.clone(),
            plateau: 0.6 * dom.radius,
            support: 0.9 * dom.radius,
        }
    }

    pub fn value(&self, x: &[C64]) -> f64 {
        let r = dist2(x, &self.center).sqrt();
        if r <= self.plateau {
            return 1.0;
        }
        if r >= self.support {
            return 0.0;
        }
        let t = (r - self.plateau) / (self.support - self.plateau);
        let psi = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
        psi(1.0 - t) / (psi(1.0 - t) + psi(t))
    }

    /// Disc rule on the plateau joined with an annulus rule on the ramp.
    fn rule(&self, nr: usize, nt: usize) -> Result<Rule> {
        if self.center.len() != 1 {
            return Err(Error::Unsupported("cutoff quadrature is implemented for n = 1".into()));
        }
        let c = self.center[0];
        Ok(
            quadrature::disc_rule(c, self.plateau, nr, nt).join(quadrature::annulus_rule(
                c,
                self.plateau,
                self.support,
                nr,
                nt,
            )),
        )
    }
}

/// Orientation of `Λ(x)`. With this sign the Gaussian check returns `+u(x)`.
pub const ORIENTATION: f64 = -1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InversionResult {
    pub value: C64,
    /// `|value - u(x)| e^{-Φ(x)/h}`.
    pub residual: f64,
}

#[allow(clippy::too_many_arguments)]
fn inversion_integral(
    w: &Weight,
    u: &TruncatedSeries,
    x: &[C64],
    chi: &Cutoff,
    h: f64,
    nr: usize,
    nt: usize,
    orientation: f64,
) -> Result<C64> {
    let n = w.n();
    let rule = chi.rule(nr, nt)?;
    let uc = u.compile();
    let factor = (C64::new(0.0, -2.0) * orientation).powu(n as u32) * (2.0 * PI * h).powi(-(n as i32));
    let total = rule.integrate(|y| {
        let c = chi.value(y);
        if c == 0.0 {
            return zero();
        }
        let theta = w.theta(x, y);
        let pairing: C64 = x.iter().zip(y).zip(&theta).map(|((a, b), t)| (a - b) * t).sum();
        let phase = (C64::new(0.0, 1.0) * pairing / h).exp();
        phase * uc.eval(y) * c * w.theta_jacobian(x, y)
    });
    Ok(total * factor)
}

/// `(2πh)^{-n} ∫_{Λ(x)} e^{(i/h)(x-y)·θ} u(y) χ(y) dy dθ` on the contour
/// `θ = θ(x, y)`, compared with `u(x)`.
pub fn fourier_inversion_check(
    w: &Weight,
    u: &TruncatedSeries,
    x: &[C64],
    dom: &DomainSpec,
    h: f64,
) -> Result<InversionResult> {
    fourier_inversion_oriented(w, u, x, dom, h, ORIENTATION)
}

/// [`fourier_inversion_check`] with an explicit orientation sign.
pub fn fourier_inversion_oriented(
    w: &Weight,
    u: &TruncatedSeries,
    x: &[C64],
    dom: &DomainSpec,
    h: f64,
    orientation: f64,
) -> Result<InversionResult> {
    let chi = Cutoff::for_domain(dom);
    if dist2(x, &chi.center).sqrt() >= chi.plateau {
        return Err(Error::ConfigInvalid(
            "evaluation point outside the cutoff plateau".into(),
        ));
    }
    let coarse = inversion_integral(w, u, x, &chi, h, dom.nr, dom.nt, orientation)?;
    let fine = inversion_integral(w, u, x, &chi, h, 2 * dom.nr, 2 * dom.nt, orientation)?;
    let weight = (-w.value(x) / h).exp();
    let ux = u.compile().eval(x);
    let residual = (fine - ux).norm() * weight;
    let change = (fine - coarse).norm() * weight;
    let tolerance = 0.1 * residual + 1e-13 * (1.0 + ux.norm() * weight);
    if change > tolerance {
        return Err(Error::QuadratureUnderresolved { change, tolerance });
    }
    Ok(InversionResult { value: fine, residual })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointwiseReport {
    pub hs: Vec<f64>,
    /// `sup_{V1} |u e^{-Φ/h}| h^n / ‖u‖_{H_Φ(V)}` per `h`.
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
}

pub fn pointwise_bound_check(
    w: &Weight,
    u: &TruncatedSeries,
    inner: &DomainSpec,
    outer: &DomainSpec,
    hs: &[f64],
) -> Result<PointwiseReport> {
    if inner.radius >= outer.radius {
        return Err(Error::ConfigInvalid(format!(
            "V1 radius {} must be smaller than V radius {}",
            inner.radius, outer.radius
        )));
    }
    let n = w.n();
    let uc = u.compile();
    let mut samples = inner.rule()?.nodes;
    samples.push(inner.center.clone());
    samples.extend(sampling::torus_points(
        &inner.center,
        inner.radius / (n as f64).sqrt(),
        256,
        sampling::DEFAULT_SEED,
    ));
    let vrule = outer.rule()?;
    let ratios: Vec<f64> = hs
        .iter()
        .map(|&h| {
            let sup = samples
                .iter()
                .map(|x| uc.eval(x).norm() * (-w.value(x) / h).exp())
                .fold(0.0, f64::max);
            let norm2 = vrule
                .integrate(|y| C64::new(uc.eval(y).norm_sqr() * (-2.0 * w.value(y) / h).exp(), 0.0))
                .re;
            if norm2 > 0.0 {
                sup * h.powi(n as i32) / norm2.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    Ok(PointwiseReport {
        hs: hs.to_vec(),
        ratios,
        max_ratio,
    })
}

/// Sampling setup for the contour inequalities around a center `z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityProbe {
    pub delta: f64,
    pub center: Vec<C64>,
    pub radius: f64,
    pub nsamples: usize,
    pub seed: u64,
}

impl InequalityProbe {
    /// `F_z(x̃) = Φ(conj x̃) - δ|x̃ - z̄|²`.
    pub fn f_z(&self, w: &Weight, xt: &[C64]) -> f64 {
        let xb: Vec<C64> = xt.iter().map(|c| c.conj()).collect();
        let zb: Vec<C64> = self.center.iter().map(|c| c.conj()).collect();
        w.value(&xb) - self.delta * dist2(xt, &zb)
    }

    /// `G_z(x, x̄, y, ȳ) = 2 Re Ψ(x, ȳ) - Φ(x) - Φ(y) - δ|x - z|²`.
    pub fn g_z_diagonal(&self, w: &Weight, p: &Polarization, x: &[C64], y: &[C64]) -> f64 {
        2.0 * p.value_at_conj(x, y).re - w.value(x) - w.value(y) - self.delta * dist2(x, &self.center)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub delta: f64,
    /// `min (Φ(x) - Φ(y) + Im((x-y)·θ)) / |x-y|² - δ`.
    pub inversion: MarginReport,
    /// `min -Re φ / (|u|² + |v|²)` on the amplitude contour at `(z, z̄)`.
    pub amplitude: MarginReport,
    /// `min -G_z / (|x-z|² + |y-z|²)` on the diagonal contour.
    pub diagonal: MarginReport,
}

fn best_of(items: Vec<(f64, Vec<C64>)>) -> (f64, Vec<C64>) {
    items
        .into_iter()
        .fold((f64::INFINITY, Vec::new()), |b, it| if it.0 < b.0 { it } else { b })
}

fn margin_report(kind: &str, probe: &InequalityProbe, best: (f64, Vec<C64>)) -> Result<MarginReport> {
    if !(best.0 > 0.0) {
        return Err(Error::BadContour {
            kind: kind.into(),
            margin: best.0,
        });
    }
    Ok(MarginReport {
        kind: kind.into(),
        radius: probe.radius,
        nsamples: probe.nsamples,
        margin: best.0,
        argmin: best.1,
    })
}

pub fn inequality_suite(
    w: &Weight,
    p: &Polarization,
    pd: &PhaseData,
    probe: &InequalityProbe,
) -> Result<InequalityReport> {
    if !(probe.delta > 0.0) {
        return Err(Error::ConfigInvalid(format!(
            "delta must be positive, got {}",
            probe.delta
        )));
    }
    let reach = dist2(&probe.center, w.base()).sqrt() + probe.radius;
    if reach > w.trust_radius() {
        return Err(Error::ConfigInvalid(format!(
            "samples reach {reach} beyond the trust radius {}",
            w.trust_radius()
        )));
    }
    let z = &probe.center;
    let pairs = sampling::ball_pairs(z, probe.radius, probe.nsamples, probe.seed);

    let inv = best_of(
        pairs
            .par_iter()
            .filter(|(x, y)| dist2(x, y) > 1e-16)
            .map(|(x, y)| {
                let mut at = x.clone();
                at.extend_from_slice(y);
                (inversion_ratio(w, x, y) - probe.delta, at)
            })
            .collect(),
    );
    let inversion = margin_report("inversion_contour", probe, inv)?;

    let zb: Vec<C64> = z.iter().map(|c| c.conj()).collect();
    let ys: Vec<C64> = z.iter().zip(pd.base()).map(|(a, b)| a - b).collect();
    let xts: Vec<C64> = zb.iter().zip(pd.base()).map(|(a, b)| a - b.conj()).collect();
    let mut contour = build_good_contour(pd, &ys, &xts)?;
    let amplitude = verify_amplitude_contour(pd, &mut contour, probe.radius, probe.nsamples, probe.seed)?;

    let diag = best_of(
        pairs
            .par_iter()
            .filter_map(|(x, y)| {
                let d = dist2(x, z) + dist2(y, z);
                (d > 1e-16).then(|| {
                    let mut at = x.clone();
                    at.extend_from_slice(y);
                    (-probe.g_z_diagonal(w, p, x, y) / d, at)
                })
            })
            .collect(),
    );
    let diagonal = margin_report("diagonal_contour", probe, diag)?;
    Ok(InequalityReport {
        delta: probe.delta,
        inversion,
        amplitude,
        diagonal,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpRow {
    pub case: usize,
    pub h: f64,
    pub quadrature: C64,
    /// Partial sum of the formal expansion through the requested order.
    pub formal: C64,
    pub next_term: C64,
    pub error: f64,
    pub terminating: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpTable {
    pub order: usize,
    pub rows: Vec<SpRow>,
    pub all_pass: bool,
}

/// Agreement required when the formal expansion terminates.
pub const TERMINATING_TOL: f64 = 1e-8;

/// `h^{-n} ∫_Γ e^{2φ/h} u B̄ dL(w)` over the amplitude contour at the base,
/// `x = x₀ + w`, `ỹ = x̄₀ - conj(B w)`, for `|w| < ρ`.
fn contour_integral(pd: &PhaseData, u: &TruncatedSeries, h: f64, rho: f64, nr: usize, nt: usize) -> C64 {
    let o = [zero()];
    let b = pd.b_at(&o, &o)[(0, 0)];
    let uc = u.compile();
    let rule = quadrature::disc_rule(zero(), rho, nr, nt);
    let total = rule.integrate(|wv| {
        let x = [wv[0]];
        let yt = [-(b * wv[0]).conj()];
        let phi = pd.value(&o, &o, &x, &yt);
        (phi * (2.0 / h)).exp() * uc.eval(&[x[0], yt[0]])
    });
    total * b.conj() / h
}

/// Compares direct contour quadrature with the formal expansion through
/// `order` for each integrand (a series in the displacements of `(x, ỹ)`).
pub fn sp_quadrature_check(pd: &PhaseData, cases: &[TruncatedSeries], hs: &[f64], order: usize) -> Result<SpTable> {
    if pd.n() != 1 {
        return Err(Error::Unsupported("contour quadrature is implemented for n = 1".into()));
    }
    let o = [zero()];
    let b = pd.b_at(&o, &o)[(0, 0)].norm();
    let hmax = order + 1;
    let quadratic = pd.remainder().is_empty();
    let mut rows = Vec::new();
    for (ci, u) in cases.iter().enumerate() {
        let need = 2 * hmax as u32 + 2;
        let lead = if u.maxdeg() < need { u.pad_to(need) } else { u.clone() };
        let f = formal_expansion(pd, &HGradedSeries::leading(lead), hmax)?;
        let coeffs: Vec<C64> = f.terms().iter().map(|t| t.constant_term()).collect();
        // Exact for polynomials under a quadratic phase, and trivially so when
        // every coefficient vanishes (odd integrands under a rotation-invariant phase).
        let vanishing = coeffs.iter().all(|c| c.norm() == 0.0);
        let terminating = vanishing || (quadratic && (u.actual_degree() as usize) < 2 * hmax);
        for &h in hs {
            let rho = 4.0 * h.sqrt() / b;
            let coarse = contour_integral(pd, u, h, rho, 64, 64);
            let quad = contour_integral(pd, u, h, rho, 128, 128);
            let formal: C64 = coeffs
                .iter()
                .take(order + 1)
                .enumerate()
                .map(|(k, c)| c * h.powi(k as i32))
                .sum();
            let next = coeffs[hmax] * h.powi(hmax as i32);
            let scale = 1.0 + formal.norm();
            let change = (quad - coarse).norm();
            if change > 1e-10 * scale {
                return Err(Error::QuadratureUnderresolved {
                    change,
                    tolerance: 1e-10 * scale,
                });
            }
            let error = (quad - formal).norm();
            let pass = if terminating {
                error <= TERMINATING_TOL * scale
            } else {
                error <= 10.0 * next.norm()
            };
            rows.push(SpRow {
                case: ci,
                h,
                quadrature: quad,
                formal,
                next_term: next,
                error,
                terminating,
                pass,
            });
        }
    }
    let all_pass = rows.iter().all(|r| r.pass);
    Ok(SpTable { order, rows, all_pass })
}

/// `v_z(x) = (2πh)^{-n} e^{(i/h)(x-z)·θ(x,z)} v(z) χ(z) det ∂_z̄θ(x, z)`.
#[derive(Clone, Debug)]
pub struct LocalizedElement {
    pub center: Vec<C64>,
    pub h: f64,
    pub delta: f64,
    /// `v(z) χ(z)`.
    pub prefactor: C64,
    /// `min_x (Φ(x) - Φ(z) + Im((x-z)·θ(x,z))) / |x-z|² - δ` on samples.
    pub margin: f64,
    weight: Weight,
}

impl LocalizedElement {
    pub fn eval(&self, x: &[C64]) -> C64 {
        if self.prefactor == zero() {
            return zero();
        }
        let z = &self.center;
        let n = z.len();
        let theta = self.weight.theta(x, z);
        let pairing: C64 = x.iter().zip(z).zip(&theta).map(|((a, b), t)| (a - b) * t).sum();
        (C64::new(0.0, 1.0) * pairing / self.h).exp()
            * self.prefactor
            * self.weight.theta_jacobian(x, z)
            * (2.0 * PI * self.h).powi(-(n as i32))
    }

    /// `|v_z(x)| e^{-Φ(x)/h}` divided by the bound
    /// `(2πh)^{-n} |v(z)χ(z)| |det ∂_z̄θ| e^{-Φ(z)/h} e^{-δ|x-z|²/h}`.
    pub fn domination_ratio(&self, x: &[C64]) -> f64 {
        let w = &self.weight;
        let z = &self.center;
        let n = z.len();
        let v = self.eval(x).norm() * (-w.value(x) / self.h).exp();
        let bound = (2.0 * PI * self.h).powi(-(n as i32))
            * self.prefactor.norm()
            * w.theta_jacobian(x, z).norm()
            * ((-w.value(z) - self.delta * dist2(x, z)) / self.h).exp();
        if bound == 0.0 {
            0.0
        } else {
            v / bound
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn localized_element(
    v: &TruncatedSeries,
    z: &[C64],
    w: &Weight,
    h: f64,
    chi: &Cutoff,
    delta: f64,
    radius: f64,
    nsamples: usize,
    seed: u64,
) -> Result<LocalizedElement> {
    if dist2(z, w.base()).sqrt() >= w.trust_radius() {
        return Err(Error::ConfigInvalid("center outside the trust region".into()));
    }
    let prefactor = v.compile().eval(z) * chi.value(z);
    let xs = sampling::ball_points(z, radius, nsamples, seed);
    let ratio = xs
        .par_iter()
        .filter(|x| dist2(x, z) > 1e-16)
        .map(|x| inversion_ratio(w, x, z))
        .reduce(|| f64::INFINITY, f64::min);
    let margin = ratio - delta;
    if !(margin > 0.0) {
        return Err(Error::BadContour {
            kind: "localized_element".into(),
            margin,
        });
    }
    Ok(LocalizedElement {
        center: z.to_vec(),
        h,
        delta,
        prefactor,
        margin,
        weight: w.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amplitude::{estimate_growth, solve_amplitude};
    use crate::phase::build_phase;
    use crate::projector::{assemble_kernel, assemble_kernel_with, KernelMode};
    use crate::weight::{examples, polarize, quadratic_gap_estimate, validate_weight};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn o() -> Vec<C64> {
        vec![c(0.0, 0.0)]
    }

    fn mono1(e: u16) -> TruncatedSeries {
        TruncatedSeries::monomial(1, e as u32, &MultiIndex::from_slice(&[e]), c(1.0, 0.0))
    }

    fn mono2(a: u16, b: u16, maxdeg: u32) -> TruncatedSeries {
        TruncatedSeries::monomial(2, maxdeg, &MultiIndex::from_slice(&[a, b]), c(1.0, 0.0))
    }

    fn weight(raw: TruncatedSeries, trust: f64) -> Weight {
        validate_weight(&raw, &o(), trust).unwrap()
    }

    #[test]
    fn exponent_enumeration() {
        assert_eq!(exponents(1, 3).len(), 4);
        let e = exponents(2, 2);
        assert_eq!(e.len(), 6);
        assert!(e.windows(2).all(|p| p[0].degree() <= p[1].degree()));
    }

    #[test]
    fn gaussian_gram_at_origin() {
        let w = weight(examples::quadratic(0.5, 8), 2.0);
        let dom = DomainSpec::disc(c(0.0, 0.0), 1.0, 64, 128);
        let k = gram_bergman(&w, &dom, 25, 0.1).unwrap();
        let v = k.eval(&o(), &o());
        assert!((v.re - 1.0 / (PI * 0.1)).abs() < 1e-3);
        assert!(v.im.abs() < 1e-12);
    }

    #[test]
    fn radial_gram_is_diagonal() {
        let w = weight(examples::quartic(0.1, 8), 1.0);
        let dom = DomainSpec::disc(c(0.0, 0.0), 0.7, 64, 128);
        let k = gram_bergman(&w, &dom, 20, 0.1).unwrap();
        let g = k.gram();
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                if i != j {
                    let rel = g[(i, j)].norm() / (g[(i, i)].re * g[(j, j)].re).sqrt();
                    assert!(rel < 1e-13, "({i},{j}) {rel}");
                }
            }
        }
        assert!(k.condition() < 1.0 + 1e-10);
    }

    #[test]
    fn quadratic_gram_tends_to_closed_form() {
        let w = weight(examples::quadratic(1.0, 8), 2.0);
        let dom = DomainSpec::disc(c(0.0, 0.0), 1.0, 64, 128);
        let k = gram_bergman(&w, &dom, 30, 0.1).unwrap();
        let v = k.eval(&o(), &o()).re;
        assert!((v - 2.0 / (PI * 0.1)).abs() < 1e-6 * v);
    }

    #[test]
    fn gram_requires_angular_resolution() {
        let w = weight(examples::quadratic(0.5, 8), 2.0);
        let dom = DomainSpec::disc(c(0.0, 0.0), 1.0, 16, 32);
        assert!(matches!(gram_bergman(&w, &dom, 10, 0.1), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn gram_ill_conditioning_is_reported() {
        // With one radial node the scaled Gram matrix is the Toeplitz matrix
        // of the weight on a circle, whose condition is about
        // e^{2 (max Φ - min Φ)/h} there.
        let w = weight(examples::cubic(0.1, 8), 1.0);
        let dom = DomainSpec::disc(c(0.0, 0.0), 1.0, 1, 128);
        let r = gram_bergman(&w, &dom, 30, 0.002);
        assert!(matches!(r, Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn gram_is_a_projection() {
        let w = weight(examples::cubic(0.1, 8), 1.0);
        let dom = DomainSpec::disc(c(0.0, 0.0), 0.6, 48, 64);
        let h = 0.15;
        let k = gram_bergman(&w, &dom, 8, h).unwrap();
        let rule = dom.rule().unwrap();
        let x = vec![c(0.1, -0.2)];
        // reproduces basis monomials
        for e in 0..=8u16 {
            let u = mono1(e).compile();
            let r = rule.integrate(|y| k.eval(&x, y) * u.eval(y) * (-2.0 * w.value(y) / h).exp());
            let want = u.eval(&x);
            assert!((r - want).norm() < 1e-9 * (1.0 + want.norm()), "degree {e}");
        }
        // Hermitian symmetry
        let y = vec![c(-0.3, 0.05)];
        assert!((k.eval(&x, &y) - k.eval(&y, &x).conj()).norm() < 1e-10 * k.eval(&x, &y).norm());
    }

    #[test]
    fn adaptive_gram_converges() {
        let w = weight(examples::quartic(0.1, 8), 1.0);
        let dom = DomainSpec::disc(c(0.0, 0.0), 0.7, 64, 128);
        let ag = gram_bergman_adaptive(&w, &dom, 0.1, &[o(), vec![c(0.3, 0.0)]], 10).unwrap();
        assert!(ag.converged, "{:?}", ag.history);
        assert!(ag.kernel.degree() <= 32);
    }

    fn gaussian_setup(order: usize) -> (Weight, Polarization, crate::amplitude::Amplitude) {
        let w = weight(examples::quadratic(0.5, 2 * order as u32 + 4), 2.0);
        let p = polarize(&w).unwrap();
        let mut a = solve_amplitude(&build_phase(&p).unwrap(), order).unwrap();
        a.growth = Some(estimate_growth(&a, 0.5, 64, 1));
        (w, p, a)
    }

    #[test]
    fn gaussian_compare_kernels() {
        let (w, p, a) = gaussian_setup(4);
        let dom = DomainSpec::disc(c(0.0, 0.0), 1.0, 64, 128);
        let gram = gram_bergman(&w, &dom, 30, 0.1).unwrap();
        let k = assemble_kernel(&p, &a, 0.1).unwrap();
        let pairs = near_diagonal_pairs(&o(), 0.25, 0.05, 20, 3);
        let s = compare_kernels(&k, &gram, &pairs);
        assert!(s.max <= 1e-3, "{}", s.max);
        // Farther out the disc's own truncation shows: the relative gap at
        // |x|^2/h = 2.5 is a Poisson tail of order 1e-2.
        let wide = compare_kernels(&k, &gram, &near_diagonal_pairs(&o(), 0.5, 0.05, 20, 3));
        assert!(wide.max > 1e-3 && wide.max < 3e-2, "{}", wide.max);
        let null = assemble_kernel_with(&p, &a.scaled(0.0), 0.1, KernelMode::FixedOrder(4)).unwrap();
        let s0 = compare_kernels(&null, &gram, &pairs);
        assert!((s0.median - 1.0).abs() < 1e-12);
    }

    #[test]
    fn near_diagonal_pairs_stay_close() {
        let pairs = near_diagonal_pairs(&o(), 0.35, 0.05, 20, 9);
        assert_eq!(pairs.len(), 20);
        for (x, y) in &pairs {
            assert!(x[0].norm() < 0.3 && y[0].norm() < 0.35);
            assert!((x[0] - y[0]).norm() < 0.05);
        }
    }

    #[test]
    fn cutoff_profile() {
        let chi = Cutoff::for_domain(&DomainSpec::disc(c(0.0, 0.0), 1.0, 8, 8));
        assert_eq!(chi.value(&[c(0.5, 0.0)]), 1.0);
        assert_eq!(chi.value(&[c(0.0, 0.95)]), 0.0);
        let mid = chi.value(&[c(0.75, 0.0)]);
        assert!((mid - 0.5).abs() < 1e-15);
        let mut prev = 1.0;
        for i in 0..=30 {
            let v = chi.value(&[c(0.6 + 0.01 * i as f64, 0.0)]);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn fourier_inversion_gaussian() {
        let w = weight(examples::quadratic(0.5, 8), 2.0);
        let dom = DomainSpec::disc(c(0.0, 0.0), 1.0, 64, 64);
        let one = mono1(0);
        let r = fourier_inversion_check(&w, &one, &o(), &dom, 0.1).unwrap();
        assert!(r.residual <= 1e-2);
        assert!((r.value - c(1.0, 0.0)).norm() < 1e-2);
        let flipped = fourier_inversion_oriented(&w, &one, &o(), &dom, 0.1, -ORIENTATION).unwrap();
        assert!((flipped.value + c(1.0, 0.0)).norm() < 1e-2);
        let res: Vec<f64> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&h| fourier_inversion_check(&w, &one, &o(), &dom, h).unwrap().residual)
            .collect();
        assert!(res[0] > res[1] && res[1] > res[2], "{res:?}");
        let y = mono1(1);
        let r = fourier_inversion_check(&w, &y, &o(), &dom, 0.1).unwrap();
        assert!(r.value.norm() < 1e-12);
    }

    #[test]
    fn fourier_inversion_off_center() {
        let w = weight(examples::quartic(0.1, 8), 1.0);
        let dom = DomainSpec::disc(c(0.0, 0.0), 0.7, 64, 64);
        let y2 = mono1(2);
        let x = vec![c(0.15, 0.05)];
        let res: Vec<f64> = [0.1, 0.05, 0.03]
            .iter()
            .map(|&h| fourier_inversion_check(&w, &y2, &x, &dom, h).unwrap().residual)
            .collect();
        assert!(res[0] > res[1] && res[1] > res[2], "{res:?}");
    }

    #[test]
    fn pointwise_bound_examples() {
        let w = weight(examples::quadratic(0.5, 8), 2.0);
        let v1 = DomainSpec::disc(c(0.0, 0.0), 0.5, 32, 64);
        let v = DomainSpec::disc(c(0.0, 0.0), 1.0, 64, 128);
        let hs = [0.2, 0.15, 0.1, 0.07, 0.05];
        let one = mono1(0);
        let r = pointwise_bound_check(&w, &one, &v1, &v, &hs).unwrap();
        for (h, ratio) in r.hs.iter().zip(&r.ratios) {
            let want = h / (PI * h * (1.0 - (-1.0 / h).exp())).sqrt();
            assert!((ratio - want).abs() < 1e-10 * want, "{h} {ratio}");
        }
        let two = one.scale_re(2.0);
        let r2 = pointwise_bound_check(&w, &two, &v1, &v, &hs).unwrap();
        for (a, b) in r.ratios.iter().zip(&r2.ratios) {
            assert!((a - b).abs() < 1e-14 * a);
        }
        let y3 = mono1(3);
        let r3 = pointwise_bound_check(&w, &y3, &v1, &v, &hs).unwrap();
        assert!(r3.max_ratio.is_finite() && r3.max_ratio < 1.0);
    }

    fn probe(delta: f64, radius: f64) -> InequalityProbe {
        InequalityProbe {
            delta,
            center: o(),
            radius,
            nsamples: 10_000,
            seed: sampling::DEFAULT_SEED,
        }
    }

    #[test]
    fn gaussian_inequalities() {
        let w = weight(examples::quadratic(0.5, 8), 2.0);
        let p = polarize(&w).unwrap();
        let pd = build_phase(&p).unwrap();
        let rep = inequality_suite(&w, &p, &pd, &probe(0.25, 0.3)).unwrap();
        // Nearly coincident pairs lose digits to cancellation.
        assert!((rep.inversion.margin - 0.25).abs() < 1e-9);
        assert!((rep.amplitude.margin - 0.2).abs() < 1e-9);
        let want = (1.25 - (0.0625f64 + 1.0).sqrt()) / 2.0;
        assert!(rep.diagonal.margin > 0.0 && rep.diagonal.margin >= want - 1e-12);
        let rep = inequality_suite(&w, &p, &pd, &probe(0.1, 0.3)).unwrap();
        assert!(rep.diagonal.margin > 0.0);
        let bad = inequality_suite(&w, &p, &pd, &probe(0.6, 0.3));
        assert!(matches!(bad, Err(Error::BadContour { .. })));
    }

    #[test]
    fn perturbed_inequalities_with_default_delta() {
        let w = weight(examples::quartic(0.1, 12), 1.0);
        let p = polarize(&w).unwrap();
        let pd = build_phase(&p).unwrap();
        let gap = quadratic_gap_estimate(&w, &p, 0.3, 4000, 5).unwrap();
        let rep = inequality_suite(&w, &p, &pd, &probe(0.5 * gap.cmin, 0.3)).unwrap();
        assert!(rep.inversion.margin >= 1e-3);
        assert!(rep.amplitude.margin >= 1e-3);
        assert!(rep.diagonal.margin >= 1e-3);
    }

    #[test]
    fn inequality_samples_must_stay_in_trust_region() {
        let w = weight(examples::quartic(0.1, 12), 1.0);
        let p = polarize(&w).unwrap();
        let pd = build_phase(&p).unwrap();
        assert!(matches!(
            inequality_suite(&w, &p, &pd, &probe(0.1, 1.5)),
            Err(Error::ConfigInvalid(_))
        ));
    }

    fn phase(raw: TruncatedSeries) -> PhaseData {
        build_phase(&polarize(&weight(raw, 1.0)).unwrap()).unwrap()
    }

    #[test]
    fn sp_quadrature_gaussian() {
        let pd = phase(examples::quadratic(0.5, 16));
        let hs = [0.2, 0.1, 0.05];
        let cases = vec![mono2(0, 0, 12), mono2(1, 1, 12), mono2(2, 2, 12), mono2(1, 0, 12)];
        let t = sp_quadrature_check(&pd, &cases, &hs, 4).unwrap();
        assert!(t.all_pass, "{:?}", t.rows);
        for r in t.rows.iter().filter(|r| r.case == 0) {
            assert!((r.quadrature - c(PI, 0.0)).norm() < 1e-10);
        }
        for r in t.rows.iter().filter(|r| r.case == 1) {
            assert!((r.quadrature - c(-PI * r.h, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn sp_quadrature_cubic() {
        let pd = phase(examples::cubic(0.1, 16));
        let t = sp_quadrature_check(&pd, &[mono2(0, 0, 12)], &[0.1], 4).unwrap();
        assert!(t.all_pass, "{:?}", t.rows);
        assert!(!t.rows[0].terminating);
    }

    #[test]
    fn localized_element_examples() {
        let w = weight(examples::quadratic(0.5, 8), 2.0);
        let chi = Cutoff::for_domain(&DomainSpec::disc(c(0.0, 0.0), 1.0, 8, 8));
        let h = 0.1;
        let one = mono1(0);
        let e = localized_element(&one, &o(), &w, h, &chi, 0.25, 0.5, 2000, 1).unwrap();
        assert!((e.margin - 0.25).abs() < 1e-12);
        for x in sampling::ball_points(&o(), 0.5, 200, 2) {
            let lhs = e.eval(&x).norm() * (-w.value(&x) / h).exp();
            let rhs = (x[0].norm_sqr() / (-2.0 * h)).exp() / (2.0 * PI * h);
            assert!((lhs - rhs).abs() < 1e-12 * rhs);
            assert!(e.domination_ratio(&x) <= 1.0);
        }
        let zero_v = TruncatedSeries::zero(1, 0);
        let e0 = localized_element(&zero_v, &o(), &w, h, &chi, 0.25, 0.5, 100, 1).unwrap();
        assert_eq!(e0.eval(&[c(0.2, 0.1)]), c(0.0, 0.0));
    }

    #[test]
    fn localized_element_near_trust_boundary() {
        let w = weight(examples::cubic(0.1, 8), 1.0);
        let chi = Cutoff {
            center: o(),
            plateau: 0.95,
            support: 0.99,
        };
        let one = mono1(0);
        let inner = localized_element(&one, &o(), &w, 0.1, &chi, 0.05, 0.1, 2000, 1).unwrap();
        let edge = localized_element(&one, &[c(-0.9, 0.0)], &w, 0.1, &chi, 0.05, 0.1, 2000, 1);
        match edge {
            Ok(e) => assert!(e.margin < inner.margin),
            Err(err) => assert!(matches!(err, Error::BadContour { .. })),
        }
    }
}
