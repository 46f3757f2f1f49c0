//! The phase `φ(y, x̃; x, ỹ) = Ψ(x, ỹ) - Ψ(x, x̃) - Ψ(y, ỹ) + Ψ(y, x̃)`, its
//! critical-point structure and the good contours used to integrate
//! `e^{2φ/h}`.
//!
//! Two coordinate systems are kept side by side, both centered at the base
//! point `(x₀, x̄₀, x₀, x̄₀)`:
//!
//! * `phi4` in `[y, x̃, x, ỹ]`,
//! * the split form in `[y, x̃, u, v]` with `x = y + u`, `ỹ = x̃ + v`. The
//!   "slow" variables `(y, x̃)` label the critical point and the "fast"
//!   variables `(u, v)` are integrated out.
//!
//! In the split form every monomial carries at least one `u` and one `v`
//! factor; the fast-quadratic part is `uᵀ B(y, x̃) v` with `B = Ψ''_{xỹ}`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::sampling;
use crate::tseries::{CompiledSeries, MultiIndex, TruncatedSeries, C64};
use crate::weight::{Polarization, Weight, DEGENERACY_TOL};

/// Coefficients that must vanish identically are accepted up to this size.
pub const STRUCTURE_TOL: f64 = 1e-12;

/// Square matrix whose entries are series in the slow variables.
#[derive(Clone, Debug)]
pub struct SeriesMatrix {
    n: usize,
    entries: Vec<TruncatedSeries>,
}

impl SeriesMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> TruncatedSeries) -> Self {
        let mut entries = Vec::with_capacity(n * n);
        for j in 0..n {
            for k in 0..n {
                entries.push(f(j, k));
            }
        }
        SeriesMatrix { n, entries }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, j: usize, k: usize) -> &TruncatedSeries {
        &self.entries[j * self.n + k]
    }

    pub fn transpose(&self) -> Self {
        SeriesMatrix::from_fn(self.n, |j, k| self.get(k, j).clone())
    }

    /// Numeric matrix of constant terms.
    pub fn at_origin(&self) -> CMatrix {
        CMatrix::from_fn(self.n, self.n, |j, k| self.get(j, k).constant_term())
    }

    /// Numeric matrix at a point in series coordinates.
    pub fn eval(&self, point: &[C64]) -> CMatrix {
        CMatrix::from_fn(self.n, self.n, |j, k| self.get(j, k).eval_unchecked(point))
    }

    fn mul(&self, other: &Self, maxdeg: u32) -> Self {
        let n = self.n;
        SeriesMatrix::from_fn(n, |j, k| {
            let mut acc = TruncatedSeries::zero(self.get(0, 0).nvars(), maxdeg);
            for l in 0..n {
                let t = self.get(j, l).mul_trunc(other.get(l, k), maxdeg);
                acc = acc.add(&t.pad_to(maxdeg)).expect("same nvars");
            }
            acc
        })
    }

    fn maxdeg(&self) -> u32 {
        self.entries.iter().map(|s| s.maxdeg()).min().unwrap_or(0)
    }

    /// Determinant by permutation expansion (the dimension is small).
    pub fn determinant(&self) -> TruncatedSeries {
        let n = self.n;
        let maxdeg = self.maxdeg();
        let nvars = self.get(0, 0).nvars();
        let mut total = TruncatedSeries::zero(nvars, maxdeg);
        let mut perm: Vec<usize> = (0..n).collect();
        permutations(&mut perm, 0, &mut |p, sign| {
            let mut term = TruncatedSeries::constant(nvars, maxdeg, C64::new(sign, 0.0));
            for (j, &k) in p.iter().enumerate() {
                term = term.mul_trunc(self.get(j, k), maxdeg);
            }
            total = total.add(&term).expect("same nvars");
        });
        total
    }

    /// Inverse by Neumann series around the constant part.
    pub fn inverse(&self) -> Result<Self> {
        let n = self.n;
        let maxdeg = self.maxdeg();
        let nvars = self.get(0, 0).nvars();
        let b0 = self.at_origin();
        let b0_inv = b0
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::DegenerateHessian("B is singular at the base point".into()))?;
        let constant =
            |m: &CMatrix| SeriesMatrix::from_fn(n, |j, k| TruncatedSeries::constant(nvars, maxdeg, m[(j, k)]));
        // B = B0 (I + B0^{-1} B1); B^{-1} = sum_k (-B0^{-1} B1)^k B0^{-1}.
        let b1 = SeriesMatrix::from_fn(n, |j, k| {
            let mut s = self.get(j, k).clone();
            let c = s.constant_term();
            s = s.sub(&TruncatedSeries::constant(nvars, maxdeg, c)).expect("same nvars");
            s
        });
        let neg_b0_inv = constant(&(-b0_inv.clone()));
        let step = neg_b0_inv.mul(&b1, maxdeg);
        let b0_inv_s = constant(&b0_inv);
        let mut acc = b0_inv_s.clone();
        for _ in 0..maxdeg {
            // Horner: acc = B0^{-1} + step * acc
            let next = step.mul(&acc, maxdeg);
            acc = SeriesMatrix::from_fn(n, |j, k| b0_inv_s.get(j, k).add(next.get(j, k)).expect("same nvars"));
        }
        Ok(acc)
    }
}

fn permutations(p: &mut Vec<usize>, start: usize, f: &mut impl FnMut(&[usize], f64)) {
    fn sign(p: &[usize]) -> f64 {
        let mut s = 1.0;
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                if p[i] > p[j] {
                    s = -s;
                }
            }
        }
        s
    }
    if start == p.len() {
        f(p, sign(p));
        return;
    }
    for i in start..p.len() {
        p.swap(start, i);
        permutations(p, start + 1, f);
        p.swap(start, i);
    }
}

#[derive(Clone, Debug)]
pub struct PhaseData {
    n: usize,
    base: Vec<C64>,
    maxdeg: u32,
    phi4: TruncatedSeries,
    phi4_compiled: CompiledSeries,
    split: TruncatedSeries,
    quad_b: SeriesMatrix,
    /// `M = B^{-T}`, the pairing matrix of the Wick contraction.
    pairing: SeriesMatrix,
    det_b: TruncatedSeries,
    hess_det: C64,
    /// Fast-degree `>= 3` part: fast index in `(u, v)` to slow coefficient.
    remainder: BTreeMap<MultiIndex, TruncatedSeries>,
}

impl PhaseData {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn base(&self) -> &[C64] {
        &self.base
    }

    /// Truncation order of the underlying `Ψ`.
    pub fn maxdeg(&self) -> u32 {
        self.maxdeg
    }

    /// `φ` in `[y, x̃, x, ỹ]`.
    pub fn phi4(&self) -> &TruncatedSeries {
        &self.phi4
    }

    /// `φ` in `[y, x̃, u, v]`.
    pub fn split(&self) -> &TruncatedSeries {
        &self.split
    }

    pub fn quad_b(&self) -> &SeriesMatrix {
        &self.quad_b
    }

    pub fn pairing(&self) -> &SeriesMatrix {
        &self.pairing
    }

    pub fn det_b(&self) -> &TruncatedSeries {
        &self.det_b
    }

    pub fn hess_det(&self) -> C64 {
        self.hess_det
    }

    pub fn remainder(&self) -> &BTreeMap<MultiIndex, TruncatedSeries> {
        &self.remainder
    }

    /// Series coordinates of an absolute `(y, x̃, x, ỹ)`.
    fn coords4(&self, y: &[C64], xt: &[C64], x: &[C64], yt: &[C64]) -> Vec<C64> {
        let mut p = Vec::with_capacity(4 * self.n);
        p.extend(y.iter().zip(&self.base).map(|(a, b)| a - b));
        p.extend(xt.iter().zip(&self.base).map(|(a, b)| a - b.conj()));
        p.extend(x.iter().zip(&self.base).map(|(a, b)| a - b));
        p.extend(yt.iter().zip(&self.base).map(|(a, b)| a - b.conj()));
        p
    }

    /// `φ(y, x̃; x, ỹ)` at absolute coordinates.
    pub fn value(&self, y: &[C64], xt: &[C64], x: &[C64], yt: &[C64]) -> C64 {
        self.phi4_compiled.eval(&self.coords4(y, xt, x, yt))
    }

    /// `B(y, x̃)` at absolute coordinates.
    pub fn b_at(&self, y: &[C64], xt: &[C64]) -> CMatrix {
        let mut p: Vec<C64> = y.iter().zip(&self.base).map(|(a, b)| a - b).collect();
        p.extend(xt.iter().zip(&self.base).map(|(a, b)| a - b.conj()));
        self.quad_b.eval(&p)
    }
}

/// Assembles `φ`, checks that the critical set is `{x = y, ỹ = x̃}` with
/// critical value zero, and extracts `B`, `det B`, `B^{-T}` and the
/// remainder.
pub fn build_phase(p: &Polarization) -> Result<PhaseData> {
    let n = p.n();
    let psi = p.psi();
    let maxdeg = psi.maxdeg();
    let range = |a: usize| (a * n..(a + 1) * n).collect::<Vec<usize>>();
    let cat = |a: Vec<usize>, b: Vec<usize>| a.into_iter().chain(b).collect::<Vec<usize>>();

    // [y, x~, x, y~] = blocks 0, 1, 2, 3
    let t_x_yt = psi.embed(4 * n, &cat(range(2), range(3)))?;
    let t_x_xt = psi.embed(4 * n, &cat(range(2), range(1)))?;
    let t_y_yt = psi.embed(4 * n, &cat(range(0), range(3)))?;
    let t_y_xt = psi.embed(4 * n, &cat(range(0), range(1)))?;
    let phi4 = t_x_yt.sub(&t_x_xt)?.sub(&t_y_yt)?.add(&t_y_xt)?;

    check_critical_structure(&phi4, n)?;

    // Split coordinates [y, x~, u, v]: x = y + u, y~ = x~ + v.
    let var = |i: usize| TruncatedSeries::variable(4 * n, maxdeg, i);
    let mut shifted_x = Vec::with_capacity(n);
    let mut shifted_yt = Vec::with_capacity(n);
    for j in 0..n {
        shifted_x.push(var(j)?.add(&var(2 * n + j)?)?);
        shifted_yt.push(var(n + j)?.add(&var(3 * n + j)?)?);
    }
    let mut subs = Vec::with_capacity(4 * n);
    for j in 0..n {
        subs.push(var(j)?);
    }
    for j in 0..n {
        subs.push(var(n + j)?);
    }
    subs.extend(shifted_x);
    subs.extend(shifted_yt);
    let split = phi4.substitute(&subs)?;

    // Group by fast index.
    let mut by_fast: BTreeMap<MultiIndex, BTreeMap<MultiIndex, C64>> = BTreeMap::new();
    for (k, c) in split.terms() {
        let fast = k.slice(2 * n..4 * n);
        let slow = k.slice(0..2 * n);
        by_fast.entry(fast).or_default().insert(slow, *c);
    }
    let mut remainder = BTreeMap::new();
    let mut quad = BTreeMap::new();
    for (fast, slow_terms) in by_fast {
        let d = fast.degree();
        let slow = TruncatedSeries::from_terms(2 * n, maxdeg - d, slow_terms)?;
        let u_deg: u32 = fast.exponents()[..n].iter().map(|&e| e as u32).sum();
        if d >= 3 {
            remainder.insert(fast, slow);
        } else if d == 2 && u_deg == 1 {
            quad.insert(fast, slow);
        } else {
            let size = slow.sup_norm();
            if size > STRUCTURE_TOL {
                return Err(Error::CriticalStructureViolation {
                    what: format!("split phase term with fast index {fast:?}"),
                    size,
                });
            }
        }
    }
    let quad_b = SeriesMatrix::from_fn(n, |j, k| {
        let mut idx = vec![0u16; 2 * n];
        idx[j] = 1;
        idx[n + k] = 1;
        quad.get(&MultiIndex::from_slice(&idx))
            .cloned()
            .unwrap_or_else(|| TruncatedSeries::zero(2 * n, maxdeg.saturating_sub(2)))
    });

    let b0 = quad_b.at_origin();
    let smin = linalg::min_singular_value(&b0);
    if smin <= DEGENERACY_TOL {
        return Err(Error::DegenerateHessian(format!(
            "smallest singular value of B at the base is {smin:.3e}"
        )));
    }
    let hess_det = hessian_determinant(&phi4, n);
    if hess_det.norm() <= DEGENERACY_TOL {
        return Err(Error::DegenerateHessian(format!(
            "|det phi''| = {:.3e}",
            hess_det.norm()
        )));
    }
    let det_b = quad_b.determinant();
    let pairing = quad_b.inverse()?.transpose();

    Ok(PhaseData {
        n,
        base: p.base().to_vec(),
        maxdeg,
        phi4_compiled: phi4.compile(),
        phi4,
        split,
        quad_b,
        pairing,
        det_b,
        hess_det,
        remainder,
    })
}

/// Checks that `φ`, `∂_x φ`, `∂_ỹ φ`, `∂_y φ`, `∂_x̃ φ` vanish on
/// `{x = y, ỹ = x̃}` coefficientwise.
fn check_critical_structure(phi4: &TruncatedSeries, n: usize) -> Result<()> {
    let maxdeg = phi4.maxdeg();
    let mut diag = Vec::with_capacity(4 * n);
    for block in [0, 1, 0, 1] {
        for j in 0..n {
            diag.push(TruncatedSeries::variable(2 * n, maxdeg, block * n + j)?);
        }
    }
    let check = |s: &TruncatedSeries, what: String| -> Result<()> {
        let size = s.substitute(&diag)?.sup_norm();
        if size > STRUCTURE_TOL {
            return Err(Error::CriticalStructureViolation { what, size });
        }
        Ok(())
    };
    check(phi4, "critical value".into())?;
    let names = ["d/dy", "d/dx~", "d/dx", "d/dy~"];
    for (block, name) in names.iter().enumerate() {
        for j in 0..n {
            check(&phi4.diff(block * n + j)?, format!("{name}_{j}"))?;
        }
    }
    Ok(())
}

/// `det φ''_{(x,ỹ),(x,ỹ)}` at the base point.
fn hessian_determinant(phi4: &TruncatedSeries, n: usize) -> C64 {
    let m = 2 * n;
    let h = CMatrix::from_fn(m, m, |a, b| {
        let mut idx = vec![0u16; 4 * n];
        idx[2 * n + a] += 1;
        idx[2 * n + b] += 1;
        let c = phi4.coeff_of(&idx);
        if a == b {
            c * 2.0
        } else {
            c
        }
    });
    linalg::determinant(&h)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContourKind {
    AmplitudeContour,
    InversionContour,
}

/// An explicit good contour.
///
/// * `AmplitudeContour` at `(y₀, x̃₀)`: `u ↦ (x, ỹ) = (y₀ + u, x̃₀ - conj(Bᵀ u))`
///   with `B = B(y₀, x̃₀)`.
/// * `InversionContour` at `x`: `y ↦ (y, θ(x, y))`.
#[derive(Clone, Debug)]
pub struct ContourSpec {
    pub kind: ContourKind,
    /// `(y₀, x̃₀)` concatenated, or `x`.
    pub center: Vec<C64>,
    /// `Bᵀ` at the center (amplitude contours only).
    pub bt: Option<CMatrix>,
    pub margin: Option<f64>,
}

impl ContourSpec {
    /// Point `(x, ỹ)` of an amplitude contour at parameter `u`.
    pub fn amplitude_point(&self, u: &[C64]) -> (Vec<C64>, Vec<C64>) {
        let n = u.len();
        let bt = self.bt.as_ref().expect("amplitude contour");
        let x = (0..n).map(|j| self.center[j] + u[j]).collect();
        let yt = (0..n)
            .map(|j| {
                let mut s = C64::new(0.0, 0.0);
                for k in 0..n {
                    s += bt[(j, k)] * u[k];
                }
                self.center[n + j] - s.conj()
            })
            .collect();
        (x, yt)
    }
}

pub fn build_good_contour(pd: &PhaseData, y0: &[C64], xt0: &[C64]) -> Result<ContourSpec> {
    let b = pd.b_at(y0, xt0);
    let smin = linalg::min_singular_value(&b);
    if smin <= DEGENERACY_TOL {
        return Err(Error::DegenerateHessian(format!(
            "B has smallest singular value {smin:.3e} at the contour center"
        )));
    }
    let mut center = y0.to_vec();
    center.extend_from_slice(xt0);
    Ok(ContourSpec {
        kind: ContourKind::AmplitudeContour,
        center,
        bt: Some(b.transpose()),
        margin: None,
    })
}

pub fn build_inversion_contour(_w: &Weight, x: &[C64]) -> ContourSpec {
    ContourSpec {
        kind: ContourKind::InversionContour,
        center: x.to_vec(),
        bt: None,
        margin: None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub kind: String,
    pub radius: f64,
    pub nsamples: usize,
    pub margin: f64,
    pub argmin: Vec<C64>,
}

fn min_ratio<I>(samples: I) -> (f64, Vec<C64>)
where
    I: Iterator<Item = (f64, Vec<C64>)>,
{
    let mut best = (f64::INFINITY, Vec::new());
    for (r, p) in samples {
        if r < best.0 {
            best = (r, p);
        }
    }
    best
}

fn finish(kind: &str, radius: f64, nsamples: usize, best: (f64, Vec<C64>)) -> Result<MarginReport> {
    if !(best.0 > 0.0) {
        return Err(Error::BadContour {
            kind: kind.into(),
            margin: best.0,
        });
    }
    Ok(MarginReport {
        kind: kind.into(),
        radius,
        nsamples,
        margin: best.0,
        argmin: best.1,
    })
}

/// Samples `-Re φ / (|u|² + |v|²)` for `u` in the ball of the given radius.
pub fn verify_amplitude_contour(
    pd: &PhaseData,
    c: &mut ContourSpec,
    radius: f64,
    nsamples: usize,
    seed: u64,
) -> Result<MarginReport> {
    let n = pd.n;
    let zero = vec![C64::new(0.0, 0.0); n];
    let (y0, xt0) = c.center.split_at(n);
    let pts = sampling::ball_points(&zero, radius, nsamples, seed);
    let best = min_ratio(pts.into_iter().map(|u| {
        let (x, yt) = c.amplitude_point(&u);
        let phi = pd.value(y0, xt0, &x, &yt);
        let d2: f64 = u.iter().map(|z| z.norm_sqr()).sum::<f64>()
            + yt.iter().zip(xt0).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
        (-phi.re / d2, u)
    }));
    let rep = finish("amplitude_contour", radius, nsamples, best)?;
    c.margin = Some(rep.margin);
    Ok(rep)
}

/// `(Φ(x) - Φ(y) + Im((x - y)·θ(x, y))) / |x - y|²`.
pub fn inversion_ratio(w: &Weight, x: &[C64], y: &[C64]) -> f64 {
    let theta = w.theta(x, y);
    let pairing: C64 = x.iter().zip(y).zip(&theta).map(|((a, b), t)| (a - b) * t).sum();
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b).norm_sqr()).sum();
    (w.value(x) - w.value(y) + pairing.im) / d2
}

/// Samples the inversion-contour ratio for `y` in the ball of the given
/// radius around the weight's base point.
pub fn verify_inversion_contour(
    w: &Weight,
    c: &mut ContourSpec,
    radius: f64,
    nsamples: usize,
    seed: u64,
) -> Result<MarginReport> {
    let x = c.center.clone();
    let pts = sampling::ball_points(w.base(), radius, nsamples, seed);
    let best = min_ratio(pts.into_iter().filter_map(|y| {
        let d2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).norm_sqr()).sum();
        (d2 > 1e-16).then(|| (inversion_ratio(w, &x, &y), y))
    }));
    let rep = finish("inversion_contour", radius, nsamples, best)?;
    c.margin = Some(rep.margin);
    Ok(rep)
}
