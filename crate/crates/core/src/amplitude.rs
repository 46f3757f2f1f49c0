//! Formal stationary phase for
//! `(A u)(y, x̃) = h^{-n} ∬_Γ e^{2φ(y, x̃; x, ỹ)/h} u(x, ỹ) dx dỹ`
//! and the order-by-order solution of `A a = 1`.
//!
//! With `x = y + u`, `ỹ = x̃ + v` the phase is `uᵀ B v + R(u, v)` where `R`
//! has fast degree `>= 3`. The expansion is
//!
//! ```text
//! (A u)(y, x̃) = c₀ Σ_j h^j (T_j u)(y, x̃),   c₀ = (π/2)^n / det B,
//! Σ_j h^j T_j u = [exp(-(h/2) ⟨∂_u, M ∂_v⟩) u(y + u, x̃ + v) e^{2R/h}]_{u=v=0}
//! ```
//!
//! with `M = B^{-T}`. A fast monomial of degree `d` from `R^q` carries weight
//! `d/2 - q` in powers of `h`; only weights `<= hmax` are kept.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::PhaseData;
use crate::sampling;
use crate::tseries::{factorial, HGradedSeries, MultiIndex, SeriesText, TruncatedSeries, C64};

fn one() -> C64 {
    C64::new(1.0, 0.0)
}

/// Precomputed remainder exponential and Wick data for one phase.
struct Engine<'a> {
    pd: &'a PhaseData,
    hmax: usize,
    /// `(q, δ) ↦ (2^q / q!) [R^q]_δ`
    exp_r: Vec<(u32, MultiIndex, TruncatedSeries)>,
    /// `M_{jk}^e`
    m_pows: Vec<Vec<Vec<TruncatedSeries>>>,
    wick_cache: HashMap<MultiIndex, TruncatedSeries>,
}

impl<'a> Engine<'a> {
    fn new(pd: &'a PhaseData, hmax: usize, dmax: u32) -> Self {
        let n = pd.n();
        let slow = 2 * n;
        let hm = hmax as i64;
        let target = |d: u32, q: u32| -> Option<u32> {
            // weight w = d/2 - q; keep w <= hmax, slow degree dmax - 2 ceil(w)
            let twice_w = d as i64 - 2 * q as i64;
            if twice_w > 2 * hm {
                return None;
            }
            let ceil_w = (twice_w + 1).div_euclid(2);
            let t = dmax as i64 - 2 * ceil_w;
            (t >= 0).then_some(t as u32)
        };

        let mut exp_r = vec![(
            0u32,
            MultiIndex::zero(slow),
            TruncatedSeries::constant(slow, dmax, one()),
        )];
        let mut prev: BTreeMap<MultiIndex, TruncatedSeries> = BTreeMap::new();
        prev.insert(MultiIndex::zero(slow), TruncatedSeries::constant(slow, dmax, one()));
        for q in 1..=(2 * hmax as u32) {
            let mut next: BTreeMap<MultiIndex, TruncatedSeries> = BTreeMap::new();
            let scale = C64::new(2.0 / q as f64, 0.0);
            for (d1, e1) in &prev {
                for (d2, r2) in pd.remainder() {
                    let d = d1.plus(d2);
                    let Some(t) = target(d.degree(), q) else {
                        continue;
                    };
                    let prod = e1.mul_trunc(r2, t).scale(scale);
                    match next.get_mut(&d) {
                        Some(acc) => *acc = acc.add(&prod).expect("same nvars"),
                        None => {
                            next.insert(d, prod);
                        }
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            for (d, s) in &next {
                exp_r.push((q, d.clone(), s.clone()));
            }
            prev = next;
        }

        let m = pd.pairing();
        let top = 3 * hmax + 1;
        let m_pows = (0..n)
            .map(|j| {
                (0..n)
                    .map(|k| {
                        let mjk = m.get(j, k);
                        let mut v = vec![TruncatedSeries::constant(slow, mjk.maxdeg(), one())];
                        for e in 1..=top {
                            let next = v[e - 1].mul_trunc(mjk, mjk.maxdeg());
                            v.push(next);
                        }
                        v
                    })
                    .collect()
            })
            .collect();

        Engine {
            pd,
            hmax,
            exp_r,
            m_pows,
            wick_cache: HashMap::new(),
        }
    }

    /// `(-1/2)^p α! β! Σ_K Π M_{jk}^{K_jk} / K_jk!` over nonnegative integer
    /// tables `K` with row sums `α` and column sums `β`.
    fn wick(&mut self, ab: &MultiIndex) -> TruncatedSeries {
        if let Some(w) = self.wick_cache.get(ab) {
            return w.clone();
        }
        let n = self.pd.n();
        let alpha: Vec<u16> = ab.exponents()[..n].to_vec();
        let beta: Vec<u16> = ab.exponents()[n..].to_vec();
        let p: u32 = alpha.iter().map(|&a| a as u32).sum();
        let maxdeg = self.m_pows[0][0][0].maxdeg();
        let mut total = TruncatedSeries::zero(2 * n, maxdeg);
        let mut table = vec![0u16; n * n];
        let mut cols = beta.clone();
        self.tables(&alpha, &mut cols, 0, 0, &mut table, &mut total);
        let mut pref = (-0.5f64).powi(p as i32);
        for &a in alpha.iter().chain(&beta) {
            pref *= factorial(a as u32);
        }
        let w = total.scale_re(pref);
        self.wick_cache.insert(ab.clone(), w.clone());
        w
    }

    fn tables(
        &self,
        alpha: &[u16],
        cols: &mut [u16],
        j: usize,
        k: usize,
        table: &mut [u16],
        total: &mut TruncatedSeries,
    ) {
        let n = alpha.len();
        if j == n {
            if cols.iter().all(|&c| c == 0) {
                let maxdeg = total.maxdeg();
                let mut term = TruncatedSeries::constant(2 * n, maxdeg, one());
                let mut denom = 1.0;
                for a in 0..n {
                    for b in 0..n {
                        let e = table[a * n + b] as usize;
                        if e > 0 {
                            term = term.mul_trunc(&self.m_pows[a][b][e], maxdeg);
                            denom *= factorial(e as u32);
                        }
                    }
                }
                *total = total.add(&term.scale_re(1.0 / denom)).expect("same nvars");
            }
            return;
        }
        let used: u16 = table[j * n..j * n + k].iter().sum();
        let left = alpha[j] - used;
        if k == n - 1 {
            if left <= cols[k] {
                table[j * n + k] = left;
                cols[k] -= left;
                self.tables(alpha, cols, j + 1, 0, table, total);
                cols[k] += left;
                table[j * n + k] = 0;
            }
            return;
        }
        for e in 0..=left.min(cols[k]) {
            table[j * n + k] = e;
            cols[k] -= e;
            self.tables(alpha, cols, j, k + 1, table, total);
            cols[k] += e;
        }
        table[j * n + k] = 0;
    }

    /// `[T_0 a, ..., T_jmax a]`; `T_j a` is truncated at `maxdeg(a) - 2j`.
    fn apply(&mut self, a: &TruncatedSeries, jmax: usize) -> Vec<TruncatedSeries> {
        let n = self.pd.n();
        let slow = 2 * n;
        let da = a.maxdeg();
        let jmax = jmax.min(self.hmax);
        let out_deg = |j: usize| da.saturating_sub(2 * j as u32);

        // Taylor coefficients U_γ = ∂^γ a / γ!, |γ| <= 2 jmax.
        let mut taylor: Vec<(MultiIndex, TruncatedSeries)> = Vec::new();
        let mut stack = vec![MultiIndex::zero(slow)];
        let mut seen = std::collections::HashSet::new();
        while let Some(g) = stack.pop() {
            if !seen.insert(g.clone()) {
                continue;
            }
            let d = a.diff_multi(&g).expect("index in range").scale_re(1.0 / g.factorial());
            if !d.is_zero() {
                taylor.push((g.clone(), d));
            }
            if g.degree() < 2 * jmax as u32 {
                for v in 0..slow {
                    stack.push(g.plus(&MultiIndex::unit(slow, v)));
                }
            }
        }
        taylor.sort_by(|x, y| x.0.cmp(&y.0));

        // F[j][(α, β)] = Σ_{γ + δ = (α, β)} U_γ E_{q, δ} with j = p - q.
        let mut f: Vec<BTreeMap<MultiIndex, TruncatedSeries>> = vec![BTreeMap::new(); jmax + 1];
        for (q, delta, e) in &self.exp_r {
            for (g, ug) in &taylor {
                let ab = g.plus(delta);
                let ex = ab.exponents();
                let pu: u32 = ex[..n].iter().map(|&x| x as u32).sum();
                let pv: u32 = ex[n..].iter().map(|&x| x as u32).sum();
                if pu != pv || pu < *q {
                    continue;
                }
                let j = (pu - q) as usize;
                if j > jmax {
                    continue;
                }
                let prod = ug.mul_trunc(e, out_deg(j));
                match f[j].get_mut(&ab) {
                    Some(acc) => *acc = acc.add(&prod).expect("same nvars"),
                    None => {
                        f[j].insert(ab, prod);
                    }
                }
            }
        }

        let mut out = Vec::with_capacity(jmax + 1);
        for (j, fj) in f.into_iter().enumerate() {
            let mut acc = TruncatedSeries::zero(slow, out_deg(j));
            for (ab, s) in fj {
                let w = self.wick(&ab);
                acc = acc.add(&s.mul_trunc(&w, out_deg(j))).expect("same nvars");
            }
            out.push(acc);
        }
        out
    }
}

/// `c₀(y, x̃) = (π/2)^n / det B(y, x̃)`.
pub fn leading_factor(pd: &PhaseData) -> Result<TruncatedSeries> {
    let k = (PI / 2.0).powi(pd.n() as i32);
    Ok(pd.det_b().invert()?.scale_re(k))
}

/// `Σ_{j=1}^{m} T_j u_{m-j}` accumulated in increasing `j`, where
/// `applied[k][j] = T_j u_k`. Both the solver and the expansion use this
/// order, so `A a = 1` holds without rounding residue.
fn corrections(applied: &[Vec<TruncatedSeries>], m: usize) -> Result<TruncatedSeries> {
    let nvars = applied[0][0].nvars();
    let mut acc: Option<TruncatedSeries> = None;
    for j in 1..=m {
        if let Some(t) = applied.get(m - j).and_then(|row| row.get(j)) {
            acc = Some(match acc {
                Some(a) => a.add(t)?,
                None => t.clone(),
            });
        }
    }
    Ok(acc.unwrap_or_else(|| TruncatedSeries::zero(nvars, u32::MAX)))
}

/// Formal expansion of `A u` through order `h^hmax`.
///
/// The `k`-th input term must be resolved to degree `2(hmax - k) + 2`.
pub fn formal_expansion(pd: &PhaseData, u: &HGradedSeries, hmax: usize) -> Result<HGradedSeries> {
    let n = pd.n();
    if u.nvars().is_some_and(|v| v != 2 * n) {
        return Err(Error::VariableMismatch {
            left: 2 * n,
            right: u.nvars().unwrap_or(0),
        });
    }
    for (k, t) in u.terms().iter().enumerate().take(hmax + 1) {
        let need = 2 * (hmax - k) as u32 + 2;
        if t.maxdeg() < need {
            return Err(Error::InsufficientDegree(format!(
                "input term h^{k} has maxdeg {} but order {hmax} needs {need}",
                t.maxdeg()
            )));
        }
    }
    let c0 = leading_factor(pd)?;
    let dmax = u.terms().iter().map(|t| t.maxdeg()).max().unwrap_or(0);
    let mut engine = Engine::new(pd, hmax, dmax);
    let applied: Vec<Vec<TruncatedSeries>> = u
        .terms()
        .iter()
        .enumerate()
        .take(hmax + 1)
        .map(|(k, t)| engine.apply(t, hmax - k))
        .collect();
    let terms = (0..=hmax)
        .map(|m| {
            let corr = corrections(&applied, m)?;
            match applied.get(m) {
                Some(row) => corr.add(&row[0])?.mul(&c0),
                None => corr.mul(&c0),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    HGradedSeries::new(terms)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub radius: f64,
    pub nsamples: usize,
    /// `sup |a_k|` on the distinguished boundary.
    pub sup_norms: Vec<f64>,
    /// `(sup |a_k| / k^k)^{1/(k+1)}`.
    pub normalized: Vec<f64>,
    pub median: f64,
    /// Largest of `max/median` and `median/min` over nonzero entries.
    pub band: f64,
    pub within_band: bool,
    /// Twice the largest normalized value.
    pub growth_c: f64,
}

/// The classical analytic symbol `a = Σ a_k h^k` solving `A a = 1`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Amplitude {
    pub n: usize,
    pub base: Vec<C64>,
    pub order: usize,
    #[serde(with = "series_list")]
    pub coeffs: Vec<TruncatedSeries>,
    pub c0: TruncatedSeries,
    pub growth: Option<GrowthReport>,
}

mod series_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[TruncatedSeries], s: S) -> std::result::Result<S::Ok, S::Error> {
        let texts: Vec<SeriesText> = v.iter().map(|t| t.to_text()).collect();
        texts.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<TruncatedSeries>, D::Error> {
        let texts = Vec::<SeriesText>::deserialize(d)?;
        texts
            .into_iter()
            .map(|t| TruncatedSeries::try_from(t).map_err(serde::de::Error::custom))
            .collect()
    }
}

impl Amplitude {
    pub fn growth_c(&self) -> Option<f64> {
        self.growth.as_ref().map(|g| g.growth_c)
    }

    /// Series coordinates of `(x, ỹ)`.
    pub fn coords(&self, x: &[C64], yt: &[C64]) -> Vec<C64> {
        let mut p: Vec<C64> = x.iter().zip(&self.base).map(|(a, b)| a - b).collect();
        p.extend(yt.iter().zip(&self.base).map(|(a, b)| a - b.conj()));
        p
    }

    pub fn as_graded(&self) -> HGradedSeries {
        HGradedSeries::new(self.coeffs.clone()).expect("shared nvars")
    }

    /// A copy with every coefficient multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Amplitude {
        let mut a = self.clone();
        a.coeffs = a.coeffs.iter().map(|t| t.scale_re(c)).collect();
        a.growth = None;
        a
    }
}

/// Solves `A a = 1` through order `N`.
pub fn solve_amplitude(pd: &PhaseData, order: usize) -> Result<Amplitude> {
    let n = pd.n();
    let m = pd.maxdeg();
    let need = 2 * order as u32 + 4;
    if m < need {
        return Err(Error::InsufficientDegree(format!(
            "amplitude order {order} needs weight degree >= 2N+4 = {need}, got {m}"
        )));
    }
    let c0 = leading_factor(pd)?;
    let a0 = pd.det_b().scale_re((2.0 / PI).powi(n as i32));
    let mut engine = Engine::new(pd, order, a0.maxdeg());
    // applied[k][j] = T_j a_k
    let mut applied: Vec<Vec<TruncatedSeries>> = Vec::with_capacity(order + 1);
    let mut coeffs = vec![a0];
    for mm in 0..=order {
        if mm > 0 {
            coeffs.push(corrections(&applied, mm)?.scale_re(-1.0));
        }
        let t = engine.apply(&coeffs[mm], order - mm);
        applied.push(t);
    }
    Ok(Amplitude {
        n,
        base: pd.base().to_vec(),
        order,
        coeffs,
        c0,
        growth: None,
    })
}

/// Estimates the constant of `sup |a_k| <= C^{k+1} k^k` on the distinguished
/// boundary `|x - x₀| = |ỹ - x̄₀| = radius`, with a safety factor 2.
pub fn estimate_growth(a: &Amplitude, radius: f64, nsamples: usize, seed: u64) -> GrowthReport {
    let zero = vec![C64::new(0.0, 0.0); 2 * a.n];
    let pts = sampling::torus_points(&zero, radius, nsamples, seed);
    let sup_norms: Vec<f64> = a
        .coeffs
        .iter()
        .map(|s| {
            let c = s.compile();
            pts.iter().map(|p| c.eval(p).norm()).fold(0.0, f64::max)
        })
        .collect();
    let normalized: Vec<f64> = sup_norms
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let kk = if k == 0 { 1.0 } else { (k as f64).powi(k as i32) };
            (s / kk).powf(1.0 / (k as f64 + 1.0))
        })
        .collect();
    let mut nz: Vec<f64> = normalized.iter().copied().filter(|&v| v > 0.0).collect();
    nz.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let median = if nz.is_empty() {
        0.0
    } else if nz.len() % 2 == 1 {
        nz[nz.len() / 2]
    } else {
        0.5 * (nz[nz.len() / 2 - 1] + nz[nz.len() / 2])
    };
    let band = if median > 0.0 {
        (nz[nz.len() - 1] / median).max(median / nz[0])
    } else {
        f64::INFINITY
    };
    let growth_c = 2.0 * normalized.iter().copied().fold(0.0, f64::max);
    GrowthReport {
        radius,
        nsamples,
        sup_norms,
        normalized,
        median,
        band,
        within_band: band <= 2.0,
        growth_c,
    }
}

/// A realization `Σ_{k <= K} a_k h^k` with its cutoff `K`.
#[derive(Clone, Debug)]
pub struct Realized {
    pub series: TruncatedSeries,
    pub cutoff: usize,
}

/// Index `K = min(N, floor(1 / (C e h)))`, at least zero.
pub fn realization_cutoff(order: usize, growth_c: f64, h: f64) -> usize {
    let k = 1.0 / (growth_c * std::f64::consts::E * h);
    if !k.is_finite() {
        return order;
    }
    (k.floor().max(0.0) as usize).min(order)
}

/// `Σ_{k <= K} a_k h^k` with `K` from [`realization_cutoff`]. Terms of lower
/// truncation order are zero-padded to the order of `a₀`.
pub fn realize(a: &Amplitude, h: f64) -> Result<Realized> {
    let c = a
        .growth_c()
        .ok_or_else(|| Error::ConfigInvalid("growth constant not estimated; call estimate_growth first".into()))?;
    Ok(realize_to(a, h, realization_cutoff(a.order, c, h)))
}

/// `Σ_{k <= K} a_k h^k` for an explicit `K`.
pub fn realize_to(a: &Amplitude, h: f64, cutoff: usize) -> Realized {
    let cutoff = cutoff.min(a.order);
    let top = a.coeffs[0].maxdeg();
    let mut s = TruncatedSeries::zero(2 * a.n, top);
    let mut hk = 1.0;
    for t in a.coeffs.iter().take(cutoff + 1) {
        s = s.add(&t.pad_to(top).scale_re(hk)).expect("same nvars");
        hk *= h;
    }
    Realized { series: s, cutoff }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::build_phase;
    use crate::weight::{examples, polarize, validate_weight};

    fn o(n: usize) -> Vec<C64> {
        vec![C64::new(0.0, 0.0); n]
    }

    fn phase_for(raw: TruncatedSeries) -> PhaseData {
        let n = raw.nvars() / 2;
        let w = validate_weight(&raw, &o(n), 1.0).unwrap();
        build_phase(&polarize(&w).unwrap()).unwrap()
    }

    fn mono(exps: &[u16], maxdeg: u32) -> TruncatedSeries {
        TruncatedSeries::monomial(exps.len(), maxdeg, &MultiIndex::from_slice(exps), one())
    }

    #[test]
    fn gaussian_expansion_of_one() {
        let pd = phase_for(examples::quadratic(0.5, 12));
        let u = HGradedSeries::leading(mono(&[0, 0], 10));
        let r = formal_expansion(&pd, &u, 3).unwrap();
        assert!((r.terms()[0].constant_term() - C64::new(PI, 0.0)).norm() < 1e-14);
        assert_eq!(r.terms()[0].nnz(), 1);
        for t in &r.terms()[1..] {
            assert!(t.sup_norm() < 1e-15);
        }
    }

    #[test]
    fn gaussian_pairing_of_x_ytilde() {
        // One contraction: <u v> = -(h/2) M = -h, so A(x y~) = pi (x~ y - h).
        let pd = phase_for(examples::quadratic(0.5, 12));
        let u = HGradedSeries::leading(mono(&[1, 1], 10));
        let r = formal_expansion(&pd, &u, 3).unwrap();
        assert!((r.terms()[0].coeff_of(&[1, 1]) - C64::new(PI, 0.0)).norm() < 1e-14);
        assert!((r.terms()[1].constant_term() - C64::new(-PI, 0.0)).norm() < 1e-14);
        assert!(r.terms()[1].coeff_of(&[1, 1]).norm() < 1e-15);
        assert!(r.terms()[2].sup_norm() < 1e-15);
    }

    #[test]
    fn zero_maps_to_zero() {
        let pd = phase_for(examples::quartic(0.1, 12));
        let u = HGradedSeries::leading(TruncatedSeries::zero(2, 10));
        let r = formal_expansion(&pd, &u, 3).unwrap();
        assert!(r.terms().iter().all(|t| t.is_zero()));
    }

    #[test]
    fn expansion_rejects_low_degree() {
        let pd = phase_for(examples::quartic(0.1, 12));
        let u = HGradedSeries::leading(mono(&[0, 0], 4));
        assert!(matches!(
            formal_expansion(&pd, &u, 3),
            Err(Error::InsufficientDegree(_))
        ));
    }

    #[test]
    fn two_dimensional_pairing() {
        // Psi = x1 y1~ + 2 x2 y2~ + x1 y2~ / 2, B = [[1, 1/2], [0, 2]].
        let raw = TruncatedSeries::from_terms(
            4,
            8,
            [
                (MultiIndex::from_slice(&[1, 0, 1, 0]), C64::new(1.0, 0.0)),
                (MultiIndex::from_slice(&[0, 1, 0, 1]), C64::new(2.0, 0.0)),
                (MultiIndex::from_slice(&[1, 0, 0, 1]), C64::new(0.25, 0.0)),
                (MultiIndex::from_slice(&[0, 1, 1, 0]), C64::new(0.25, 0.0)),
            ],
        )
        .unwrap();
        let pd = phase_for(raw);
        let b = pd.quad_b().at_origin();
        let m = b.clone().try_inverse().unwrap().transpose();
        // A(x_j y~_k) at order h: -(1/2) M_jk times c0
        let c0 = (PI / 2.0).powi(2) / b.determinant();
        for j in 0..2 {
            for k in 0..2 {
                let mut e = vec![0u16; 4];
                e[j] += 1;
                e[2 + k] += 1;
                let u = HGradedSeries::leading(mono(&e, 8));
                let r = formal_expansion(&pd, &u, 2).unwrap();
                let got = r.terms()[1].constant_term();
                let want = -0.5 * m[(j, k)] * c0;
                assert!((got - want).norm() < 1e-13, "j={j} k={k}: {got} vs {want}");
            }
        }
        // Two contractions on u1^2 v1^2: (-1/2)^2 2! 2! M11^2 / 2!
        let u = HGradedSeries::leading(mono(&[2, 0, 2, 0], 8));
        let r = formal_expansion(&pd, &u, 2).unwrap();
        let want = 0.25 * 2.0 * m[(0, 0)] * m[(0, 0)] * c0;
        assert!((r.terms()[2].constant_term() - want).norm() < 1e-13);
    }

    #[test]
    fn gaussian_amplitude() {
        let pd = phase_for(examples::quadratic(0.5, 16));
        let a = solve_amplitude(&pd, 6).unwrap();
        assert!((a.coeffs[0].constant_term() - C64::new(1.0 / PI, 0.0)).norm() < 1e-15);
        assert_eq!(a.coeffs[0].nnz(), 1);
        for k in 1..=6 {
            assert!(a.coeffs[k].sup_norm() < 1e-15);
        }
    }

    #[test]
    fn quadratic_amplitude() {
        for lambda in [0.5, 1.0, 2.0] {
            let pd = phase_for(examples::quadratic(lambda, 12));
            let a = solve_amplitude(&pd, 4).unwrap();
            assert!((a.coeffs[0].constant_term().re - 2.0 * lambda / PI).abs() < 1e-14);
            assert!(a.coeffs[1..].iter().all(|t| t.sup_norm() < 1e-14));
        }
    }

    #[test]
    fn degree_budget_is_enforced() {
        let pd = phase_for(examples::quartic(0.1, 10));
        assert!(solve_amplitude(&pd, 3).is_ok());
        assert!(matches!(solve_amplitude(&pd, 4), Err(Error::InsufficientDegree(_))));
    }

    #[test]
    fn solved_amplitude_satisfies_defining_equation() {
        for raw in [examples::quartic(0.1, 16), examples::cubic(0.1, 12)] {
            let order = (raw.maxdeg() as usize - 4) / 2;
            let pd = phase_for(raw);
            let a = solve_amplitude(&pd, order).unwrap();
            let r = formal_expansion(&pd, &a.as_graded(), order).unwrap();
            let one_minus = r.terms()[0].sub(&TruncatedSeries::constant(2, 0, one())).unwrap();
            assert!(one_minus.sup_norm() < 1e-12);
            for t in &r.terms()[1..] {
                assert!(t.sup_norm() < 1e-10, "{}", t.sup_norm());
            }
        }
    }

    #[test]
    fn leading_symbol_is_scaled_det_b() {
        let pd = phase_for(examples::quartic(0.1, 12));
        let a = solve_amplitude(&pd, 2).unwrap();
        let want = 2.0 / PI * pd.quad_b().at_origin()[(0, 0)];
        assert!((a.coeffs[0].constant_term() - want).norm() < 1e-14);
    }

    #[test]
    fn quartic_first_correction() {
        // Psi = x y~/2 + eps x^2 y~^2, so a0 = (2/pi)(1/2 + 4 eps y x~). At the
        // base T_1 a0 has two diagrams: one pairing on d_x d_y~ a0, and the
        // u^2 v^2 remainder coefficient eps with two pairings.
        let eps = 0.1;
        let pd = phase_for(examples::quartic(eps, 12));
        let a = solve_amplitude(&pd, 2).unwrap();
        assert!((a.coeffs[0].coeff_of(&[1, 1]).re - 8.0 * eps / PI).abs() < 1e-14);
        let m = 2.0;
        let pairing = -0.5 * m * (8.0 * eps / PI);
        let remainder = (2.0 * eps) * (0.25 * 2.0 * 2.0 * m * m / 2.0) / PI;
        let t1 = pairing + remainder;
        assert!((a.coeffs[1].constant_term().re + t1).abs() < 1e-14);
        assert!((a.coeffs[1].constant_term().re - 4.0 * eps / PI).abs() < 1e-14);
    }

    #[test]
    fn growth_and_realization() {
        let pd = phase_for(examples::quadratic(0.5, 20));
        let a = solve_amplitude(&pd, 8).unwrap();
        let g = estimate_growth(&a, 0.3, 256, 1);
        assert!((g.growth_c - 2.0 / PI).abs() < 1e-14);
        let mut a = a;
        a.growth = Some(g.clone());
        let r = realize(&a, 0.1).unwrap();
        assert!((r.series.constant_term().re - 1.0 / PI).abs() < 1e-15);
        assert_eq!(r.series.nnz(), 1);
        let s = estimate_growth(&a.scaled(2.0), 0.3, 256, 1);
        assert!((s.growth_c - 2.0 * g.growth_c).abs() < 1e-14);

        assert_eq!(
            realization_cutoff(8, 2.0 / PI, 1.0 / (2.0 / PI * std::f64::consts::E)),
            1
        );
        assert_eq!(realization_cutoff(8, 2.0 / PI, 1.0), 0);
        assert_eq!(realization_cutoff(8, 2.0 / PI, 1e-4), 8);
    }

    #[test]
    fn amplitude_round_trips_through_json() {
        let pd = phase_for(examples::quartic(0.1, 12));
        let a = solve_amplitude(&pd, 2).unwrap();
        let s = serde_json::to_string(&a).unwrap();
        let b: Amplitude = serde_json::from_str(&s).unwrap();
        assert_eq!(a.coeffs, b.coeffs);
    }
}
