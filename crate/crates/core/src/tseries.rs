//! Truncated multivariate power series over complex coefficients.
//!
//! A [`TruncatedSeries`] is a sparse polynomial in `nvars` complex variables
//! that stands for a germ known up to (and including) total degree `maxdeg`.
//! Every other module expresses its holomorphic objects in this form, always
//! in displacement coordinates centered at a base point.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Exponent vector of a monomial.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(SmallVec<[u16; 8]>);

impl MultiIndex {
    pub fn zero(nvars: usize) -> Self {
        MultiIndex(SmallVec::from_elem(0, nvars))
    }

    pub fn from_slice(exps: &[u16]) -> Self {
        MultiIndex(SmallVec::from_slice(exps))
    }

    pub fn unit(nvars: usize, var: usize) -> Self {
        let mut m = Self::zero(nvars);
        m.0[var] = 1;
        m
    }

    pub fn nvars(&self) -> usize {
        self.0.len()
    }

    pub fn exponents(&self) -> &[u16] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&e| e as u32).sum()
    }

    pub fn plus(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// Product of factorials of the exponents.
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&e| factorial(e as u32)).product()
    }

    /// Sub-index covering variables `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> MultiIndex {
        MultiIndex(SmallVec::from_slice(&self.0[range]))
    }

    /// Concatenation `(self, other)`.
    pub fn concat(&self, other: &MultiIndex) -> MultiIndex {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        MultiIndex(v)
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0.as_slice())
    }
}

pub(crate) fn factorial(k: u32) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Sparse truncated power series.
///
/// Absent keys are zero coefficients. No stored key exceeds `maxdeg`, and
/// arithmetic never creates one.
#[derive(Clone, PartialEq)]
pub struct TruncatedSeries {
    nvars: usize,
    maxdeg: u32,
    coeffs: BTreeMap<MultiIndex, C64>,
}

impl fmt::Debug for TruncatedSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TruncatedSeries")
            .field("nvars", &self.nvars)
            .field("maxdeg", &self.maxdeg)
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl TruncatedSeries {
    pub fn zero(nvars: usize, maxdeg: u32) -> Self {
        TruncatedSeries {
            nvars,
            maxdeg,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, maxdeg: u32, c: C64) -> Self {
        let mut s = Self::zero(nvars, maxdeg);
        if c != C64::new(0.0, 0.0) {
            s.coeffs.insert(MultiIndex::zero(nvars), c);
        }
        s
    }

    /// The coordinate function of variable `var`.
    pub fn variable(nvars: usize, maxdeg: u32, var: usize) -> Result<Self> {
        if var >= nvars {
            return Err(Error::BadVariable { var, nvars });
        }
        Ok(Self::monomial(
            nvars,
            maxdeg,
            &MultiIndex::unit(nvars, var),
            C64::new(1.0, 0.0),
        ))
    }

    pub fn monomial(nvars: usize, maxdeg: u32, idx: &MultiIndex, c: C64) -> Self {
        let mut s = Self::zero(nvars, maxdeg);
        if idx.degree() <= maxdeg && c != C64::new(0.0, 0.0) {
            s.coeffs.insert(idx.clone(), c);
        }
        s
    }

    /// Builds a series from `(exponents, coefficient)` pairs. Repeated keys
    /// accumulate; keys above `maxdeg` are dropped.
    pub fn from_terms<I>(nvars: usize, maxdeg: u32, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (MultiIndex, C64)>,
    {
        let mut s = Self::zero(nvars, maxdeg);
        for (k, c) in terms {
            if k.nvars() != nvars {
                return Err(Error::VariableMismatch {
                    left: nvars,
                    right: k.nvars(),
                });
            }
            if k.degree() <= maxdeg {
                *s.coeffs.entry(k).or_insert(C64::new(0.0, 0.0)) += c;
            }
        }
        s.prune();
        Ok(s)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn maxdeg(&self) -> u32 {
        self.maxdeg
    }

    pub fn nnz(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &C64)> {
        self.coeffs.iter()
    }

    pub fn coeff(&self, idx: &MultiIndex) -> C64 {
        self.coeffs.get(idx).copied().unwrap_or_default()
    }

    pub fn coeff_of(&self, exps: &[u16]) -> C64 {
        self.coeff(&MultiIndex::from_slice(exps))
    }

    pub fn constant_term(&self) -> C64 {
        self.coeff(&MultiIndex::zero(self.nvars))
    }

    /// Largest coefficient modulus.
    pub fn sup_norm(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Highest degree actually present (0 for the zero series).
    pub fn actual_degree(&self) -> u32 {
        self.coeffs.keys().map(|k| k.degree()).max().unwrap_or(0)
    }

    fn prune(&mut self) {
        self.coeffs.retain(|_, c| c.re != 0.0 || c.im != 0.0);
    }

    /// Lowers the truncation order, dropping terms above `maxdeg`.
    pub fn truncate(&self, maxdeg: u32) -> Self {
        let maxdeg = maxdeg.min(self.maxdeg);
        TruncatedSeries {
            nvars: self.nvars,
            maxdeg,
            coeffs: self
                .coeffs
                .iter()
                .filter(|(k, _)| k.degree() <= maxdeg)
                .map(|(k, c)| (k.clone(), *c))
                .collect(),
        }
    }

    /// Declares the stored polynomial exact up to `maxdeg` (zero padding).
    /// Only meaningful when the missing coefficients really vanish or are
    /// immaterial to the caller.
    pub fn pad_to(&self, maxdeg: u32) -> Self {
        let mut s = self.clone();
        s.maxdeg = s.maxdeg.max(maxdeg);
        s
    }

    pub fn map_coeffs(&self, f: impl Fn(C64) -> C64) -> Self {
        let mut s = TruncatedSeries {
            nvars: self.nvars,
            maxdeg: self.maxdeg,
            coeffs: self.coeffs.iter().map(|(k, c)| (k.clone(), f(*c))).collect(),
        };
        s.prune();
        s
    }

    pub fn scale(&self, c: C64) -> Self {
        self.map_coeffs(|x| x * c)
    }

    pub fn scale_re(&self, c: f64) -> Self {
        self.map_coeffs(|x| x * c)
    }

    /// Coefficientwise complex conjugate.
    pub fn conj(&self) -> Self {
        self.map_coeffs(|x| x.conj())
    }

    fn check_vars(&self, other: &Self) -> Result<()> {
        if self.nvars != other.nvars {
            return Err(Error::VariableMismatch {
                left: self.nvars,
                right: other.nvars,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_vars(other)?;
        let maxdeg = self.maxdeg.min(other.maxdeg);
        let mut out = self.truncate(maxdeg);
        for (k, c) in &other.coeffs {
            if k.degree() <= maxdeg {
                *out.coeffs.entry(k.clone()).or_default() += *c;
            }
        }
        out.prune();
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale_re(-1.0))
    }

    /// Truncated Cauchy product at the smaller of the two orders.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_vars(other)?;
        let maxdeg = self.maxdeg.min(other.maxdeg);
        Ok(self.mul_trunc(other, maxdeg))
    }

    /// Cauchy product truncated at an explicit `maxdeg` (capped by both inputs).
    pub(crate) fn mul_trunc(&self, other: &Self, maxdeg: u32) -> Self {
        debug_assert_eq!(self.nvars, other.nvars);
        let maxdeg = maxdeg.min(self.maxdeg).min(other.maxdeg);
        let mut rhs: Vec<(&MultiIndex, C64, u32)> = other
            .coeffs
            .iter()
            .map(|(k, c)| (k, *c, k.degree()))
            .filter(|t| t.2 <= maxdeg)
            .collect();
        rhs.sort_by_key(|t| t.2);
        let mut acc: HashMap<MultiIndex, C64> = HashMap::new();
        for (ka, ca) in &self.coeffs {
            let da = ka.degree();
            if da > maxdeg {
                continue;
            }
            for (kb, cb, db) in &rhs {
                if da + db > maxdeg {
                    break;
                }
                *acc.entry(ka.plus(kb)).or_default() += ca * cb;
            }
        }
        let mut out = TruncatedSeries {
            nvars: self.nvars,
            maxdeg,
            coeffs: acc.into_iter().collect(),
        };
        out.prune();
        out
    }

    /// Formal partial derivative in `var`; the truncation order drops by one.
    pub fn diff(&self, var: usize) -> Result<Self> {
        if var >= self.nvars {
            return Err(Error::BadVariable { var, nvars: self.nvars });
        }
        let mut out = Self::zero(self.nvars, self.maxdeg.saturating_sub(1));
        for (k, c) in &self.coeffs {
            let e = k.0[var];
            if e == 0 {
                continue;
            }
            let mut kk = k.clone();
            kk.0[var] -= 1;
            out.coeffs.insert(kk, c * e as f64);
        }
        Ok(out)
    }

    /// Higher derivative `∂^α` of the series.
    pub fn diff_multi(&self, alpha: &MultiIndex) -> Result<Self> {
        if alpha.nvars() != self.nvars {
            return Err(Error::VariableMismatch {
                left: self.nvars,
                right: alpha.nvars(),
            });
        }
        let mut out = Self::zero(self.nvars, self.maxdeg.saturating_sub(alpha.degree()));
        for (k, c) in &self.coeffs {
            if k.0.iter().zip(&alpha.0).any(|(e, a)| e < a) {
                continue;
            }
            let mut factor = 1.0;
            let mut kk = k.clone();
            for (e, a) in kk.0.iter_mut().zip(&alpha.0) {
                for t in 0..*a {
                    factor *= (*e - t) as f64;
                }
                *e -= a;
            }
            if kk.degree() <= out.maxdeg {
                out.coeffs.insert(kk, c * factor);
            }
        }
        Ok(out)
    }

    /// Composition `self(subs[0], ..., subs[m-1])`.
    ///
    /// Each substituted series must vanish at the origin so that the result is
    /// again centered; the result is truncated at the smallest order involved.
    pub fn substitute(&self, subs: &[TruncatedSeries]) -> Result<Self> {
        if subs.len() != self.nvars {
            return Err(Error::VariableMismatch {
                left: self.nvars,
                right: subs.len(),
            });
        }
        let target_vars = match subs.first() {
            Some(s) => s.nvars,
            None => {
                return Ok(TruncatedSeries {
                    nvars: 0,
                    maxdeg: self.maxdeg,
                    coeffs: self.coeffs.clone(),
                })
            }
        };
        for (i, s) in subs.iter().enumerate() {
            if s.nvars != target_vars {
                return Err(Error::VariableMismatch {
                    left: target_vars,
                    right: s.nvars,
                });
            }
            if s.constant_term() != C64::new(0.0, 0.0) {
                return Err(Error::NonzeroConstantTerm { index: i });
            }
        }
        let maxdeg = subs.iter().map(|s| s.maxdeg).fold(self.maxdeg, u32::min);
        // powers[i][e] = subs[i]^e
        let mut powers: Vec<Vec<TruncatedSeries>> = Vec::with_capacity(self.nvars);
        for (i, s) in subs.iter().enumerate() {
            let top = self.coeffs.keys().map(|k| k.0[i]).max().unwrap_or(0);
            let mut p = vec![Self::constant(target_vars, maxdeg, C64::new(1.0, 0.0))];
            for e in 1..=top {
                let next = p[e as usize - 1].mul_trunc(s, maxdeg);
                p.push(next);
            }
            powers.push(p);
        }
        let mut out = Self::zero(target_vars, maxdeg);
        for (k, c) in &self.coeffs {
            if k.degree() > maxdeg {
                continue;
            }
            let mut term = Self::constant(target_vars, maxdeg, *c);
            for (i, &e) in k.0.iter().enumerate() {
                if e > 0 {
                    term = term.mul_trunc(&powers[i][e as usize], maxdeg);
                }
            }
            for (kk, v) in term.coeffs {
                *out.coeffs.entry(kk).or_default() += v;
            }
        }
        out.prune();
        Ok(out)
    }

    /// Relabels variables: variable `i` of `self` becomes variable `map[i]`
    /// of a series in `nvars` variables.
    pub fn embed(&self, nvars: usize, map: &[usize]) -> Result<Self> {
        if map.len() != self.nvars {
            return Err(Error::VariableMismatch {
                left: self.nvars,
                right: map.len(),
            });
        }
        if let Some(&bad) = map.iter().find(|&&m| m >= nvars) {
            return Err(Error::BadVariable { var: bad, nvars });
        }
        let mut out = Self::zero(nvars, self.maxdeg);
        for (k, c) in &self.coeffs {
            let mut kk = MultiIndex::zero(nvars);
            for (i, &e) in k.0.iter().enumerate() {
                kk.0[map[i]] += e;
            }
            *out.coeffs.entry(kk).or_default() += *c;
        }
        out.prune();
        Ok(out)
    }

    /// Multiplicative inverse; requires a nonzero constant term.
    pub fn invert(&self) -> Result<Self> {
        let a0 = self.constant_term();
        if a0.norm() == 0.0 {
            return Err(Error::ZeroConstantTerm);
        }
        let inv0 = a0.inv();
        // self = a0 (1 + r), 1/self = inv0 * (1 - r + r^2 - ...), by Horner.
        let mut r = self.scale(inv0);
        r.coeffs.remove(&MultiIndex::zero(self.nvars));
        let one = Self::constant(self.nvars, self.maxdeg, C64::new(1.0, 0.0));
        let mut acc = one.clone();
        for _ in 0..self.maxdeg {
            let t = r.mul_trunc(&acc, self.maxdeg);
            acc = one.sub(&t)?;
        }
        Ok(acc.scale(inv0))
    }

    /// Numeric value of the stored polynomial.
    pub fn eval(&self, point: &[C64]) -> Result<C64> {
        if point.len() != self.nvars {
            return Err(Error::VariableMismatch {
                left: self.nvars,
                right: point.len(),
            });
        }
        Ok(self.eval_unchecked(point))
    }

    pub(crate) fn eval_unchecked(&self, point: &[C64]) -> C64 {
        let top = self.actual_degree() as usize;
        let pows: Vec<Vec<C64>> = point
            .iter()
            .map(|&z| {
                let mut v = Vec::with_capacity(top + 1);
                let mut acc = C64::new(1.0, 0.0);
                for _ in 0..=top {
                    v.push(acc);
                    acc *= z;
                }
                v
            })
            .collect();
        let mut sum = C64::new(0.0, 0.0);
        for (k, c) in &self.coeffs {
            let mut t = *c;
            for (i, &e) in k.0.iter().enumerate() {
                if e > 0 {
                    t *= pows[i][e as usize];
                }
            }
            sum += t;
        }
        sum
    }

    /// Flattened form used by hot evaluation loops.
    pub fn compile(&self) -> CompiledSeries {
        CompiledSeries {
            nvars: self.nvars,
            top: self.actual_degree() as usize,
            terms: self
                .coeffs
                .iter()
                .map(|(k, c)| (k.0.iter().map(|&e| e as u8).collect(), *c))
                .collect(),
        }
    }

    /// Coefficientwise distance `max |a_k - b_k|` over the common truncation.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.sup_norm())
    }

    pub fn to_text(&self) -> SeriesText {
        SeriesText {
            nvars: self.nvars,
            maxdeg: self.maxdeg,
            terms: self.coeffs.iter().map(|(k, c)| (k.0.to_vec(), c.re, c.im)).collect(),
        }
    }
}

/// Evaluation-only snapshot of a series.
#[derive(Clone, Debug)]
pub struct CompiledSeries {
    nvars: usize,
    top: usize,
    terms: Vec<(SmallVec<[u8; 8]>, C64)>,
}

impl CompiledSeries {
    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn eval(&self, point: &[C64]) -> C64 {
        debug_assert_eq!(point.len(), self.nvars);
        let mut pows: SmallVec<[C64; 64]> = SmallVec::new();
        let stride = self.top + 1;
        for &z in point {
            let mut acc = C64::new(1.0, 0.0);
            for _ in 0..stride {
                pows.push(acc);
                acc *= z;
            }
        }
        let mut sum = C64::new(0.0, 0.0);
        for (k, c) in &self.terms {
            let mut t = *c;
            for (i, &e) in k.iter().enumerate() {
                if e > 0 {
                    t *= pows[i * stride + e as usize];
                }
            }
            sum += t;
        }
        sum
    }

    /// Fixes the leading `head.len()` variables at the given values.
    pub fn partial(&self, head: &[C64]) -> CompiledSeries {
        let m = head.len();
        debug_assert!(m <= self.nvars);
        let mut acc: BTreeMap<SmallVec<[u8; 8]>, C64> = BTreeMap::new();
        for (k, c) in &self.terms {
            let t = k[..m]
                .iter()
                .zip(head)
                .fold(*c, |t, (&e, z)| if e > 0 { t * z.powu(e as u32) } else { t });
            *acc.entry(k[m..].iter().copied().collect())
                .or_insert(C64::new(0.0, 0.0)) += t;
        }
        CompiledSeries {
            nvars: self.nvars - m,
            top: self.top,
            terms: acc.into_iter().collect(),
        }
    }
}

/// Portable text form: `(exponents, re, im)` triples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesText {
    pub nvars: usize,
    pub maxdeg: u32,
    pub terms: Vec<(Vec<u16>, f64, f64)>,
}

impl TryFrom<SeriesText> for TruncatedSeries {
    type Error = Error;

    fn try_from(t: SeriesText) -> Result<Self> {
        let nvars = t.nvars;
        TruncatedSeries::from_terms(
            nvars,
            t.maxdeg,
            t.terms
                .into_iter()
                .map(|(e, re, im)| (MultiIndex::from_slice(&e), C64::new(re, im))),
        )
    }
}

impl Serialize for TruncatedSeries {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_text().serialize(s)
    }
}

impl<'de> Deserialize<'de> for TruncatedSeries {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let t = SeriesText::deserialize(d)?;
        TruncatedSeries::try_from(t).map_err(serde::de::Error::custom)
    }
}

/// Formal sum `Σ_k h^k terms[k]`.
///
/// All members share `nvars`. Truncation orders may decrease with `k`: a
/// coefficient of `h^k` obtained through `k` stationary-phase steps is
/// resolved to fewer degrees than the leading one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HGradedSeries {
    terms: Vec<TruncatedSeries>,
}

impl HGradedSeries {
    pub fn new(terms: Vec<TruncatedSeries>) -> Result<Self> {
        if let Some(first) = terms.first() {
            for t in &terms {
                if t.nvars() != first.nvars() {
                    return Err(Error::VariableMismatch {
                        left: first.nvars(),
                        right: t.nvars(),
                    });
                }
            }
        }
        Ok(HGradedSeries { terms })
    }

    /// `a` placed at order zero.
    pub fn leading(a: TruncatedSeries) -> Self {
        HGradedSeries { terms: vec![a] }
    }

    pub fn hmax(&self) -> usize {
        self.terms.len().saturating_sub(1)
    }

    pub fn terms(&self) -> &[TruncatedSeries] {
        &self.terms
    }

    pub fn term(&self, k: usize) -> Option<&TruncatedSeries> {
        self.terms.get(k)
    }

    pub fn nvars(&self) -> Option<usize> {
        self.terms.first().map(|t| t.nvars())
    }

    /// Value of `Σ h^k a_k(point)`.
    pub fn eval(&self, point: &[C64], h: f64) -> Result<C64> {
        let mut sum = C64::new(0.0, 0.0);
        let mut hk = 1.0;
        for t in &self.terms {
            sum += t.eval(point)? * hk;
            hk *= h;
        }
        Ok(sum)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn poly1(maxdeg: u32, cs: &[(u16, C64)]) -> TruncatedSeries {
        TruncatedSeries::from_terms(1, maxdeg, cs.iter().map(|(e, v)| (MultiIndex::from_slice(&[*e]), *v))).unwrap()
    }

    #[test]
    fn add_cancels() {
        let a = poly1(3, &[(0, c(1., 0.)), (1, c(1., 0.))]);
        let b = poly1(3, &[(0, c(1., 0.)), (1, c(-1., 0.))]);
        let s = a.add(&b).unwrap();
        assert_eq!(s.nnz(), 1);
        assert_eq!(s.constant_term(), c(2., 0.));

        let iu = poly1(3, &[(1, c(0., 1.))]);
        assert!(iu.add(&iu.scale_re(-1.0)).unwrap().is_zero());
    }

    #[test]
    fn add_rejects_mismatched_vars() {
        let a = TruncatedSeries::zero(1, 2);
        let b = TruncatedSeries::zero(2, 2);
        assert!(matches!(a.add(&b), Err(Error::VariableMismatch { .. })));
        assert!(matches!(a.mul(&b), Err(Error::VariableMismatch { .. })));
    }

    #[test]
    fn mul_examples() {
        let p = poly1(2, &[(0, c(1., 0.)), (1, c(1., 0.))]);
        let m = poly1(2, &[(0, c(1., 0.)), (1, c(-1., 0.))]);
        let prod = p.mul(&m).unwrap();
        assert_eq!(prod, poly1(2, &[(0, c(1., 0.)), (2, c(-1., 0.))]));

        let p1 = p.truncate(1);
        assert_eq!(p1.mul(&p1).unwrap(), poly1(1, &[(0, c(1., 0.)), (1, c(2., 0.))]));

        let iu = poly1(2, &[(1, c(0., 1.))]);
        assert_eq!(iu.mul(&iu).unwrap(), poly1(2, &[(2, c(-1., 0.))]));
    }

    #[test]
    fn diff_examples() {
        let u3 = TruncatedSeries::monomial(2, 4, &MultiIndex::from_slice(&[3, 0]), c(1., 0.));
        assert_eq!(u3.diff(0).unwrap().coeff_of(&[2, 0]), c(3., 0.));
        assert_eq!(u3.diff(0).unwrap().maxdeg(), 3);
        let u2 = TruncatedSeries::monomial(2, 4, &MultiIndex::from_slice(&[2, 0]), c(1., 0.));
        assert!(u2.diff(1).unwrap().is_zero());
        let uv = TruncatedSeries::monomial(2, 4, &MultiIndex::from_slice(&[1, 1]), c(1., 0.));
        let d = uv.diff(0).unwrap();
        assert_eq!(d.nnz(), 1);
        assert_eq!(d.coeff_of(&[0, 1]), c(1., 0.));
        assert!(matches!(uv.diff(2), Err(Error::BadVariable { .. })));
    }

    #[test]
    fn substitute_examples() {
        let u2 = TruncatedSeries::monomial(2, 2, &MultiIndex::from_slice(&[2, 0]), c(1., 0.));
        let upv = TruncatedSeries::variable(2, 2, 0)
            .unwrap()
            .add(&TruncatedSeries::variable(2, 2, 1).unwrap())
            .unwrap();
        let zero = TruncatedSeries::zero(2, 2);
        let s = u2.substitute(&[upv.clone(), zero.clone()]).unwrap();
        assert_eq!(s.coeff_of(&[2, 0]), c(1., 0.));
        assert_eq!(s.coeff_of(&[1, 1]), c(2., 0.));
        assert_eq!(s.coeff_of(&[0, 2]), c(1., 0.));
        assert_eq!(s.nnz(), 3);

        let u = poly1(3, &[(1, c(1., 0.))]);
        assert!(u.substitute(&[TruncatedSeries::zero(1, 3)]).unwrap().is_zero());

        let shifted = poly1(3, &[(0, c(1., 0.)), (1, c(1., 0.))]);
        assert!(matches!(
            u.substitute(&[shifted]),
            Err(Error::NonzeroConstantTerm { index: 0 })
        ));
    }

    #[test]
    fn invert_examples() {
        let two = TruncatedSeries::constant(1, 3, c(2., 0.));
        assert_eq!(two.invert().unwrap().constant_term(), c(0.5, 0.));

        let one_minus_u = poly1(3, &[(0, c(1., 0.)), (1, c(-1., 0.))]);
        let geo = one_minus_u.invert().unwrap();
        for k in 0..=3 {
            assert!((geo.coeff_of(&[k]) - c(1., 0.)).norm() < 1e-14);
        }
        assert_eq!(geo.nnz(), 4);

        let u = poly1(3, &[(1, c(1., 0.))]);
        assert!(matches!(u.invert(), Err(Error::ZeroConstantTerm)));
    }

    #[test]
    fn eval_examples() {
        let p = poly1(2, &[(0, c(1., 0.)), (1, c(1., 0.))]);
        assert_eq!(p.eval(&[c(0.5, 0.)]).unwrap(), c(1.5, 0.));
        let uv = TruncatedSeries::monomial(2, 2, &MultiIndex::from_slice(&[1, 1]), c(1., 0.));
        let v = uv.eval(&[c(2., 0.), c(0., 3.)]).unwrap();
        assert!((v - c(0., 6.)).norm() < 1e-15);
        assert_eq!(
            TruncatedSeries::zero(2, 3).eval(&[c(1., 1.), c(2., 0.)]).unwrap(),
            c(0., 0.)
        );
        assert!(matches!(p.eval(&[]), Err(Error::VariableMismatch { .. })));
        let compiled = uv.compile();
        assert!((compiled.eval(&[c(2., 0.), c(0., 3.)]) - c(0., 6.)).norm() < 1e-15);
    }

    #[test]
    fn text_form_round_trip() {
        let s = TruncatedSeries::from_terms(
            2,
            3,
            vec![
                (MultiIndex::from_slice(&[1, 1]), c(0.5, 0.)),
                (MultiIndex::from_slice(&[2, 1]), c(0.1, -0.2)),
            ],
        )
        .unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: TruncatedSeries = serde_json::from_str(&json).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn embed_relabels() {
        let uv = TruncatedSeries::monomial(2, 3, &MultiIndex::from_slice(&[1, 2]), c(1., 0.));
        let e = uv.embed(4, &[3, 1]).unwrap();
        assert_eq!(e.coeff_of(&[0, 2, 0, 1]), c(1., 0.));
    }

    #[test]
    fn diff_multi_matches_repeated_diff() {
        let s = TruncatedSeries::from_terms(
            2,
            6,
            vec![
                (MultiIndex::from_slice(&[3, 2]), c(1., 2.)),
                (MultiIndex::from_slice(&[1, 4]), c(-0.5, 0.)),
                (MultiIndex::from_slice(&[2, 2]), c(0.25, 0.)),
            ],
        )
        .unwrap();
        let a = s.diff_multi(&MultiIndex::from_slice(&[2, 1])).unwrap();
        let b = s.diff(0).unwrap().diff(0).unwrap().diff(1).unwrap();
        assert_eq!(a, b);
    }
}
