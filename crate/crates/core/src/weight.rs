//! Real-analytic strictly plurisubharmonic weights and their polarization.
//!
//! A weight `Φ` on a neighborhood of `x₀ ∈ C^n` is given as a truncated
//! series in the `2n` variables `(ξ, ξ̄)` where `ξ = x - x₀`. The coefficient
//! of `ξ^α ξ̄^β` is stored under the exponent vector `(α, β)`. Real-valuedness
//! is the Hermitian symmetry `c_{βα} = conj(c_{αβ})`.
//!
//! The polarization `Ψ(x, ỹ)` is the holomorphic series obtained by reading
//! `ξ̄` as an independent variable `η = ỹ - x̄₀`; it satisfies
//! `Ψ(x, x̄) = Φ(x)` by construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::sampling;
use crate::tseries::{CompiledSeries, MultiIndex, TruncatedSeries, C64};

/// Absolute tolerance for the Hermitian symmetry of weight coefficients.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Levi eigenvalues (and singular values of `Ψ''_{xỹ}`) at or below this are
/// treated as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct Weight {
    n: usize,
    base: Vec<C64>,
    phi: TruncatedSeries,
    levi_min: f64,
    trust_radius: f64,
    derivs: WeightDerivatives,
}

/// Compiled derivative series used by contour and inversion-formula code.
#[derive(Clone, Debug)]
struct WeightDerivatives {
    phi: CompiledSeries,
    /// `∂Φ/∂x_j`
    d1: Vec<CompiledSeries>,
    /// `∂²Φ/∂x_j∂x_k`
    d2: Vec<Vec<CompiledSeries>>,
    /// `∂²Φ/∂x_j∂x̄_l`
    dmix: Vec<Vec<CompiledSeries>>,
    /// `∂³Φ/∂x_j∂x_k∂x̄_l`, indexed `[j][k][l]`
    d3: Vec<Vec<Vec<CompiledSeries>>>,
}

impl WeightDerivatives {
    fn new(phi: &TruncatedSeries, n: usize) -> Result<Self> {
        let mut d1 = Vec::with_capacity(n);
        let mut d2 = Vec::with_capacity(n);
        let mut dmix = Vec::with_capacity(n);
        let mut d3 = Vec::with_capacity(n);
        for j in 0..n {
            let dj = phi.diff(j)?;
            d1.push(dj.compile());
            let mut row2 = Vec::with_capacity(n);
            let mut rowm = Vec::with_capacity(n);
            let mut row3 = Vec::with_capacity(n);
            for k in 0..n {
                let djk = dj.diff(k)?;
                row2.push(djk.compile());
                rowm.push(dj.diff(n + k)?.compile());
                let mut l3 = Vec::with_capacity(n);
                for l in 0..n {
                    l3.push(djk.diff(n + l)?.compile());
                }
                row3.push(l3);
            }
            d2.push(row2);
            dmix.push(rowm);
            d3.push(row3);
        }
        Ok(WeightDerivatives {
            phi: phi.compile(),
            d1,
            d2,
            dmix,
            d3,
        })
    }
}

impl Weight {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn base(&self) -> &[C64] {
        &self.base
    }

    /// `Φ` as a series in `(ξ, ξ̄)`.
    pub fn phi(&self) -> &TruncatedSeries {
        &self.phi
    }

    pub fn levi_min(&self) -> f64 {
        self.levi_min
    }

    pub fn trust_radius(&self) -> f64 {
        self.trust_radius
    }

    /// Truncation order of the input series.
    pub fn degree(&self) -> u32 {
        self.phi.maxdeg()
    }

    /// Series coordinates `(x - x₀, conj(x - x₀))` of an absolute point.
    pub(crate) fn real_coords(&self, x: &[C64]) -> Vec<C64> {
        let mut p: Vec<C64> = x.iter().zip(&self.base).map(|(a, b)| a - b).collect();
        let conj: Vec<C64> = p.iter().map(|z| z.conj()).collect();
        p.extend(conj);
        p
    }

    /// `Φ(x)` at an absolute point.
    pub fn value(&self, x: &[C64]) -> f64 {
        self.derivs.phi.eval(&self.real_coords(x)).re
    }

    /// Matrix `∂²Φ/∂x_j∂x̄_k` at an absolute point.
    pub fn levi_form(&self, x: &[C64]) -> CMatrix {
        let p = self.real_coords(x);
        CMatrix::from_fn(self.n, self.n, |j, k| self.derivs.dmix[j][k].eval(&p))
    }

    /// `θ(x, y) = (2/i)(∂_yΦ(y) + ½ Φ''_yy(y)(x - y))`, the fiber coordinate
    /// of the inversion contour `Λ(x)`.
    pub fn theta(&self, x: &[C64], y: &[C64]) -> Vec<C64> {
        let p = self.real_coords(y);
        let two_over_i = C64::new(0.0, -2.0);
        (0..self.n)
            .map(|j| {
                let mut t = self.derivs.d1[j].eval(&p);
                for k in 0..self.n {
                    t += 0.5 * self.derivs.d2[j][k].eval(&p) * (x[k] - y[k]);
                }
                two_over_i * t
            })
            .collect()
    }

    /// `det ∂_ȳ θ(x, y)`, the Jacobian of `y ↦ θ(x, y)` along `ȳ`.
    pub fn theta_jacobian(&self, x: &[C64], y: &[C64]) -> C64 {
        let p = self.real_coords(y);
        let two_over_i = C64::new(0.0, -2.0);
        let m = CMatrix::from_fn(self.n, self.n, |j, l| {
            let mut t = self.derivs.dmix[j][l].eval(&p);
            for k in 0..self.n {
                t += 0.5 * self.derivs.d3[j][k][l].eval(&p) * (x[k] - y[k]);
            }
            two_over_i * t
        });
        linalg::determinant(&m)
    }
}

/// Checks Hermitian symmetry and strict plurisubharmonicity at the base.
///
/// Coefficients within [`HERMITIAN_TOL`] of symmetric are averaged with their
/// partner so that the stored weight is exactly real valued.
pub fn validate_weight(raw: &TruncatedSeries, base: &[C64], trust_radius: f64) -> Result<Weight> {
    let n = base.len();
    if n == 0 || raw.nvars() != 2 * n {
        return Err(Error::VariableMismatch {
            left: 2 * n,
            right: raw.nvars(),
        });
    }
    if !(trust_radius > 0.0) {
        return Err(Error::ConfigInvalid(format!(
            "trust radius must be positive, got {trust_radius}"
        )));
    }
    let swap = |k: &MultiIndex| k.slice(n..2 * n).concat(&k.slice(0..n));
    let mut worst = (0.0f64, None);
    for (k, c) in raw.terms() {
        let partner = raw.coeff(&swap(k)).conj();
        let asym = (c - partner).norm();
        if asym > worst.0 {
            worst = (asym, Some(k.clone()));
        }
    }
    if worst.0 > HERMITIAN_TOL {
        return Err(Error::NotRealValued {
            asymmetry: worst.0,
            index: format!("{:?}", worst.1.unwrap()),
        });
    }
    let phi = TruncatedSeries::from_terms(
        2 * n,
        raw.maxdeg(),
        raw.terms()
            .map(|(k, c)| (k.clone(), 0.5 * (c + raw.coeff(&swap(k)).conj()))),
    )?;

    let derivs = WeightDerivatives::new(&phi, n)?;
    let mut w = Weight {
        n,
        base: base.to_vec(),
        phi,
        levi_min: 0.0,
        trust_radius,
        derivs,
    };
    let levi = w.levi_form(base);
    let ev = linalg::hermitian_eigenvalues(&levi);
    w.levi_min = ev[0];
    if w.levi_min <= DEGENERACY_TOL {
        return Err(Error::Degenerate(format!(
            "smallest Levi eigenvalue {:.3e} at the base point",
            w.levi_min
        )));
    }
    Ok(w)
}

/// `Re g(x)` as a weight series in `(ξ, ξ̄)`, for `g` holomorphic in `n`
/// variables. Adding it to a weight leaves the Bergman amplitude unchanged.
pub fn pluriharmonic_part(g: &TruncatedSeries, maxdeg: u32) -> Result<TruncatedSeries> {
    let n = g.nvars();
    let left: Vec<usize> = (0..n).collect();
    let right: Vec<usize> = (n..2 * n).collect();
    let hol = g.embed(2 * n, &left)?.truncate(maxdeg).pad_to(maxdeg);
    let anti = g.conj().embed(2 * n, &right)?.truncate(maxdeg).pad_to(maxdeg);
    Ok(hol.add(&anti)?.scale_re(0.5))
}

/// Holomorphic extension `Ψ(x, ỹ)` of a weight, with `Ψ''_{xỹ}` at the base.
#[derive(Clone, Debug)]
pub struct Polarization {
    n: usize,
    base: Vec<C64>,
    psi: TruncatedSeries,
    psi_compiled: CompiledSeries,
    b_matrix: CMatrix,
}

impl Polarization {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn base(&self) -> &[C64] {
        &self.base
    }

    /// `Ψ` as a series in `(ξ, η) = (x - x₀, ỹ - x̄₀)`.
    pub fn psi(&self) -> &TruncatedSeries {
        &self.psi
    }

    pub fn b_matrix(&self) -> &CMatrix {
        &self.b_matrix
    }

    /// Series coordinates of the pair `(x, ỹ)`.
    pub(crate) fn pair_coords(&self, x: &[C64], ytilde: &[C64]) -> Vec<C64> {
        let mut p: Vec<C64> = x.iter().zip(&self.base).map(|(a, b)| a - b).collect();
        p.extend(ytilde.iter().zip(&self.base).map(|(a, b)| a - b.conj()));
        p
    }

    /// `Ψ(x, ỹ)` at absolute coordinates.
    pub fn value(&self, x: &[C64], ytilde: &[C64]) -> C64 {
        self.psi_compiled.eval(&self.pair_coords(x, ytilde))
    }

    /// `Ψ(x, ȳ)`.
    pub fn value_at_conj(&self, x: &[C64], y: &[C64]) -> C64 {
        let yb: Vec<C64> = y.iter().map(|z| z.conj()).collect();
        self.value(x, &yb)
    }

    /// `Ψ(x, x̄)` as a series in `(ξ, ξ̄)`; equals `Φ` at truncation.
    pub fn restrict_to_diagonal(&self) -> TruncatedSeries {
        self.psi.clone()
    }
}

/// Relabels `ξ̄ → η` and records `Ψ''_{xỹ}` at the base, which coincides with
/// the Levi matrix of `Φ` there.
pub fn polarize(w: &Weight) -> Result<Polarization> {
    let n = w.n;
    let psi = w.phi.clone();
    let b_matrix = CMatrix::from_fn(n, n, |j, k| {
        let mut idx = vec![0u16; 2 * n];
        idx[j] += 1;
        idx[n + k] += 1;
        psi.coeff_of(&idx)
    });
    let smin = linalg::min_singular_value(&b_matrix);
    if smin <= DEGENERACY_TOL {
        return Err(Error::Degenerate(format!(
            "Psi''_xy at the base has smallest singular value {smin:.3e}"
        )));
    }
    Ok(Polarization {
        n,
        base: w.base.clone(),
        psi_compiled: psi.compile(),
        psi,
        b_matrix,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    pub radius: f64,
    pub nsamples: usize,
    pub cmin: f64,
    pub cmax: f64,
}

/// Samples `(Φ(x) + Φ(y) - 2 Re Ψ(x, ȳ)) / |x - y|²` over pairs in the ball
/// of the given radius around the base.
pub fn quadratic_gap_estimate(
    w: &Weight,
    p: &Polarization,
    radius: f64,
    nsamples: usize,
    seed: u64,
) -> Result<GapEstimate> {
    if radius > w.trust_radius {
        return Err(Error::ConfigInvalid(format!(
            "gap radius {radius} exceeds trust radius {}",
            w.trust_radius
        )));
    }
    let pairs = sampling::ball_pairs(&w.base, radius, nsamples, seed);
    let mut cmin = f64::INFINITY;
    let mut cmax = f64::NEG_INFINITY;
    for (x, y) in &pairs {
        let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b).norm_sqr()).sum();
        if d2 < 1e-16 {
            continue;
        }
        let num = w.value(x) + w.value(y) - 2.0 * p.value_at_conj(x, y).re;
        let r = num / d2;
        cmin = cmin.min(r);
        cmax = cmax.max(r);
    }
    if cmin <= 0.0 {
        return Err(Error::GapViolation { cmin, radius });
    }
    Ok(GapEstimate {
        radius,
        nsamples,
        cmin,
        cmax,
    })
}

/// Builders for the weights used throughout tests and configs.
pub mod examples {
    use super::*;

    fn term(exps: &[u16], re: f64, im: f64) -> (MultiIndex, C64) {
        (MultiIndex::from_slice(exps), C64::new(re, im))
    }

    /// `λ |x|²` in one variable.
    pub fn quadratic(lambda: f64, maxdeg: u32) -> TruncatedSeries {
        TruncatedSeries::from_terms(2, maxdeg, [term(&[1, 1], lambda, 0.0)]).unwrap()
    }

    /// `|x|²/2 + ε |x|⁴` in one variable.
    pub fn quartic(eps: f64, maxdeg: u32) -> TruncatedSeries {
        TruncatedSeries::from_terms(2, maxdeg, [term(&[1, 1], 0.5, 0.0), term(&[2, 2], eps, 0.0)]).unwrap()
    }

    /// `|x|²/2 + ε (x² x̄ + x x̄²)` in one variable.
    pub fn cubic(eps: f64, maxdeg: u32) -> TruncatedSeries {
        TruncatedSeries::from_terms(
            2,
            maxdeg,
            [
                term(&[1, 1], 0.5, 0.0),
                term(&[2, 1], eps, 0.0),
                term(&[1, 2], eps, 0.0),
            ],
        )
        .unwrap()
    }
}
