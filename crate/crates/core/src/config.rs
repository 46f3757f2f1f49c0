//! Run configuration: one JSON file, with command-line overrides for the
//! h-grid and the amplitude order only.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::Shape;
use crate::tseries::{MultiIndex, TruncatedSeries, C64};
use crate::weight::{validate_weight, Weight};

pub const DEFAULT_H_GRID: [f64; 5] = [0.2, 0.15, 0.1, 0.07, 0.05];

/// `c · x^α x̄^β`, in displacements from the base point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoeffTriple {
    pub x: Vec<u16>,
    pub xbar: Vec<u16>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    pub n: usize,
    /// Base point as `[re, im]` pairs; the origin when omitted.
    #[serde(default)]
    pub base: Vec<[f64; 2]>,
    pub terms: Vec<CoeffTriple>,
    pub trust_radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainsSpec {
    #[serde(default = "default_shape")]
    pub shape: Shape,
    pub u_radius: f64,
    pub v_radius: f64,
    #[serde(default = "default_v_nr")]
    pub v_nr: usize,
    #[serde(default = "default_v_nt")]
    pub v_nt: usize,
    #[serde(default = "default_u_nr")]
    pub u_nr: usize,
    #[serde(default = "default_u_nt")]
    pub u_nt: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    /// Starting basis degree of the adaptive Gram oracle.
    #[serde(default = "default_gram_degree")]
    pub gram_degree: usize,
    /// Contour inequality δ; half the measured gap constant when omitted.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_nsamples")]
    pub nsamples: usize,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default = "default_offset")]
    pub pair_offset: f64,
    /// Sampling radius of the margin checks as a fraction of the trust radius.
    #[serde(default = "default_margin_fraction")]
    pub margin_fraction: f64,
    /// Radius of the torus on which `sup |a_k|` is sampled.
    #[serde(default)]
    pub growth_radius: Option<f64>,
    /// Higher order of the `N` vs `N-1` ratio test.
    #[serde(default = "default_ratio_order")]
    pub ratio_order: usize,
    /// Holomorphic test monomials, as exponent vectors.
    #[serde(default = "default_test_functions")]
    pub test_functions: Vec<Vec<u16>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Validate,
    Amplitude,
    Kernel,
    Gram,
    Fourier,
    Pointwise,
    Inequalities,
    Quadrature,
    Localized,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::Validate,
        Suite::Amplitude,
        Suite::Kernel,
        Suite::Gram,
        Suite::Fourier,
        Suite::Pointwise,
        Suite::Inequalities,
        Suite::Quadrature,
        Suite::Localized,
    ];

    pub const ORACLES: [Suite; 6] = [
        Suite::Gram,
        Suite::Fourier,
        Suite::Pointwise,
        Suite::Inequalities,
        Suite::Quadrature,
        Suite::Localized,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub weight: WeightSpec,
    /// Truncation degree of the weight series.
    pub maxdeg: u32,
    /// Amplitude order `N`.
    pub order: usize,
    /// Order of the defining-equation check; `N` when omitted.
    #[serde(default)]
    pub hmax: Option<usize>,
    #[serde(default = "default_h_grid")]
    pub h_grid: Vec<f64>,
    pub domains: DomainsSpec,
    #[serde(default = "default_oracle")]
    pub oracle: OracleSpec,
    #[serde(default = "default_suites")]
    pub suites: Vec<Suite>,
}

fn default_shape() -> Shape {
    Shape::Disc
}
fn default_v_nr() -> usize {
    64
}
fn default_v_nt() -> usize {
    128
}
fn default_u_nr() -> usize {
    32
}
fn default_u_nt() -> usize {
    64
}
fn default_gram_degree() -> usize {
    10
}
fn default_seed() -> u64 {
    crate::sampling::DEFAULT_SEED
}
fn default_nsamples() -> usize {
    10_000
}
fn default_pairs() -> usize {
    20
}
fn default_offset() -> f64 {
    0.05
}
fn default_margin_fraction() -> f64 {
    0.3
}
fn default_ratio_order() -> usize {
    4
}
fn default_test_functions() -> Vec<Vec<u16>> {
    vec![vec![0], vec![1], vec![2], vec![3]]
}
fn default_h_grid() -> Vec<f64> {
    DEFAULT_H_GRID.to_vec()
}
fn default_suites() -> Vec<Suite> {
    Suite::ALL.to_vec()
}
fn default_oracle() -> OracleSpec {
    serde_json::from_str("{}").expect("all oracle fields have defaults")
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        c.check()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Applies `--h-grid` and `--order` and re-checks the result.
    pub fn with_overrides(mut self, h_grid: Option<Vec<f64>>, order: Option<usize>) -> Result<Self> {
        if let Some(g) = h_grid {
            self.h_grid = g;
        }
        if let Some(n) = order {
            self.order = n;
        }
        self.check()?;
        Ok(self)
    }

    pub fn hmax(&self) -> usize {
        self.hmax.unwrap_or(self.order)
    }

    pub fn base(&self) -> Vec<C64> {
        if self.weight.base.is_empty() {
            vec![C64::new(0.0, 0.0); self.weight.n]
        } else {
            self.weight.base.iter().map(|p| C64::new(p[0], p[1])).collect()
        }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        let w = &self.weight;
        if w.n == 0 {
            return bad("weight dimension must be at least 1".into());
        }
        if !w.base.is_empty() && w.base.len() != w.n {
            return bad(format!("base has {} entries for n = {}", w.base.len(), w.n));
        }
        if let Some(t) = w.terms.iter().find(|t| t.x.len() != w.n || t.xbar.len() != w.n) {
            return bad(format!("term {t:?} does not have {} exponents per side", w.n));
        }
        let need = 2 * self.order as u32 + 4;
        if self.maxdeg < need {
            return bad(format!(
                "degree budget violated: maxdeg {} < 2N+4 = {need} for amplitude order N = {}",
                self.maxdeg, self.order
            ));
        }
        if self.hmax() > self.order {
            return bad(format!(
                "hmax {} exceeds the amplitude order {}",
                self.hmax(),
                self.order
            ));
        }
        let d = &self.domains;
        if !(d.u_radius > 0.0 && d.u_radius < d.v_radius && d.v_radius < w.trust_radius) {
            return bad(format!(
                "radii must satisfy 0 < U ({}) < V ({}) < trust ({})",
                d.u_radius, d.v_radius, w.trust_radius
            ));
        }
        if self.h_grid.is_empty() || self.h_grid.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return bad(format!("h-grid must be non-empty and positive: {:?}", self.h_grid));
        }
        let o = &self.oracle;
        if let Some(delta) = o.delta {
            if !(delta > 0.0) {
                return bad(format!("delta must be positive, got {delta}"));
            }
        }
        if !(o.margin_fraction > 0.0 && o.margin_fraction < 1.0) {
            return bad(format!("margin_fraction must lie in (0, 1), got {}", o.margin_fraction));
        }
        if o.test_functions.iter().any(|e| e.len() != w.n) {
            return bad(format!("test function exponents must have {} entries", w.n));
        }
        if self.suites.contains(&Suite::Gram) && (o.ratio_order == 0 || o.ratio_order > self.order) {
            return bad(format!("ratio_order must lie in 1..={}", self.order));
        }
        if !(o.pair_offset > 0.0 && o.pair_offset < d.u_radius) {
            return bad(format!("pair_offset must lie in (0, U radius), got {}", o.pair_offset));
        }
        Ok(())
    }

    /// The weight series in `(ξ, ξ̄)`.
    pub fn weight_series(&self) -> Result<TruncatedSeries> {
        let n = self.weight.n;
        let terms = self.weight.terms.iter().map(|t| {
            let mut e = t.x.clone();
            e.extend_from_slice(&t.xbar);
            (MultiIndex::from_slice(&e), C64::new(t.re, t.im))
        });
        TruncatedSeries::from_terms(2 * n, self.maxdeg, terms)
    }

    pub fn build_weight(&self) -> Result<Weight> {
        validate_weight(&self.weight_series()?, &self.base(), self.weight.trust_radius)
    }

    pub fn test_functions(&self) -> Vec<(String, TruncatedSeries)> {
        let n = self.weight.n;
        self.oracle
            .test_functions
            .iter()
            .map(|e| {
                let deg: u32 = e.iter().map(|&k| k as u32).sum();
                // Test functions are monomials in the displacement from the base.
                let base = self.base();
                let mono = TruncatedSeries::monomial(n, deg, &MultiIndex::from_slice(e), C64::new(1.0, 0.0));
                let shift: Vec<TruncatedSeries> = (0..n)
                    .map(|j| {
                        TruncatedSeries::variable(n, deg, j)
                            .expect("variable in range")
                            .add(&TruncatedSeries::constant(n, deg, -base[j]))
                            .expect("same nvars")
                    })
                    .collect();
                (label(e), compose_polynomial(&mono, &shift))
            })
            .collect()
    }
}

fn label(e: &[u16]) -> String {
    let parts: Vec<String> = e
        .iter()
        .enumerate()
        .filter(|(_, &k)| k > 0)
        .map(|(j, &k)| {
            if k == 1 {
                format!("y{}", j + 1)
            } else {
                format!("y{}^{k}", j + 1)
            }
        })
        .collect();
    if parts.is_empty() {
        "1".into()
    } else {
        parts.join("*")
    }
}

/// `p(q_1, ..., q_n)` for polynomials `q_j` that may have constant terms.
fn compose_polynomial(p: &TruncatedSeries, q: &[TruncatedSeries]) -> TruncatedSeries {
    let n = p.nvars();
    let deg = p.maxdeg();
    let mut out = TruncatedSeries::zero(n, deg);
    for (k, c) in p.terms() {
        let mut t = TruncatedSeries::constant(n, deg, *c);
        for (j, &e) in k.exponents().iter().enumerate() {
            for _ in 0..e {
                t = t.mul(&q[j]).expect("same nvars");
            }
        }
        out = out.add(&t).expect("same nvars");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn gaussian_json() -> String {
        r#"{
            "name": "g",
            "weight": {"n": 1, "terms": [{"x": [1], "xbar": [1], "re": 0.5}], "trust_radius": 2.0},
            "maxdeg": 12, "order": 4,
            "domains": {"u_radius": 0.5, "v_radius": 1.0}
        }"#
        .into()
    }

    #[test]
    fn parses_with_defaults() {
        let c = RunConfig::from_json(&gaussian_json()).unwrap();
        assert_eq!(c.h_grid, DEFAULT_H_GRID.to_vec());
        assert_eq!(c.domains.v_nr, 64);
        assert_eq!(c.oracle.pairs, 20);
        assert_eq!(c.suites.len(), 9);
        let w = c.build_weight().unwrap();
        assert!((w.levi_min() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn degree_budget_is_enforced() {
        let text = gaussian_json().replace("\"maxdeg\": 12", "\"maxdeg\": 11");
        match RunConfig::from_json(&text) {
            Err(Error::ConfigInvalid(m)) => assert!(m.contains("2N+4"), "{m}"),
            other => panic!("{other:?}"),
        }
        let c = RunConfig::from_json(&gaussian_json()).unwrap();
        assert!(matches!(c.with_overrides(None, Some(5)), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn radii_must_nest() {
        let text = gaussian_json().replace("\"v_radius\": 1.0", "\"v_radius\": 2.5");
        assert!(matches!(RunConfig::from_json(&text), Err(Error::ConfigInvalid(_))));
        let text = gaussian_json().replace("\"u_radius\": 0.5", "\"u_radius\": 1.0");
        assert!(matches!(RunConfig::from_json(&text), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = gaussian_json().replace("\"order\": 4", "\"order\": 4, \"ordre\": 3");
        assert!(matches!(RunConfig::from_json(&text), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn json_round_trip() {
        let c = RunConfig::from_json(&gaussian_json()).unwrap();
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn test_functions_are_shifted_to_the_base() {
        let text = gaussian_json().replace("\"n\": 1,", "\"n\": 1, \"base\": [[0.5, 0.0]],");
        let c = RunConfig::from_json(&text).unwrap();
        let fs = c.test_functions();
        assert_eq!(fs[2].0, "y1^2");
        // (ξ - 0.5)² evaluated at ξ = 1.5 is 1
        let v = fs[2].1.eval(&[C64::new(1.5, 0.0)]).unwrap();
        assert!((v - C64::new(1.0, 0.0)).norm() < 1e-15);
    }
}
