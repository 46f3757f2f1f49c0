//! Pipeline orchestration and report emission.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::amplitude::{estimate_growth, formal_expansion, solve_amplitude, Amplitude, GrowthReport};
use crate::config::{Format, RunConfig, Suite};
use crate::error::{Error, Result};
use crate::oracle::{self, Cutoff, InequalityProbe, InequalityReport, PointwiseReport, SpTable};
use crate::phase::{self, build_phase, MarginReport, PhaseData};
use crate::projector::{self, DecayFit, DomainSpec, ErrorStats, Kernel, KernelMode};
use crate::sampling;
use crate::tseries::{MultiIndex, TruncatedSeries, C64};
use crate::weight::{polarize, quadratic_gap_estimate, GapEstimate, Polarization, Weight};

pub const SCHEMA: &str = "bergman-report/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Error,
}

/// A suite result, or the error that stopped it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome<T> {
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl<T> Outcome<T> {
    fn from_result(r: Result<T>) -> Self {
        match r {
            Ok(v) => Outcome {
                status: Status::Ok,
                result: Some(v),
                error: None,
            },
            Err(e) => Outcome {
                status: Status::Error,
                result: None,
                error: Some(e.to_string()),
            },
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<DecayFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl FitOutcome {
    pub fn of(points: &[(f64, f64)]) -> Self {
        match projector::decay_fit(points) {
            Ok(f) => FitOutcome {
                fit: Some(f),
                error: None,
            },
            Err(e) => FitOutcome {
                fit: None,
                error: Some(e.to_string()),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidateSection {
    pub n: usize,
    pub levi_min: f64,
    pub gap: GapEstimate,
    /// Sum of the moduli of the coefficients of `Ψ`.
    pub psi_l1: f64,
    /// `max |Ψ(x, x̄) - Φ(x)|` on samples in `V`.
    pub restriction_error: f64,
    /// `B` at the base, row-major.
    pub b_matrix: Vec<C64>,
    pub hess_det: C64,
    pub amplitude_contour: MarginReport,
    pub inversion_contour: MarginReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AmplitudeSection {
    pub order: usize,
    pub a0_at_base: C64,
    pub coeffs_at_base: Vec<C64>,
    pub growth: GrowthReport,
    /// Sup-norm of the `h^k` coefficient of `A a - 1`, `k = 0..=hmax`.
    pub defining_residual: Vec<f64>,
    pub amplitude: Amplitude,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedValue {
    pub u: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelRow {
    pub h: f64,
    /// Realization cutoff `K`.
    pub cutoff: usize,
    pub k_at_base: f64,
    pub errors: Vec<NamedValue>,
    /// Largest reproducing error over the test functions.
    pub err_u: f64,
    /// `β` of the fit over this and all coarser grid points, from four points on.
    pub beta_running: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedFit {
    pub u: String,
    pub fit: FitOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSection {
    pub rows: Vec<KernelRow>,
    pub fits: Vec<NamedFit>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderError {
    pub order: usize,
    pub max: f64,
    pub median: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramRow {
    pub h: f64,
    pub degree: usize,
    pub converged: bool,
    pub last_change: Option<f64>,
    pub condition: f64,
    pub realized_cutoff: usize,
    pub realized: ErrorStats,
    pub by_order: Vec<OrderError>,
}

/// `r_i = err_N(h_i) / err_{N-1}(h_i)`; `scaled_i = (r_i / r_{i+1}) / (h_i / h_{i+1})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderRatio {
    pub order: usize,
    pub ratios: Vec<f64>,
    pub scaled: Vec<f64>,
    pub within_factor_3: bool,
}

impl OrderRatio {
    pub fn from_errors(order: usize, hs: &[f64], hi: &[f64], lo: &[f64]) -> Self {
        let ratios: Vec<f64> = hi.iter().zip(lo).map(|(a, b)| a / b).collect();
        let scaled: Vec<f64> = (0..ratios.len().saturating_sub(1))
            .map(|i| (ratios[i] / ratios[i + 1]) / (hs[i] / hs[i + 1]))
            .collect();
        let within_factor_3 = scaled.iter().all(|q| q.is_finite() && *q >= 1.0 / 3.0 && *q <= 3.0);
        OrderRatio {
            order,
            ratios,
            scaled,
            within_factor_3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramSection {
    pub pairs: usize,
    pub offset: f64,
    pub rows: Vec<GramRow>,
    /// Realized-kernel maximum errors strictly decrease along the grid.
    pub monotone: bool,
    pub fit: FitOutcome,
    pub order_ratio: OrderRatio,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierRow {
    pub u: String,
    pub residuals: Vec<f64>,
    /// Every residual at or below the fit floor.
    pub at_floor: bool,
    pub fit: FitOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierSection {
    pub x: Vec<C64>,
    pub rows: Vec<FourierRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointwiseRow {
    pub u: String,
    pub report: PointwiseReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalitySection {
    pub gap: GapEstimate,
    pub report: InequalityReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSection {
    pub cases: Vec<String>,
    pub table: SpTable,
    /// Grid points where node doubling did not settle; they count as failures.
    pub unresolved: Vec<Unresolved>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Unresolved {
    pub h: f64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizedSection {
    pub h: f64,
    pub delta: f64,
    pub margin: f64,
    pub max_domination_ratio: f64,
    pub nsamples: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub config: RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validate: Option<Outcome<ValidateSection>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<Outcome<AmplitudeSection>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Outcome<KernelSection>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gram: Option<Outcome<GramSection>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fourier: Option<Outcome<FourierSection>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pointwise: Option<Outcome<Vec<PointwiseRow>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inequalities: Option<Outcome<InequalitySection>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<Outcome<QuadratureSection>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub localized: Option<Outcome<LocalizedSection>>,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Names of the suites that ran and failed.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        macro_rules! check {
            ($field:ident) => {
                if self.$field.as_ref().is_some_and(|o| !o.is_ok()) {
                    out.push(stringify!($field));
                }
            };
        }
        check!(validate);
        check!(amplitude);
        check!(kernel);
        check!(gram);
        check!(fourier);
        check!(pointwise);
        check!(inequalities);
        check!(quadrature);
        check!(localized);
        out
    }
}

/// Objects shared by the suites.
struct Pipeline {
    w: Weight,
    p: Polarization,
    pd: PhaseData,
}

fn pipeline(c: &RunConfig) -> Result<Pipeline> {
    let w = c.build_weight()?;
    let p = polarize(&w)?;
    let pd = build_phase(&p)?;
    Ok(Pipeline { w, p, pd })
}

fn margin_radius(c: &RunConfig) -> f64 {
    c.oracle.margin_fraction * c.weight.trust_radius
}

fn v_domain(c: &RunConfig) -> DomainSpec {
    let d = &c.domains;
    DomainSpec {
        shape: d.shape,
        center: c.base(),
        radius: d.v_radius,
        nr: d.v_nr,
        nt: d.v_nt,
    }
}

fn u_domain(c: &RunConfig) -> DomainSpec {
    let d = &c.domains;
    DomainSpec {
        shape: d.shape,
        center: c.base(),
        radius: d.u_radius,
        nr: d.u_nr,
        nt: d.u_nt,
    }
}

fn validate_suite(c: &RunConfig, pl: &Pipeline) -> Result<ValidateSection> {
    let radius = margin_radius(c);
    let o = &c.oracle;
    let gap = quadratic_gap_estimate(&pl.w, &pl.p, radius, o.nsamples, o.seed)?;
    let psi_l1 = pl.p.psi().terms().map(|(_, v)| v.norm()).sum();
    let restriction_error = sampling::ball_points(&c.base(), c.domains.v_radius, 500, o.seed)
        .iter()
        .map(|x| (pl.p.value_at_conj(x, x).re - pl.w.value(x)).abs())
        .fold(0.0, f64::max);
    let n = pl.w.n();
    let zeros = vec![C64::new(0.0, 0.0); n];
    let mut ac = phase::build_good_contour(&pl.pd, &zeros, &zeros)?;
    let amplitude_contour = phase::verify_amplitude_contour(&pl.pd, &mut ac, radius, o.nsamples, o.seed)?;
    let mut ic = phase::build_inversion_contour(&pl.w, pl.w.base());
    let inversion_contour = phase::verify_inversion_contour(&pl.w, &mut ic, radius, o.nsamples, o.seed)?;
    let b = pl.p.b_matrix();
    Ok(ValidateSection {
        n,
        levi_min: pl.w.levi_min(),
        gap,
        psi_l1,
        restriction_error,
        b_matrix: (0..n).flat_map(|i| (0..n).map(move |j| b[(i, j)])).collect(),
        hess_det: pl.pd.hess_det(),
        amplitude_contour,
        inversion_contour,
    })
}

fn solve(c: &RunConfig, pl: &Pipeline) -> Result<Amplitude> {
    let mut a = solve_amplitude(&pl.pd, c.order)?;
    let r = c.oracle.growth_radius.unwrap_or(c.domains.u_radius);
    a.growth = Some(estimate_growth(&a, r, 256, c.oracle.seed));
    Ok(a)
}

fn amplitude_suite(c: &RunConfig, pl: &Pipeline, a: &Amplitude) -> Result<AmplitudeSection> {
    let hmax = c.hmax();
    let f = formal_expansion(&pl.pd, &a.as_graded(), hmax)?;
    let defining_residual = f
        .terms()
        .iter()
        .enumerate()
        .map(|(k, t)| {
            if k == 0 {
                t.sub(&TruncatedSeries::constant(t.nvars(), t.maxdeg(), C64::new(1.0, 0.0)))
                    .map(|d| d.sup_norm())
            } else {
                Ok(t.sup_norm())
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(AmplitudeSection {
        order: a.order,
        a0_at_base: a.coeffs[0].constant_term(),
        coeffs_at_base: a.coeffs.iter().map(|t| t.constant_term()).collect(),
        growth: a.growth.clone().expect("growth estimated"),
        defining_residual,
        amplitude: a.clone(),
    })
}

fn kernel_suite(c: &RunConfig, pl: &Pipeline, a: &Amplitude) -> Result<KernelSection> {
    let (inner, outer) = (u_domain(c), v_domain(c));
    inner.check_inside(&pl.w)?;
    outer.check_inside(&pl.w)?;
    let fns = c.test_functions();
    let mut rows: Vec<KernelRow> = Vec::new();
    for &h in &c.h_grid {
        let k = projector::assemble_kernel(&pl.p, a, h)?;
        let errors = fns
            .iter()
            .map(|(name, u)| {
                let f = projector::holomorphic(u);
                Ok(NamedValue {
                    u: name.clone(),
                    value: projector::reproducing_error(&k, &f, &pl.w, &inner, &outer)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let err_u = errors.iter().map(|e| e.value).fold(0.0, f64::max);
        let mut pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.h, r.err_u)).collect();
        pts.push((h, err_u));
        let beta_running = if pts.len() >= 4 {
            projector::decay_fit(&pts).ok().map(|f| f.beta)
        } else {
            None
        };
        let base = c.base();
        rows.push(KernelRow {
            h,
            cutoff: k.cutoff(),
            k_at_base: k.eval(&base, &base).re,
            errors,
            err_u,
            beta_running,
        });
    }
    let fits = fns
        .iter()
        .enumerate()
        .map(|(i, (name, _))| NamedFit {
            u: name.clone(),
            fit: FitOutcome::of(&rows.iter().map(|r| (r.h, r.errors[i].value)).collect::<Vec<_>>()),
        })
        .collect();
    Ok(KernelSection { rows, fits })
}

fn gram_suite(c: &RunConfig, pl: &Pipeline, a: &Amplitude) -> Result<GramSection> {
    let o = &c.oracle;
    let dom = v_domain(c);
    dom.check_inside(&pl.w)?;
    let pairs = oracle::near_diagonal_pairs(&c.base(), c.domains.u_radius, o.pair_offset, o.pairs, o.seed);
    let probes: Vec<Vec<C64>> = pairs.iter().flat_map(|(x, y)| [x.clone(), y.clone()]).collect();
    let mut rows = Vec::new();
    for &h in &c.h_grid {
        let g = oracle::gram_bergman_adaptive(&pl.w, &dom, h, &probes, o.gram_degree)?;
        let kr = projector::assemble_kernel(&pl.p, a, h)?;
        let realized = oracle::compare_kernels(&kr, &g.kernel, &pairs);
        let by_order = (0..=c.order)
            .map(|n| {
                let k = projector::assemble_kernel_with(&pl.p, a, h, KernelMode::FixedOrder(n))?;
                let s = oracle::compare_kernels(&k, &g.kernel, &pairs);
                Ok(OrderError {
                    order: n,
                    max: s.max,
                    median: s.median,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(GramRow {
            h,
            degree: g.kernel.degree(),
            converged: g.converged,
            last_change: g.last_change,
            condition: g.kernel.condition(),
            realized_cutoff: kr.cutoff(),
            realized,
            by_order,
        });
    }
    let monotone = rows.windows(2).all(|w| w[1].realized.max < w[0].realized.max);
    let fit = FitOutcome::of(&rows.iter().map(|r| (r.h, r.realized.max)).collect::<Vec<_>>());
    let n = o.ratio_order;
    let hi: Vec<f64> = rows.iter().map(|r| r.by_order[n].max).collect();
    let lo: Vec<f64> = rows.iter().map(|r| r.by_order[n - 1].max).collect();
    let order_ratio = OrderRatio::from_errors(n, &c.h_grid, &hi, &lo);
    Ok(GramSection {
        pairs: pairs.len(),
        offset: o.pair_offset,
        rows,
        monotone,
        fit,
        order_ratio,
    })
}

fn fourier_suite(c: &RunConfig, pl: &Pipeline) -> Result<FourierSection> {
    let dom = v_domain(c);
    let x = c.base();
    let rows = c
        .test_functions()
        .iter()
        .map(|(name, u)| {
            let residuals = c
                .h_grid
                .iter()
                .map(|&h| Ok(oracle::fourier_inversion_check(&pl.w, u, &x, &dom, h)?.residual))
                .collect::<Result<Vec<f64>>>()?;
            let pts: Vec<(f64, f64)> = c.h_grid.iter().copied().zip(residuals.iter().copied()).collect();
            Ok(FourierRow {
                u: name.clone(),
                at_floor: residuals.iter().all(|r| *r <= projector::FIT_FLOOR),
                fit: FitOutcome::of(&pts),
                residuals,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FourierSection { x, rows })
}

fn pointwise_suite(c: &RunConfig, pl: &Pipeline) -> Result<Vec<PointwiseRow>> {
    let (inner, outer) = (u_domain(c), v_domain(c));
    c.test_functions()
        .iter()
        .map(|(name, u)| {
            Ok(PointwiseRow {
                u: name.clone(),
                report: oracle::pointwise_bound_check(&pl.w, u, &inner, &outer, &c.h_grid)?,
            })
        })
        .collect()
}

fn delta_for(c: &RunConfig, pl: &Pipeline) -> Result<(f64, GapEstimate)> {
    let o = &c.oracle;
    let gap = quadratic_gap_estimate(&pl.w, &pl.p, margin_radius(c), o.nsamples, o.seed)?;
    Ok((o.delta.unwrap_or(0.5 * gap.cmin), gap))
}

fn inequality_suite(c: &RunConfig, pl: &Pipeline) -> Result<InequalitySection> {
    let (delta, gap) = delta_for(c, pl)?;
    let o = &c.oracle;
    let probe = InequalityProbe {
        delta,
        center: c.base(),
        radius: margin_radius(c),
        nsamples: o.nsamples,
        seed: o.seed,
    };
    let report = oracle::inequality_suite(&pl.w, &pl.p, &pl.pd, &probe)?;
    Ok(InequalitySection { gap, report })
}

/// Integrands `1, x, ỹ, x ỹ, x² + ỹ` in the displacements of `(x, ỹ)`.
pub fn quadrature_cases(maxdeg: u32) -> Vec<(String, TruncatedSeries)> {
    let m = |a: u16, b: u16| TruncatedSeries::monomial(2, maxdeg, &MultiIndex::from_slice(&[a, b]), C64::new(1.0, 0.0));
    vec![
        ("1".into(), m(0, 0)),
        ("x".into(), m(1, 0)),
        ("yt".into(), m(0, 1)),
        ("x*yt".into(), m(1, 1)),
        ("x^2+yt".into(), m(2, 0).add(&m(0, 1)).expect("same nvars")),
    ]
}

fn quadrature_suite(c: &RunConfig, pl: &Pipeline) -> Result<QuadratureSection> {
    let cases = quadrature_cases(2 * c.order as u32 + 4);
    let series: Vec<TruncatedSeries> = cases.iter().map(|(_, s)| s.clone()).collect();
    let mut table = SpTable {
        order: c.order,
        rows: Vec::new(),
        all_pass: true,
    };
    let mut unresolved = Vec::new();
    for &h in &c.h_grid {
        match oracle::sp_quadrature_check(&pl.pd, &series, &[h], c.order) {
            Ok(t) => table.rows.extend(t.rows),
            Err(e @ Error::QuadratureUnderresolved { .. }) => unresolved.push(Unresolved {
                h,
                error: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    table.rows.sort_by_key(|r| r.case);
    table.all_pass = unresolved.is_empty() && table.rows.iter().all(|r| r.pass);
    Ok(QuadratureSection {
        cases: cases.into_iter().map(|(n, _)| n).collect(),
        table,
        unresolved,
    })
}

fn localized_suite(c: &RunConfig, pl: &Pipeline) -> Result<LocalizedSection> {
    let (delta, _) = delta_for(c, pl)?;
    let o = &c.oracle;
    let h = c.h_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let chi = Cutoff::for_domain(&v_domain(c));
    let one = TruncatedSeries::constant(pl.w.n(), 0, C64::new(1.0, 0.0));
    let z = c.base();
    let radius = c.domains.u_radius;
    let e = oracle::localized_element(&one, &z, &pl.w, h, &chi, delta, radius, o.nsamples, o.seed)?;
    let max_domination_ratio = sampling::ball_points(&z, radius, o.nsamples, o.seed)
        .iter()
        .map(|x| e.domination_ratio(x))
        .fold(0.0, f64::max);
    Ok(LocalizedSection {
        h,
        delta,
        margin: e.margin,
        max_domination_ratio,
        nsamples: o.nsamples,
    })
}

fn dependency_error<T>(e: &str) -> Outcome<T> {
    Outcome {
        status: Status::Error,
        result: None,
        error: Some(format!("dependency failed: {e}")),
    }
}

/// Runs the selected suites. Only an invalid configuration is an error;
/// suite failures are recorded in their sections.
pub fn run(c: &RunConfig) -> Result<Report> {
    c.check()?;
    let selected = |s: Suite| c.suites.contains(&s);
    let mut report = Report {
        schema: SCHEMA.into(),
        config: c.clone(),
        validate: None,
        amplitude: None,
        kernel: None,
        gram: None,
        fourier: None,
        pointwise: None,
        inequalities: None,
        quadrature: None,
        localized: None,
    };
    let pl = match pipeline(c) {
        Ok(pl) => pl,
        Err(e) => {
            let msg = e.to_string();
            if matches!(e, Error::ConfigInvalid(_)) {
                return Err(e);
            }
            macro_rules! fail {
                ($suite:expr, $field:ident) => {
                    if selected($suite) {
                        report.$field = Some(dependency_error(&msg));
                    }
                };
            }
            fail!(Suite::Validate, validate);
            fail!(Suite::Amplitude, amplitude);
            fail!(Suite::Kernel, kernel);
            fail!(Suite::Gram, gram);
            fail!(Suite::Fourier, fourier);
            fail!(Suite::Pointwise, pointwise);
            fail!(Suite::Inequalities, inequalities);
            fail!(Suite::Quadrature, quadrature);
            fail!(Suite::Localized, localized);
            return Ok(report);
        }
    };
    if selected(Suite::Validate) {
        report.validate = Some(Outcome::from_result(validate_suite(c, &pl)));
    }
    let needs_amplitude = [Suite::Amplitude, Suite::Kernel, Suite::Gram]
        .iter()
        .any(|s| selected(*s));
    let amp = if needs_amplitude { Some(solve(c, &pl)) } else { None };
    if let Some(amp) = &amp {
        match amp {
            Ok(a) => {
                if selected(Suite::Amplitude) {
                    report.amplitude = Some(Outcome::from_result(amplitude_suite(c, &pl, a)));
                }
                if selected(Suite::Kernel) {
                    report.kernel = Some(Outcome::from_result(kernel_suite(c, &pl, a)));
                }
                if selected(Suite::Gram) {
                    report.gram = Some(Outcome::from_result(gram_suite(c, &pl, a)));
                }
            }
            Err(e) => {
                let msg = e.to_string();
                if selected(Suite::Amplitude) {
                    report.amplitude = Some(dependency_error(&msg));
                }
                if selected(Suite::Kernel) {
                    report.kernel = Some(dependency_error(&msg));
                }
                if selected(Suite::Gram) {
                    report.gram = Some(dependency_error(&msg));
                }
            }
        }
    }
    if selected(Suite::Fourier) {
        report.fourier = Some(Outcome::from_result(fourier_suite(c, &pl)));
    }
    if selected(Suite::Pointwise) {
        report.pointwise = Some(Outcome::from_result(pointwise_suite(c, &pl)));
    }
    if selected(Suite::Inequalities) {
        report.inequalities = Some(Outcome::from_result(inequality_suite(c, &pl)));
    }
    if selected(Suite::Quadrature) {
        report.quadrature = Some(Outcome::from_result(quadrature_suite(c, &pl)));
    }
    if selected(Suite::Localized) {
        report.localized = Some(Outcome::from_result(localized_suite(c, &pl)));
    }
    Ok(report)
}

#[derive(Serialize)]
struct KernelCsv {
    h: f64,
    #[serde(rename = "N")]
    n: usize,
    err_u: f64,
    beta_running: Option<f64>,
}

#[derive(Serialize)]
struct GramCsv {
    h: f64,
    #[serde(rename = "N")]
    n: usize,
    max_err: f64,
    median_err: f64,
}

#[derive(Serialize)]
struct FourierCsv<'a> {
    u: &'a str,
    h: f64,
    residual: f64,
}

#[derive(Serialize)]
struct GrowthCsv {
    k: usize,
    sup_norm: f64,
    normalized: f64,
}

fn csv_table<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// CSV tables keyed by file name, in a fixed order.
pub fn csv_tables(r: &Report) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    if let Some(k) = r.kernel.as_ref().and_then(|o| o.result.as_ref()) {
        out.push((
            "kernel.csv".into(),
            csv_table(k.rows.iter().map(|row| KernelCsv {
                h: row.h,
                n: row.cutoff,
                err_u: row.err_u,
                beta_running: row.beta_running,
            }))?,
        ));
    }
    if let Some(g) = r.gram.as_ref().and_then(|o| o.result.as_ref()) {
        out.push((
            "gram.csv".into(),
            csv_table(g.rows.iter().flat_map(|row| {
                row.by_order.iter().map(move |e| GramCsv {
                    h: row.h,
                    n: e.order,
                    max_err: e.max,
                    median_err: e.median,
                })
            }))?,
        ));
    }
    if let Some(f) = r.fourier.as_ref().and_then(|o| o.result.as_ref()) {
        let hs = &r.config.h_grid;
        out.push((
            "fourier.csv".into(),
            csv_table(f.rows.iter().flat_map(|row| {
                hs.iter().zip(&row.residuals).map(move |(h, res)| FourierCsv {
                    u: &row.u,
                    h: *h,
                    residual: *res,
                })
            }))?,
        ));
    }
    if let Some(a) = r.amplitude.as_ref().and_then(|o| o.result.as_ref()) {
        let g = &a.growth;
        out.push((
            "growth.csv".into(),
            csv_table(
                g.sup_norms
                    .iter()
                    .zip(&g.normalized)
                    .enumerate()
                    .map(|(k, (s, v))| GrowthCsv {
                        k,
                        sup_norm: *s,
                        normalized: *v,
                    }),
            )?,
        ));
    }
    Ok(out)
}

/// Writes `report.json` or the CSV tables into `dir`.
pub fn emit(r: &Report, format: Format, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let files = match format {
        Format::Json => vec![("report.json".to_string(), r.to_json())],
        Format::Csv => csv_tables(r)?,
    };
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}
