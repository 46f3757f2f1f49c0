//! C ABI for the `bergman` crate.
//!
//! Objects live behind opaque handles created by `*_new` / `*_solve` and
//! released by the matching `*_free`. Every fallible call returns a
//! [`BergmanStatus`]; on failure the message is available from
//! [`bergman_last_error_message`] on the same thread until the next call.
//! Points are arrays of `n` [`BergmanComplex`] values in absolute coordinates.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bergman::amplitude::{estimate_growth, solve_amplitude, Amplitude};
use bergman::config::RunConfig;
use bergman::phase::{build_phase, PhaseData};
use bergman::projector::{assemble_kernel, Kernel, KernelEvaluator};
use bergman::report;
use bergman::sampling::DEFAULT_SEED;
use bergman::weight::{polarize, validate_weight, Polarization, Weight};
use bergman::{Error, MultiIndex, TruncatedSeries, C64};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BergmanStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    ConfigInvalid = 4,
    NotRealValued = 5,
    Degenerate = 6,
    GapViolation = 7,
    DegenerateHessian = 8,
    CriticalStructure = 9,
    BadContour = 10,
    InsufficientDegree = 11,
    QuadratureUnderresolved = 12,
    DegenerateFit = 13,
    IllConditioned = 14,
    Unsupported = 15,
    Io = 16,
    Series = 17,
    Panic = 99,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BergmanComplex {
    pub re: f64,
    pub im: f64,
}

impl From<C64> for BergmanComplex {
    fn from(z: C64) -> Self {
        BergmanComplex { re: z.re, im: z.im }
    }
}

impl From<BergmanComplex> for C64 {
    fn from(z: BergmanComplex) -> Self {
        C64::new(z.re, z.im)
    }
}

/// A validated weight with its polarization and phase.
pub struct BergmanWeight {
    weight: Weight,
    polarization: Polarization,
    phase: PhaseData,
}

/// A solved amplitude with its growth estimate.
pub struct BergmanAmplitude {
    amplitude: Amplitude,
    compiled: Vec<bergman::tseries::CompiledSeries>,
}

/// A realized kernel at fixed `h`.
pub struct BergmanKernel {
    kernel: KernelEvaluator,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> BergmanStatus {
    use BergmanStatus as S;
    match e {
        Error::VariableMismatch { .. }
        | Error::BadVariable { .. }
        | Error::NonzeroConstantTerm { .. }
        | Error::ZeroConstantTerm => S::Series,
        Error::NotRealValued { .. } => S::NotRealValued,
        Error::Degenerate(_) => S::Degenerate,
        Error::GapViolation { .. } => S::GapViolation,
        Error::DegenerateHessian(_) => S::DegenerateHessian,
        Error::CriticalStructureViolation { .. } => S::CriticalStructure,
        Error::BadContour { .. } => S::BadContour,
        Error::InsufficientDegree(_) => S::InsufficientDegree,
        Error::QuadratureUnderresolved { .. } => S::QuadratureUnderresolved,
        Error::DegenerateFit(_) => S::DegenerateFit,
        Error::IllConditioned { .. } => S::IllConditioned,
        Error::Unsupported(_) => S::Unsupported,
        Error::ConfigInvalid(_) | Error::Json(_) => S::ConfigInvalid,
        Error::Io(_) => S::Io,
    }
}

struct Fail(BergmanStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn fail(status: BergmanStatus, msg: &str) -> Fail {
    Fail(status, msg.to_string())
}

/// Runs `f`, converting errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BergmanStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BergmanStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            BergmanStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, Fail> {
    p.as_ref()
        .ok_or_else(|| fail(BergmanStatus::NullPointer, "null handle"))
}

unsafe fn slice<'a, T>(p: *const T, len: usize) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(BergmanStatus::NullPointer, "null array"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn point(p: *const BergmanComplex, n: usize) -> Result<Vec<C64>, Fail> {
    Ok(slice(p, n)?.iter().map(|&z| z.into()).collect())
}

unsafe fn out<T>(p: *mut T, v: T) -> Result<(), Fail> {
    if p.is_null() {
        return Err(fail(BergmanStatus::NullPointer, "null output pointer"));
    }
    p.write(v);
    Ok(())
}

unsafe fn text<'a>(s: *const c_char) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(fail(BergmanStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(BergmanStatus::InvalidUtf8, "string is not UTF-8"))
}

fn weight_handle(weight: Weight) -> Result<Box<BergmanWeight>, Fail> {
    let polarization = polarize(&weight)?;
    let phase = build_phase(&polarization)?;
    Ok(Box::new(BergmanWeight {
        weight,
        polarization,
        phase,
    }))
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn bergman_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static, NUL-terminated version string.
#[no_mangle]
pub extern "C" fn bergman_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a weight `Φ = Σ c_j ξ^{α_j} ξ̄^{β_j}` in displacements from `base`.
///
/// `exponents` holds `nterms` rows of `2n` entries (`α` then `β`);
/// `base` may be NULL for the origin.
///
/// # Safety
/// Arrays must hold the stated number of elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bergman_weight_new(
    n: usize,
    maxdeg: u32,
    exponents: *const u16,
    coeffs: *const BergmanComplex,
    nterms: usize,
    base: *const BergmanComplex,
    trust_radius: f64,
    out_weight: *mut *mut BergmanWeight,
) -> BergmanStatus {
    guard(|| {
        if n == 0 {
            return Err(fail(BergmanStatus::InvalidArgument, "n must be positive"));
        }
        let exps = slice(exponents, nterms * 2 * n)?;
        let cs = slice(coeffs, nterms)?;
        let terms = exps
            .chunks(2 * n)
            .zip(cs)
            .map(|(e, &c)| (MultiIndex::from_slice(e), C64::from(c)));
        let raw = TruncatedSeries::from_terms(2 * n, maxdeg, terms)?;
        let base = if base.is_null() {
            vec![C64::new(0.0, 0.0); n]
        } else {
            point(base, n)?
        };
        let h = weight_handle(validate_weight(&raw, &base, trust_radius)?)?;
        out(out_weight, Box::into_raw(h))
    })
}

/// Builds the weight described by a run-configuration JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out_weight` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bergman_weight_from_config(
    json: *const c_char,
    out_weight: *mut *mut BergmanWeight,
) -> BergmanStatus {
    guard(|| {
        let c = RunConfig::from_json(text(json)?)?;
        let h = weight_handle(c.build_weight()?)?;
        out(out_weight, Box::into_raw(h))
    })
}

/// Dimension `n` of the weight, or 0 for NULL.
///
/// # Safety
/// `w` must be NULL or a live weight handle.
#[no_mangle]
pub unsafe extern "C" fn bergman_weight_dim(w: *const BergmanWeight) -> usize {
    w.as_ref().map_or(0, |w| w.weight.n())
}

/// `Φ(x)`.
///
/// # Safety
/// `w` must be a live handle, `x` must hold `n` values, `out_value` writable.
#[no_mangle]
pub unsafe extern "C" fn bergman_weight_value(
    w: *const BergmanWeight,
    x: *const BergmanComplex,
    out_value: *mut f64,
) -> BergmanStatus {
    guard(|| {
        let w = deref(w)?;
        let x = point(x, w.weight.n())?;
        out(out_value, w.weight.value(&x))
    })
}

/// `Ψ(x, ȳ)`, the polarization evaluated at the conjugate of `y`.
///
/// # Safety
/// `w` must be a live handle, `x` and `y` must hold `n` values, `out_value` writable.
#[no_mangle]
pub unsafe extern "C" fn bergman_weight_polarization(
    w: *const BergmanWeight,
    x: *const BergmanComplex,
    y: *const BergmanComplex,
    out_value: *mut BergmanComplex,
) -> BergmanStatus {
    guard(|| {
        let w = deref(w)?;
        let n = w.weight.n();
        let (x, y) = (point(x, n)?, point(y, n)?);
        out(out_value, w.polarization.value_at_conj(&x, &y).into())
    })
}

/// # Safety
/// `w` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bergman_weight_free(w: *mut BergmanWeight) {
    if !w.is_null() {
        drop(Box::from_raw(w));
    }
}

/// Solves `A a = 1` through order `order` and estimates the growth constant
/// on the torus of radius `growth_radius`.
///
/// # Safety
/// `w` must be a live handle; `out_amplitude` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bergman_amplitude_solve(
    w: *const BergmanWeight,
    order: usize,
    growth_radius: f64,
    out_amplitude: *mut *mut BergmanAmplitude,
) -> BergmanStatus {
    guard(|| {
        let w = deref(w)?;
        if !(growth_radius > 0.0) {
            return Err(fail(BergmanStatus::InvalidArgument, "growth radius must be positive"));
        }
        let mut a = solve_amplitude(&w.phase, order)?;
        a.growth = Some(estimate_growth(&a, growth_radius, 256, DEFAULT_SEED));
        let compiled = a.coeffs.iter().map(|c| c.compile()).collect();
        out(
            out_amplitude,
            Box::into_raw(Box::new(BergmanAmplitude { amplitude: a, compiled })),
        )
    })
}

/// Amplitude order `N`, or 0 for NULL.
///
/// # Safety
/// `a` must be NULL or a live amplitude handle.
#[no_mangle]
pub unsafe extern "C" fn bergman_amplitude_order(a: *const BergmanAmplitude) -> usize {
    a.as_ref().map_or(0, |a| a.amplitude.order)
}

/// Estimated growth constant `C`.
///
/// # Safety
/// `a` must be a live handle; `out_c` writable.
#[no_mangle]
pub unsafe extern "C" fn bergman_amplitude_growth_c(a: *const BergmanAmplitude, out_c: *mut f64) -> BergmanStatus {
    guard(|| {
        let a = deref(a)?;
        let c = a
            .amplitude
            .growth_c()
            .ok_or_else(|| fail(BergmanStatus::InvalidArgument, "growth not estimated"))?;
        out(out_c, c)
    })
}

/// `a_k(x, ỹ)`.
///
/// # Safety
/// `a` must be a live handle, `x` and `yt` must hold `n` values, `out_value` writable.
#[no_mangle]
pub unsafe extern "C" fn bergman_amplitude_coeff(
    a: *const BergmanAmplitude,
    k: usize,
    x: *const BergmanComplex,
    yt: *const BergmanComplex,
    out_value: *mut BergmanComplex,
) -> BergmanStatus {
    guard(|| {
        let a = deref(a)?;
        let c = a
            .compiled
            .get(k)
            .ok_or_else(|| fail(BergmanStatus::InvalidArgument, "coefficient index exceeds the order"))?;
        let n = a.amplitude.n;
        let p = a.amplitude.coords(&point(x, n)?, &point(yt, n)?);
        out(out_value, c.eval(&p).into())
    })
}

/// # Safety
/// `a` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bergman_amplitude_free(a: *mut BergmanAmplitude) {
    if !a.is_null() {
        drop(Box::from_raw(a));
    }
}

/// Realized kernel `h^{-n} e^{2Ψ/h} Σ_{k<=K} a_k h^k` at the given `h`.
/// The handle does not borrow `w` or `a`.
///
/// # Safety
/// `w` and `a` must be live handles built from the same weight; `out_kernel` writable.
#[no_mangle]
pub unsafe extern "C" fn bergman_kernel_new(
    w: *const BergmanWeight,
    a: *const BergmanAmplitude,
    h: f64,
    out_kernel: *mut *mut BergmanKernel,
) -> BergmanStatus {
    guard(|| {
        let (w, a) = (deref(w)?, deref(a)?);
        if !(h > 0.0 && h.is_finite()) {
            return Err(fail(BergmanStatus::InvalidArgument, "h must be positive"));
        }
        let kernel = assemble_kernel(&w.polarization, &a.amplitude, h)?;
        out(out_kernel, Box::into_raw(Box::new(BergmanKernel { kernel })))
    })
}

/// Realization cutoff `K`, or 0 for NULL.
///
/// # Safety
/// `k` must be NULL or a live kernel handle.
#[no_mangle]
pub unsafe extern "C" fn bergman_kernel_cutoff(k: *const BergmanKernel) -> usize {
    k.as_ref().map_or(0, |k| k.kernel.cutoff())
}

/// `K(x, ȳ)`.
///
/// # Safety
/// `k` must be a live handle, `x` and `y` must hold `n` values, `out_value` writable.
#[no_mangle]
pub unsafe extern "C" fn bergman_kernel_eval(
    k: *const BergmanKernel,
    x: *const BergmanComplex,
    y: *const BergmanComplex,
    out_value: *mut BergmanComplex,
) -> BergmanStatus {
    guard(|| {
        let k = deref(k)?;
        let n = k.kernel.n();
        let (x, y) = (point(x, n)?, point(y, n)?);
        out(out_value, k.kernel.eval(&x, &y).into())
    })
}

/// # Safety
/// `k` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bergman_kernel_free(k: *mut BergmanKernel) {
    if !k.is_null() {
        drop(Box::from_raw(k));
    }
}

/// Runs the suites selected in a configuration and returns the JSON report.
/// Release the string with [`bergman_string_free`].
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn bergman_run_config(config_json: *const c_char, out_json: *mut *mut c_char) -> BergmanStatus {
    guard(|| {
        let c = RunConfig::from_json(text(config_json)?)?;
        let json = report::run(&c)?.to_json();
        let s = CString::new(json).map_err(|_| fail(BergmanStatus::Panic, "report contains NUL"))?;
        out(out_json, s.into_raw())
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bergman_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
