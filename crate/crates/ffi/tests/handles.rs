use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use bergman_ffi::*;

fn c(re: f64, im: f64) -> BergmanComplex {
    BergmanComplex { re, im }
}

fn last_error() -> String {
    let p = bergman_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn quadratic(lambda: f64) -> *mut BergmanWeight {
    let exps = [1u16, 1];
    let coeff = [c(lambda, 0.0)];
    let mut w = ptr::null_mut();
    let s = unsafe { bergman_weight_new(1, 8, exps.as_ptr(), coeff.as_ptr(), 1, ptr::null(), 2.0, &mut w) };
    assert_eq!(s, BergmanStatus::Ok);
    w
}

#[test]
fn gaussian_round_trip() {
    let w = quadratic(0.5);
    unsafe {
        assert_eq!(bergman_weight_dim(w), 1);
        let x = [c(0.3, -0.4)];
        let mut phi = 0.0;
        assert_eq!(bergman_weight_value(w, x.as_ptr(), &mut phi), BergmanStatus::Ok);
        assert!((phi - 0.125).abs() < 1e-15);
        let mut psi = c(0.0, 0.0);
        assert_eq!(
            bergman_weight_polarization(w, x.as_ptr(), x.as_ptr(), &mut psi),
            BergmanStatus::Ok
        );
        assert!((psi.re - 0.125).abs() < 1e-15 && psi.im.abs() < 1e-15);

        let mut a = ptr::null_mut();
        assert_eq!(bergman_amplitude_solve(w, 2, 0.5, &mut a), BergmanStatus::Ok);
        assert_eq!(bergman_amplitude_order(a), 2);
        let mut a0 = c(0.0, 0.0);
        let z = [c(0.0, 0.0)];
        assert_eq!(
            bergman_amplitude_coeff(a, 0, z.as_ptr(), z.as_ptr(), &mut a0),
            BergmanStatus::Ok
        );
        assert!((a0.re - 1.0 / std::f64::consts::PI).abs() < 1e-15);
        let mut gc = 0.0;
        assert_eq!(bergman_amplitude_growth_c(a, &mut gc), BergmanStatus::Ok);
        assert!(gc > 0.0);

        let mut k = ptr::null_mut();
        assert_eq!(bergman_kernel_new(w, a, 0.1, &mut k), BergmanStatus::Ok);
        bergman_amplitude_free(a);
        bergman_weight_free(w);
        let y = [c(-0.2, 0.1)];
        let mut v = c(0.0, 0.0);
        assert_eq!(
            bergman_kernel_eval(k, x.as_ptr(), y.as_ptr(), &mut v),
            BergmanStatus::Ok
        );
        let exact =
            (bergman::C64::new(0.3, -0.4) * bergman::C64::new(-0.2, -0.1) / 0.1).exp() / (std::f64::consts::PI * 0.1);
        assert!(((bergman::C64::new(v.re, v.im) - exact) / exact).norm() < 1e-12);
        assert!(bergman_kernel_cutoff(k) <= 2);
        bergman_kernel_free(k);
    }
}

#[test]
fn errors_carry_status_and_message() {
    unsafe {
        let mut v = c(0.0, 0.0);
        let x = [c(0.0, 0.0)];
        assert_eq!(
            bergman_kernel_eval(ptr::null(), x.as_ptr(), x.as_ptr(), &mut v),
            BergmanStatus::NullPointer
        );
        assert!(last_error().contains("null"));

        // Φ = -|x|² is not plurisubharmonic.
        let exps = [1u16, 1];
        let coeff = [c(-1.0, 0.0)];
        let mut w = ptr::null_mut();
        let s = bergman_weight_new(1, 8, exps.as_ptr(), coeff.as_ptr(), 1, ptr::null(), 1.0, &mut w);
        assert_eq!(s, BergmanStatus::Degenerate);
        assert!(w.is_null());

        // x² alone is not real valued.
        let exps = [2u16, 0];
        let coeff = [c(1.0, 0.0)];
        let s = bergman_weight_new(1, 8, exps.as_ptr(), coeff.as_ptr(), 1, ptr::null(), 1.0, &mut w);
        assert_eq!(s, BergmanStatus::NotRealValued);

        let w = quadratic(1.0);
        let mut a = ptr::null_mut();
        assert_eq!(bergman_amplitude_solve(w, 1, 0.5, &mut a), BergmanStatus::Ok);
        assert_eq!(
            bergman_amplitude_coeff(a, 5, x.as_ptr(), x.as_ptr(), &mut v),
            BergmanStatus::InvalidArgument
        );
        let mut k = ptr::null_mut();
        assert_eq!(bergman_kernel_new(w, a, -1.0, &mut k), BergmanStatus::InvalidArgument);
        assert_eq!(bergman_kernel_new(w, a, 0.1, &mut k), BergmanStatus::Ok);
        assert!(bergman_last_error_message().is_null());
        bergman_kernel_free(k);
        bergman_amplitude_free(a);
        bergman_weight_free(w);
    }
}

fn config_text(suites: &str) -> CString {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/gaussian.json");
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v["suites"] = serde_json::from_str(suites).unwrap();
    CString::new(v.to_string()).unwrap()
}

#[test]
fn run_config_returns_a_report() {
    let cfg = config_text(r#"["amplitude"]"#);
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(bergman_run_config(cfg.as_ptr(), &mut s), BergmanStatus::Ok);
        let text = CStr::from_ptr(s).to_str().unwrap().to_owned();
        bergman_string_free(s);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["schema"], "bergman-report/1");
        assert_eq!(v["amplitude"]["status"], "ok");

        let mut w = ptr::null_mut();
        assert_eq!(bergman_weight_from_config(cfg.as_ptr(), &mut w), BergmanStatus::Ok);
        bergman_weight_free(w);

        let bad = CString::new(r#"{"name": 1}"#).unwrap();
        assert_eq!(bergman_run_config(bad.as_ptr(), &mut s), BergmanStatus::ConfigInvalid);
        assert!(!last_error().is_empty());
    }
}

#[test]
fn version_is_the_package_version() {
    let v = unsafe { CStr::from_ptr(bergman_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/bergman.h")
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(header()).unwrap();
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for name in exports {
        assert!(h.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(h.contains("typedef struct BergmanWeight BergmanWeight;"));
}

/// Directory holding the shared library built alongside this test binary.
fn lib_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_library() {
    let dir = lib_dir();
    assert!(
        dir.join("libbergman_ffi.so").exists(),
        "shared library not found in {}",
        dir.display()
    );
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let status = Command::new("cc")
        .arg(manifest.join("tests/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg("-L")
        .arg(&dir)
        .args(["-lbergman_ffi", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).env("LD_LIBRARY_PATH", &dir).output().unwrap();
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}
