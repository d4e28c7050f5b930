use std::ffi::{CStr, CString};
use std::ptr;

use wfvi_ffi::*;

const NU: [f64; 3] = [1.0, -0.5, 2.0];
// tridiagonal precision, row-major
const LAMBDA: [f64; 9] = [2.0, 0.6, 0.0, 0.6, 1.5, -0.4, 0.0, -0.4, 3.0];

fn last_error() -> String {
    unsafe { CStr::from_ptr(wfvi_last_error_message()).to_string_lossy().into_owned() }
}

fn gaussian() -> *mut WfviModel {
    let mut m = ptr::null_mut();
    let s = unsafe { wfvi_model_gaussian_new(3, NU.as_ptr(), LAMBDA.as_ptr(), &mut m) };
    assert_eq!(s, WfviStatus::Ok);
    m
}

fn run(model: *const WfviModel, method: u32, seed: u64, max_iter: usize) -> *mut WfviFit {
    let mut opts = unsafe { std::mem::zeroed::<WfviFitOptions>() };
    unsafe {
        assert_eq!(wfvi_fit_options_default(method, seed, &mut opts), WfviStatus::Ok);
    }
    opts.max_iter = max_iter;
    opts.window = 200;
    let mut fit = ptr::null_mut();
    let s = unsafe { wfvi_fit_run(model, &opts, &mut fit) };
    assert_eq!(s, WfviStatus::Ok, "{}", last_error());
    fit
}

fn json(fit: *const WfviFit) -> String {
    let mut p = ptr::null_mut();
    unsafe {
        assert_eq!(wfvi_fit_to_json(fit, &mut p), WfviStatus::Ok);
        let s = CStr::from_ptr(p).to_str().unwrap().to_owned();
        wfvi_string_free(p);
        s
    }
}

#[test]
fn gaussian_fit_recovers_the_target() {
    let model = gaussian();
    assert_eq!(unsafe { wfvi_model_dim(model) }, 3);
    let fit = run(model, WFVI_METHOD_SDB, 5, 20_000);

    let mut mu = [0.0; 3];
    let mut cov = [0.0; 9];
    let (mut iters, mut stop, mut method, mut lb) = (0usize, 9u32, 9u32, 0.0);
    unsafe {
        assert_eq!(wfvi_fit_mean(fit, mu.as_mut_ptr(), 3), WfviStatus::Ok);
        assert_eq!(wfvi_fit_covariance(fit, cov.as_mut_ptr(), 9), WfviStatus::Ok);
        let s = wfvi_fit_summary(fit, &mut iters, &mut stop, ptr::null_mut(), &mut method, &mut lb);
        assert_eq!(s, WfviStatus::Ok);
    }
    assert_eq!(method, WFVI_METHOD_SDB);
    assert!(iters > 0 && iters <= 20_000 && (stop == WFVI_STOP_PLATEAU || stop == WFVI_STOP_MAX_ITER));
    assert!(lb.is_finite());
    for i in 0..3 {
        assert!((mu[i] - NU[i]).abs() < 0.05, "mu = {mu:?}");
    }
    // Σ·Λ should be close to the identity
    for i in 0..3 {
        for j in 0..3 {
            let v: f64 = (0..3).map(|k| cov[i * 3 + k] * LAMBDA[k * 3 + j]).sum();
            assert!((v - f64::from(u8::from(i == j))).abs() < 0.05, "({i},{j}) = {v}");
        }
    }
    unsafe {
        wfvi_fit_free(fit);
        wfvi_model_free(model);
    }
}

#[test]
fn fits_are_reproducible_and_survive_json() {
    let model = gaussian();
    let a = run(model, WFVI_METHOD_KLD, 21, 3000);
    let b = run(model, WFVI_METHOD_KLD, 21, 3000);
    let text = json(a);
    assert_eq!(text, json(b));

    let c = CString::new(text.clone()).unwrap();
    let mut back = ptr::null_mut();
    unsafe {
        assert_eq!(wfvi_fit_from_json(c.as_ptr(), &mut back), WfviStatus::Ok);
        assert_eq!(wfvi_fit_dim(back), 3);
    }
    assert_eq!(json(back), text);
    unsafe {
        for f in [a, b, back] {
            wfvi_fit_free(f);
        }
        wfvi_model_free(model);
    }
}

#[test]
fn errors_carry_status_and_message() {
    let mut m = ptr::null_mut();
    let not_spd = [1.0, 2.0, 2.0, 1.0];
    let s = unsafe { wfvi_model_gaussian_new(2, NU.as_ptr(), not_spd.as_ptr(), &mut m) };
    assert_eq!(s, WfviStatus::NotPositiveDefinite);
    assert!(m.is_null());
    assert!(!last_error().is_empty());

    let s = unsafe { wfvi_model_gaussian_new(3, ptr::null(), LAMBDA.as_ptr(), &mut m) };
    assert_eq!(s, WfviStatus::NullPointer);
    assert!(last_error().contains("nu"));

    let x = [1.0, 0.5, 1.0, -0.5];
    let y = [0.0, 2.0];
    let s = unsafe { wfvi_model_logistic_new(2, 2, x.as_ptr(), y.as_ptr(), 100.0, &mut m) };
    assert_eq!(s, WfviStatus::InvalidInput);
    assert!(last_error().contains("0 or 1"));

    let mut opts = unsafe { std::mem::zeroed::<WfviFitOptions>() };
    assert_eq!(unsafe { wfvi_fit_options_default(42, 1, &mut opts) }, WfviStatus::InvalidInput);

    let model = gaussian();
    let fit = run(model, WFVI_METHOD_FDR, 1, 500);
    let mut small = [0.0; 2];
    assert_eq!(unsafe { wfvi_fit_mean(fit, small.as_mut_ptr(), 2) }, WfviStatus::BufferTooSmall);

    let bad = CString::new("{\"not\": \"a fit\"}").unwrap();
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { wfvi_fit_from_json(bad.as_ptr(), &mut back) }, WfviStatus::InvalidInput);
    unsafe {
        wfvi_fit_free(fit);
        wfvi_model_free(model);
        wfvi_model_free(ptr::null_mut());
    }
}

#[test]
fn logistic_model_fits() {
    // labels follow the sign of a feature plus a deterministic perturbation
    let n = 40;
    let mut x = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let f = (i as f64 * 0.37).sin() * 2.0;
        x.extend([1.0, f]);
        y.push(if (f + (i as f64 * 1.7).cos()) > 0.0 { 1.0 } else { 0.0 });
    }
    let mut model = ptr::null_mut();
    let s = unsafe { wfvi_model_logistic_new(n, 2, x.as_ptr(), y.as_ptr(), 100.0, &mut model) };
    assert_eq!(s, WfviStatus::Ok, "{}", last_error());
    let fit = run(model, WFVI_METHOD_KLD, 3, 4000);
    let mut mu = [0.0; 2];
    unsafe {
        assert_eq!(wfvi_fit_mean(fit, mu.as_mut_ptr(), 2), WfviStatus::Ok);
        wfvi_fit_free(fit);
        wfvi_model_free(model);
    }
    assert!(mu[1] > 0.5, "slope {}", mu[1]);
}

#[test]
fn analytic_helpers() {
    // S_M is zero when q = p; a diagonal Λ keeps Σ = Λ⁻¹ exact
    let mut sigma = [0.0; 9];
    let m = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    let lambda = [2.0, 0.0, 0.0, 0.0, 4.0, 0.0, 0.0, 0.0, 0.5];
    for i in 0..3 {
        sigma[i * 4] = 1.0 / lambda[i * 4];
    }
    let mut v = f64::NAN;
    unsafe {
        let s = wfvi_weighted_fd_gaussians(3, NU.as_ptr(), sigma.as_ptr(), NU.as_ptr(), lambda.as_ptr(), m.as_ptr(), &mut v);
        assert_eq!(s, WfviStatus::Ok);
    }
    assert!(v.abs() < 1e-12, "{v}");

    // shifting μ by δ adds δᵀΛMΛδ
    let mu = [NU[0] + 0.5, NU[1], NU[2]];
    unsafe {
        wfvi_weighted_fd_gaussians(3, mu.as_ptr(), sigma.as_ptr(), NU.as_ptr(), lambda.as_ptr(), m.as_ptr(), &mut v);
    }
    assert!((v - 0.25 * 4.0).abs() < 1e-12, "{v}");

    let x: Vec<f64> = (0..40).map(|k| (k as f64 * 0.61).sin()).collect();
    let mut ms = f64::NAN;
    unsafe {
        assert_eq!(wfvi_mmd_mstar(20, 2, x.as_ptr(), x.as_ptr(), 1.0, &mut ms), WfviStatus::Ok);
    }
    // identical sets give MMD²_u ≤ 0, so M* sits at its ceiling
    assert!((ms - -(1e-5f64).ln()).abs() < 1e-9, "{ms}");
}
