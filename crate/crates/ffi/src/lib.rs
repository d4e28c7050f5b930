//! C ABI over `wfvi`.
//!
//! Models and fits live behind opaque handles created and freed through
//! this interface. Every function returns a [`WfviStatus`]; on failure a
//! description is kept per thread and read with
//! [`wfvi_last_error_message`]. Matrices cross the boundary as dense
//! row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DMatrix;
use wfvi::optim::{self, FitConfig, FitResult, Method, StopReason};
use wfvi::targets::{GaussianTarget, LogisticModel, TargetModel};
use wfvi::Error;

pub const WFVI_METHOD_KLD: u32 = 0;
pub const WFVI_METHOD_FDR: u32 = 1;
pub const WFVI_METHOD_SDR: u32 = 2;
pub const WFVI_METHOD_FDB: u32 = 3;
pub const WFVI_METHOD_SDB: u32 = 4;
pub const WFVI_METHOD_BAM: u32 = 5;

pub const WFVI_STOP_PLATEAU: u32 = 0;
pub const WFVI_STOP_MAX_ITER: u32 = 1;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WfviStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DimensionMismatch = 3,
    NotPositiveDefinite = 4,
    /// Singular factor, non-finite value or ill-conditioned update.
    Numerical = 5,
    NoConvergence = 6,
    Io = 7,
    Parse = 8,
    /// The buffer passed in is shorter than the result.
    BufferTooSmall = 9,
    Panic = 10,
}

/// Target density handle.
pub struct WfviModel {
    inner: Box<dyn TargetModel>,
}

/// Fitted variational Gaussian handle.
pub struct WfviFit {
    inner: FitResult,
}

/// Optimizer settings. Fill with [`wfvi_fit_options_default`] and adjust.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct WfviFitOptions {
    /// One of the `WFVI_METHOD_*` constants.
    pub method: u32,
    pub seed: u64,
    pub batch_size: usize,
    pub max_iter: usize,
    /// Iterations per lower-bound average.
    pub window: usize,
    pub adadelta_decay: f64,
    pub adadelta_eps: f64,
    pub init_mu: f64,
    pub init_t: f64,
    pub use_stopping_rule: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> WfviStatus {
    match e {
        Error::InvalidInput(_) => WfviStatus::InvalidInput,
        Error::DimensionMismatch { .. } => WfviStatus::DimensionMismatch,
        Error::NotPositiveDefinite(_) => WfviStatus::NotPositiveDefinite,
        Error::SingularFactor { .. } | Error::NonFinite(_) | Error::IllConditioned(_) => WfviStatus::Numerical,
        Error::NoConvergence(_) => WfviStatus::NoConvergence,
        Error::Io { .. } => WfviStatus::Io,
        Error::Parse { .. } => WfviStatus::Parse,
    }
}

struct Fail(WfviStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(WfviStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any error or panic for `wfvi_last_error_message`.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> WfviStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WfviStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            WfviStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn square(p: *const f64, dim: usize, what: &str) -> Result<DMatrix<f64>, Fail> {
    Ok(DMatrix::from_row_slice(dim, dim, slice(p, dim * dim, what)?))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, need: usize) -> Result<&'a mut [f64], Fail> {
    if len < need {
        return Err(Fail(WfviStatus::BufferTooSmall, format!("buffer holds {len} values, {need} needed")));
    }
    if p.is_null() {
        return Err(null("output buffer"));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

unsafe fn write_out<T>(out: *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(v);
    Ok(())
}

fn method_of(code: u32) -> Result<Method, Fail> {
    Method::ALL
        .get(code as usize)
        .copied()
        .ok_or_else(|| Fail(WfviStatus::InvalidInput, format!("unknown method code {code}")))
}

fn method_code(m: Method) -> u32 {
    Method::ALL.iter().position(|&x| x == m).expect("listed") as u32
}

/// Message for the last failed call on this thread, or null if none has
/// failed. The pointer stays valid until the next failing call on the
/// same thread.
#[no_mangle]
pub extern "C" fn wfvi_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Gaussian target N(ν, Λ⁻¹) given ν (length `dim`) and the precision Λ.
///
/// # Safety
/// `nu` must point to `dim` doubles, `lambda` to `dim * dim`, and `out` must
/// be writable. The handle written to `out` is released with
/// [`wfvi_model_free`].
#[no_mangle]
pub unsafe extern "C" fn wfvi_model_gaussian_new(
    dim: usize,
    nu: *const f64,
    lambda: *const f64,
    out: *mut *mut WfviModel,
) -> WfviStatus {
    guard(|| {
        let nu = slice(nu, dim, "nu")?.to_vec();
        let lambda = square(lambda, dim, "lambda")?;
        let model = GaussianTarget::new(nu, lambda)?;
        write_out(out, Box::into_raw(Box::new(WfviModel { inner: Box::new(model) })))
    })
}

/// Bayesian logistic regression with labels in {0, 1}, an `n × dim`
/// design and a N(0, σ₀²I) prior on the coefficients.
///
/// # Safety
/// `x` must point to `n * dim` doubles, `y` to `n`, and `out` must be
/// writable. Release the handle with [`wfvi_model_free`].
#[no_mangle]
pub unsafe extern "C" fn wfvi_model_logistic_new(
    n: usize,
    dim: usize,
    x: *const f64,
    y: *const f64,
    sigma0_sq: f64,
    out: *mut *mut WfviModel,
) -> WfviStatus {
    guard(|| {
        let x = DMatrix::from_row_slice(n, dim, slice(x, n * dim, "x")?);
        let y = slice(y, n, "y")?.to_vec();
        let model = LogisticModel::new(x, y, sigma0_sq)?;
        write_out(out, Box::into_raw(Box::new(WfviModel { inner: Box::new(model) })))
    })
}

/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn wfvi_model_dim(model: *const WfviModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.dim())
}

/// # Safety
/// `model` must come from a `wfvi_model_*_new` call and not be used again.
/// Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn wfvi_model_free(model: *mut WfviModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Library defaults for `method` (a `WFVI_METHOD_*` code).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wfvi_fit_options_default(method: u32, seed: u64, out: *mut WfviFitOptions) -> WfviStatus {
    guard(|| {
        let c = FitConfig::new(method_of(method)?, seed);
        let opts = WfviFitOptions {
            method,
            seed,
            batch_size: c.batch_size,
            max_iter: c.max_iter,
            window: c.window,
            adadelta_decay: c.adadelta_decay,
            adadelta_eps: c.adadelta_eps,
            init_mu: c.init_mu,
            init_t: c.init_t,
            use_stopping_rule: c.use_stopping_rule,
        };
        write_out(out, opts)
    })
}

/// Fits a Gaussian approximation to `model`. The same model and options
/// always give the same fit.
///
/// # Safety
/// `model` must be a live handle, `options` readable and `out` writable.
/// Release the fit with [`wfvi_fit_free`].
#[no_mangle]
pub unsafe extern "C" fn wfvi_fit_run(
    model: *const WfviModel,
    options: *const WfviFitOptions,
    out: *mut *mut WfviFit,
) -> WfviStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let o = options.as_ref().ok_or_else(|| null("options"))?;
        let config = FitConfig {
            method: method_of(o.method)?,
            batch_size: o.batch_size,
            max_iter: o.max_iter,
            window: o.window,
            adadelta_decay: o.adadelta_decay,
            adadelta_eps: o.adadelta_eps,
            init_mu: o.init_mu,
            init_t: o.init_t,
            use_stopping_rule: o.use_stopping_rule,
            seed: o.seed,
        };
        let fit = optim::fit(model.inner.as_ref(), &config)?;
        write_out(out, Box::into_raw(Box::new(WfviFit { inner: fit })))
    })
}

/// Rebuilds a fit from the JSON produced by [`wfvi_fit_to_json`].
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wfvi_fit_from_json(json: *const c_char, out: *mut *mut WfviFit) -> WfviStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| Fail(WfviStatus::InvalidInput, "json is not UTF-8".into()))?;
        let fit = FitResult::from_json(text)?;
        write_out(out, Box::into_raw(Box::new(WfviFit { inner: fit })))
    })
}

/// # Safety
/// `fit` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn wfvi_fit_dim(fit: *const WfviFit) -> usize {
    fit.as_ref().map_or(0, |f| f.inner.dim)
}

/// Iterations run, stop reason (`WFVI_STOP_*`), rejected steps, method code
/// and the last lower-bound average. Any output pointer may be null.
///
/// # Safety
/// `fit` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn wfvi_fit_summary(
    fit: *const WfviFit,
    iterations: *mut usize,
    stop_reason: *mut u32,
    rejected_steps: *mut usize,
    method: *mut u32,
    lower_bound: *mut f64,
) -> WfviStatus {
    guard(|| {
        let f = &fit.as_ref().ok_or_else(|| null("fit"))?.inner;
        let stop = match f.stop_reason {
            StopReason::Plateau => WFVI_STOP_PLATEAU,
            StopReason::MaxIter => WFVI_STOP_MAX_ITER,
        };
        let lb = f.lower_bound_trace.last().copied().unwrap_or(f64::NAN);
        for (p, v) in [(iterations, f.iterations), (rejected_steps, f.rejected_steps)] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        for (p, v) in [(stop_reason, stop), (method, method_code(f.method))] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        if let Some(p) = lower_bound.as_mut() {
            *p = lb;
        }
        Ok(())
    })
}

/// Copies the variational mean into `buf`, which must hold `dim` values.
///
/// # Safety
/// `fit` must be a live handle and `buf` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn wfvi_fit_mean(fit: *const WfviFit, buf: *mut f64, len: usize) -> WfviStatus {
    guard(|| {
        let f = &fit.as_ref().ok_or_else(|| null("fit"))?.inner;
        out_slice(buf, len, f.dim)?.copy_from_slice(&f.mu);
        Ok(())
    })
}

/// Copies the dense covariance Σ = (TTᵀ)⁻¹, row-major, into `buf`, which
/// must hold `dim * dim` values.
///
/// # Safety
/// `fit` must be a live handle and `buf` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn wfvi_fit_covariance(fit: *const WfviFit, buf: *mut f64, len: usize) -> WfviStatus {
    guard(|| {
        let f = &fit.as_ref().ok_or_else(|| null("fit"))?.inner;
        let cov = f.factor()?.covariance_dense()?;
        let out = out_slice(buf, len, f.dim * f.dim)?;
        for (k, v) in out.iter_mut().enumerate() {
            *v = cov[(k / f.dim, k % f.dim)];
        }
        Ok(())
    })
}

/// Serializes the fit as JSON. Free the string with [`wfvi_string_free`].
///
/// # Safety
/// `fit` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wfvi_fit_to_json(fit: *const WfviFit, out: *mut *mut c_char) -> WfviStatus {
    guard(|| {
        let f = &fit.as_ref().ok_or_else(|| null("fit"))?.inner;
        let s = CString::new(f.to_json()).map_err(|_| Fail(WfviStatus::InvalidInput, "NUL in JSON".into()))?;
        write_out(out, s.into_raw())
    })
}

/// # Safety
/// `fit` must come from `wfvi_fit_run` or `wfvi_fit_from_json` and not be
/// used again. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn wfvi_fit_free(fit: *mut WfviFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// # Safety
/// `s` must come from this library and not be used again. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn wfvi_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Closed-form weighted Fisher divergence E_q ‖∇log q − ∇log p‖²_M between
/// q = N(μ, Σ) and p = N(ν, Λ⁻¹).
///
/// # Safety
/// `mu` and `nu` must point to `dim` doubles; `sigma`, `lambda` and `m` to
/// `dim * dim`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wfvi_weighted_fd_gaussians(
    dim: usize,
    mu: *const f64,
    sigma: *const f64,
    nu: *const f64,
    lambda: *const f64,
    m: *const f64,
    out: *mut f64,
) -> WfviStatus {
    guard(|| {
        let v = wfvi::analytics::weighted_fd_gaussians(
            slice(mu, dim, "mu")?,
            &square(sigma, dim, "sigma")?,
            slice(nu, dim, "nu")?,
            &square(lambda, dim, "lambda")?,
            &square(m, dim, "m")?,
        )?;
        write_out(out, v)
    })
}

/// M* = −log(MMD²_u + 10⁻⁵) between the rows of `x` and `y`, both
/// `n × dim`, under an RBF kernel of bandwidth `h`.
///
/// # Safety
/// `x` and `y` must point to `n * dim` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wfvi_mmd_mstar(
    n: usize,
    dim: usize,
    x: *const f64,
    y: *const f64,
    h: f64,
    out: *mut f64,
) -> WfviStatus {
    guard(|| {
        let x = DMatrix::from_row_slice(n, dim, slice(x, n * dim, "x")?);
        let y = DMatrix::from_row_slice(n, dim, slice(y, n * dim, "y")?);
        write_out(out, wfvi::diagnostics::mmd_mstar(&x, &y, h)?)
    })
}
