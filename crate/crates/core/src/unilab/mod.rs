//! Gaussian approximations N(μ, σ²) to univariate non-Gaussian targets
//! under KLD, FD and SD, with quadrature objectives and accuracy metrics.

mod fit;
mod objective;
mod target;

pub use fit::{accuracy, uni_fit, UniFit, UniMetrics, ESCAPE_RATIO, SIGMA_SQ_FLOOR};
pub use objective::{loggamma_closed_forms, loggamma_fd_closed_form, uni_objective, LogGammaClosedForms, UniDivergence};
pub use target::{Moments, UniTarget};

use crate::error::{check_len, Result};
use crate::targets::{StudentTTarget, TargetModel};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::io::Write;

/// |∂/∂μ| of the KLD, FD and SD objectives at μ = 0 for a univariate t_ν
/// target and q = N(0, σ²).
pub fn stationarity_check_t(nu: f64, sigma_sq: f64) -> Result<[f64; 3]> {
    let t = UniTarget::student_t(nu)?;
    stationarity_at(&t, 0.0, sigma_sq)
}

/// |∂/∂μ| of each objective at the given (μ, σ²).
pub fn stationarity_at(target: &UniTarget, mu: f64, sigma_sq: f64) -> Result<[f64; 3]> {
    let mut out = [0.0; 3];
    for (k, div) in UniDivergence::ALL.into_iter().enumerate() {
        out[k] = objective::objective_and_grad(target, div, mu, sigma_sq.sqrt())?[1].abs();
    }
    Ok(out)
}

/// Monte-Carlo ∇_μ of the KLD, FD and SD objectives for q = N(m, Σ) and a
/// multivariate t_ν(m, S) target, using `pairs` antithetic draws (z, −z).
/// Returns the Euclidean norms.
pub fn stationarity_check_t_multivariate(
    nu: f64,
    m: &[f64],
    s: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    pairs: usize,
    rng: &mut impl Rng,
) -> Result<[f64; 3]> {
    let d = m.len();
    check_len(d, sigma.nrows())?;
    let target = StudentTTarget::new(nu, m.to_vec(), s.clone())?;
    let chol = super::analytics::require_spd(sigma, "variational covariance")?;
    let c = chol.l();
    let sigma_inv = chol.inverse();
    let mv = DVector::from_column_slice(m);
    let mut acc = [DVector::zeros(d), DVector::zeros(d), DVector::zeros(d)];
    for _ in 0..pairs {
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        for sign in [1.0, -1.0] {
            let dev = &c * &z * sign;
            let theta = &mv + &dev;
            let grad = DVector::from_vec(target.grad_log_h(theta.as_slice())?);
            let hess = target.hess_log_h(theta.as_slice())?.to_dense();
            let g = &grad + &sigma_inv * &dev;
            acc[0] -= &grad;
            acc[1] += 2.0 * &hess * &g;
            acc[2] += 2.0 * &hess * (sigma * &g);
        }
    }
    let n = 2.0 * pairs.max(1) as f64;
    Ok([acc[0].norm() / n, acc[1].norm() / n, acc[2].norm() / n])
}

/// Fits every divergence to every target (in parallel).
pub fn uni_table(targets: &[UniTarget]) -> Result<Vec<UniFit>> {
    let cells: Vec<(UniTarget, UniDivergence)> = targets
        .iter()
        .flat_map(|t| UniDivergence::ALL.into_iter().map(move |d| (*t, d)))
        .collect();
    cells.par_iter().map(|(t, d)| uni_fit(t, *d)).collect()
}

fn describe(t: &UniTarget) -> (&'static str, String) {
    match *t {
        UniTarget::StudentT { nu } => ("student_t", format!("nu={nu}")),
        UniTarget::LogInvGamma { a1, b1 } => ("log_inv_gamma", format!("a1={a1};b1={b1}")),
        UniTarget::SkewNormal { m, t, lambda } => ("skew_normal", format!("m={m};t={t};lambda={lambda}")),
    }
}

/// CSV with columns target,params,divergence,metric,value. Accuracy is
/// written on the percent scale.
pub fn write_uni_csv(fits: &[UniFit], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "target,params,divergence,metric,value")?;
    for f in fits {
        let (kind, params) = describe(&f.target);
        let m = &f.metrics;
        let rows = [
            ("mu", f.mu),
            ("sigma_sq", f.sigma_sq),
            ("mean_error", m.mean_error),
            ("mode_error", m.mode_error),
            ("variance_ratio", m.variance_ratio),
            ("accuracy_pct", 100.0 * m.accuracy),
        ];
        for (name, v) in rows {
            writeln!(out, "{kind},{params},{},{name},{v:.6}", f.divergence.label())?;
        }
    }
    Ok(())
}
