//! Closed-form results for Gaussian targets N(ν, Λ⁻¹): weighted Fisher
//! divergences between Gaussians, mean-field optima, gradient variances,
//! batch-approximation limits and the infinite-batch SDb recursion.

mod batch;
mod gradvar;
mod meanfield;
mod recursion;

pub use batch::{batch_limits, batch_meanfield_minimizers, batch_statistic_limits, batch_statistics_deviation, BatchMinimizers, BatchSummary, BatchDeviation};
pub use gradvar::{grad_variance_formulas, GradVariances};
pub use meanfield::{
    region_sweep, meanfield_kl, meanfield_sd_nqp, meanfield_weighted, solve_nqp, ordering_check, write_region_csv, RegionCase, RegionRow,
    KktCase, MeanFieldDivergence, MeanFieldSolution, OrderingReport,
};
pub use recursion::{natural_sdb_recursion, RecursionState, RecursionTrace};

use crate::error::{check_len, Error, Result};
use nalgebra::{DMatrix, DVector};

pub(crate) fn require_spd(m: &DMatrix<f64>, what: &str) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidInput(format!("{what} must be square")));
    }
    require_symmetric(m, what)?;
    m.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite(what.into()))
}

pub(crate) fn require_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (m[(i, j)], m[(j, i)]);
            if !a.is_finite() || (a - b).abs() > 1e-10 * (1.0 + a.abs().max(b.abs())) {
                return Err(Error::InvalidInput(format!("{what} is not symmetric")));
            }
        }
        if !m[(i, i)].is_finite() {
            return Err(Error::NonFinite(what.into()));
        }
    }
    Ok(())
}

/// S_M(q‖p) = E_q ‖∇log q − ∇log p‖²_M for q = N(μ, Σ), p = N(ν, Λ⁻¹):
/// tr(Σ⁻¹M) + tr(ΛMΛΣ) − 2 tr(MΛ) + (μ−ν)ᵀ ΛMΛ (μ−ν).
pub fn weighted_fd_gaussians(
    mu: &[f64],
    sigma: &DMatrix<f64>,
    nu: &[f64],
    lambda: &DMatrix<f64>,
    m: &DMatrix<f64>,
) -> Result<f64> {
    let d = mu.len();
    check_len(d, nu.len())?;
    for a in [sigma, lambda, m] {
        check_len(d, a.nrows())?;
        check_len(d, a.ncols())?;
    }
    let chol = require_spd(sigma, "variational covariance")?;
    require_spd(lambda, "target precision")?;
    require_symmetric(m, "weight matrix")?;
    let min_eig = crate::linalg::sym_eigenvalues(m).first().copied().unwrap_or(0.0);
    if min_eig < -1e-10 * (1.0 + m.amax()) {
        return Err(Error::InvalidInput("weight matrix is not positive semidefinite".into()));
    }
    let sigma_inv_m = chol.solve(m);
    let lml = lambda * m * lambda;
    let r = DVector::from_column_slice(mu) - DVector::from_column_slice(nu);
    let v = sigma_inv_m.trace() + (&lml * sigma).trace() - 2.0 * (m * lambda).trace() + r.dot(&(&lml * &r));
    Ok(v)
}
