use crate::error::{check_len, Error, Result};
use serde::Serialize;

/// Per-coordinate variances of single-draw stochastic gradients with
/// respect to μ_i and T_ii, for diagonal Λ and T.
#[derive(Debug, Clone, Serialize)]
pub struct GradVariances {
    pub kl_mu: Vec<f64>,
    pub fisher_mu: Vec<f64>,
    pub score_mu: Vec<f64>,
    pub kl_t: Vec<f64>,
    pub fisher_t: Vec<f64>,
    pub score_t: Vec<f64>,
}

pub fn grad_variance_formulas(lambda_diag: &[f64], t_diag: &[f64], mu: &[f64], nu: &[f64]) -> Result<GradVariances> {
    let d = lambda_diag.len();
    check_len(d, t_diag.len())?;
    check_len(d, mu.len())?;
    check_len(d, nu.len())?;
    if lambda_diag.iter().chain(t_diag).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidInput("Λ and T diagonals must be positive".into()));
    }
    let mut out = GradVariances {
        kl_mu: Vec::with_capacity(d),
        fisher_mu: Vec::with_capacity(d),
        score_mu: Vec::with_capacity(d),
        kl_t: Vec::with_capacity(d),
        fisher_t: Vec::with_capacity(d),
        score_t: Vec::with_capacity(d),
    };
    for i in 0..d {
        let (l, t) = (lambda_diag[i], t_diag[i]);
        let r2 = (mu[i] - nu[i]).powi(2);
        let t2 = t * t;
        let k = t - l / t;
        let kl_mu = k * k;
        let kl_t = (l * l * r2 + 2.0 * k * k) / (t2 * t2);
        out.kl_mu.push(kl_mu);
        out.fisher_mu.push(4.0 * l * l * kl_mu);
        out.score_mu.push(4.0 * l * l / (t2 * t2) * kl_mu);
        out.kl_t.push(kl_t);
        out.fisher_t.push(4.0 * (t2 + l).powi(2) * kl_t);
        out.score_t
            .push(4.0 * l * l / t2.powi(4) * ((3.0 * l - t2).powi(2) * r2 + 8.0 * k * k));
    }
    Ok(out)
}
