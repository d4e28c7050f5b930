use super::require_spd;
use crate::error::{check_len, Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

/// Batch summary statistics with 1/B normalization: sample mean θ̄ and
/// covariance C_θ, mean gradient ḡ and covariance C_g, and the
/// cross-covariance C_θg = (1/B) Σ (θ_i − θ̄)(g_i − ḡ)ᵀ.
#[derive(Debug, Clone)]
pub struct BatchSummary {
    pub theta_bar: DVector<f64>,
    pub c_theta: DMatrix<f64>,
    pub g_bar: DVector<f64>,
    pub c_g: DMatrix<f64>,
    pub c_theta_g: DMatrix<f64>,
}

impl BatchSummary {
    /// `thetas` and `grads` hold B rows of length `dim`, row after row.
    pub fn from_flat(dim: usize, thetas: &[f64], grads: &[f64]) -> Result<Self> {
        if dim == 0 || thetas.is_empty() || thetas.len() % dim != 0 {
            return Err(Error::InvalidInput("samples must be a non-empty multiple of the dimension".into()));
        }
        check_len(thetas.len(), grads.len())?;
        let b = thetas.len() / dim;
        let bf = b as f64;
        let mut theta_bar = DVector::zeros(dim);
        let mut g_bar = DVector::zeros(dim);
        for i in 0..b {
            for k in 0..dim {
                theta_bar[k] += thetas[i * dim + k];
                g_bar[k] += grads[i * dim + k];
            }
        }
        theta_bar /= bf;
        g_bar /= bf;
        let mut c_theta = DMatrix::zeros(dim, dim);
        let mut c_g = DMatrix::zeros(dim, dim);
        let mut c_theta_g = DMatrix::zeros(dim, dim);
        let mut a = vec![0.0; dim];
        let mut e = vec![0.0; dim];
        for i in 0..b {
            for k in 0..dim {
                a[k] = thetas[i * dim + k] - theta_bar[k];
                e[k] = grads[i * dim + k] - g_bar[k];
            }
            for c in 0..dim {
                for r in 0..dim {
                    c_theta[(r, c)] += a[r] * a[c];
                    c_g[(r, c)] += e[r] * e[c];
                    c_theta_g[(r, c)] += a[r] * e[c];
                }
            }
        }
        Ok(BatchSummary {
            theta_bar,
            c_theta: c_theta / bf,
            g_bar,
            c_g: c_g / bf,
            c_theta_g: c_theta_g / bf,
        })
    }
}

/// Minimizers of the batch-approximated SD and FD over diagonal Gaussians.
/// The FD parts are `None` when some diagonal of C_θg is non-negative, in
/// which case the FD objective decreases without bound in that variance.
#[derive(Debug, Clone, Serialize)]
pub struct BatchMinimizers {
    pub mu_score: Vec<f64>,
    pub sigma_score: Vec<f64>,
    pub mu_fisher: Option<Vec<f64>>,
    pub sigma_fisher: Option<Vec<f64>>,
}

impl BatchMinimizers {
    /// Σ^Ŝ_ii ≤ Σ^F̂_ii for every i, with relative margin `tol`.
    pub fn score_below_fisher(&self, tol: f64) -> bool {
        match &self.sigma_fisher {
            Some(f) => self.sigma_score.iter().zip(f).all(|(s, f)| *s <= f * (1.0 + tol)),
            None => false,
        }
    }
}

/// Σ^Ŝ_ii = √(C_θ,ii / C_g,ii), μ^Ŝ_i = θ̄_i + ḡ_i Σ^Ŝ_ii, and
/// Σ^F̂_ii = −C_θ,ii / C_θg,ii, μ^F̂_i = θ̄_i + ḡ_i Σ^F̂_ii.
pub fn batch_meanfield_minimizers(s: &BatchSummary) -> Result<BatchMinimizers> {
    let d = s.theta_bar.len();
    let mut sigma_score = Vec::with_capacity(d);
    let mut mu_score = Vec::with_capacity(d);
    for i in 0..d {
        let (ct, cg) = (s.c_theta[(i, i)], s.c_g[(i, i)]);
        if !(ct > 0.0 && cg > 0.0) {
            return Err(Error::InvalidInput("batch variances must be positive (need B > 1)".into()));
        }
        let v = (ct / cg).sqrt();
        sigma_score.push(v);
        mu_score.push(s.theta_bar[i] + s.g_bar[i] * v);
    }
    let fisher_ok = (0..d).all(|i| s.c_theta_g[(i, i)] < 0.0);
    let (mu_fisher, sigma_fisher) = if fisher_ok {
        let sig: Vec<f64> = (0..d).map(|i| -s.c_theta[(i, i)] / s.c_theta_g[(i, i)]).collect();
        let mu = (0..d).map(|i| s.theta_bar[i] + s.g_bar[i] * sig[i]).collect();
        (Some(mu), Some(sig))
    } else {
        (None, None)
    };
    Ok(BatchMinimizers {
        mu_score,
        sigma_score,
        mu_fisher,
        sigma_fisher,
    })
}

/// Almost-sure limits of the batch statistics for θ_i ~ N(μ̂, Σ̂) and a
/// N(ν, Λ⁻¹) target: θ̄ → μ̂, C_θ → Σ̂, ḡ → Λ(ν − μ̂), C_g → ΛΣ̂Λ,
/// C_θg → −Σ̂Λ.
pub fn batch_statistic_limits(lambda: &DMatrix<f64>, nu: &[f64], mu_hat: &[f64], sigma_hat: &DMatrix<f64>) -> Result<BatchSummary> {
    let d = nu.len();
    check_len(d, mu_hat.len())?;
    check_len(d, lambda.nrows())?;
    check_len(d, sigma_hat.nrows())?;
    require_spd(lambda, "target precision")?;
    require_spd(sigma_hat, "sampling covariance")?;
    let mu = DVector::from_column_slice(mu_hat);
    Ok(BatchSummary {
        theta_bar: mu.clone(),
        c_theta: sigma_hat.clone(),
        g_bar: lambda * (DVector::from_column_slice(nu) - mu),
        c_g: lambda * sigma_hat * lambda,
        c_theta_g: -(sigma_hat * lambda),
    })
}

/// Limits of the batch mean-field minimizers for a diagonal sampling
/// covariance Σ̂:
/// Σ^Ŝ_ii = √(Σ̂_ii / Σ_j Σ̂_jj Λ_ij²), μ^Ŝ_i = μ̂_i + Σ^Ŝ_ii Σ_j Λ_ij (ν_j − μ̂_j),
/// Σ^F̂_ii = 1/Λ_ii, μ^F̂_i = μ̂_i + Σ_j Λ_ij (ν_j − μ̂_j) / Λ_ii.
pub fn batch_limits(lambda: &DMatrix<f64>, nu: &[f64], mu_hat: &[f64], sigma_hat_diag: &[f64]) -> Result<BatchMinimizers> {
    let d = nu.len();
    check_len(d, mu_hat.len())?;
    check_len(d, sigma_hat_diag.len())?;
    check_len(d, lambda.nrows())?;
    require_spd(lambda, "target precision")?;
    if sigma_hat_diag.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidInput("sampling variances must be positive".into()));
    }
    let mut out = BatchMinimizers {
        mu_score: Vec::with_capacity(d),
        sigma_score: Vec::with_capacity(d),
        mu_fisher: Some(Vec::with_capacity(d)),
        sigma_fisher: Some(Vec::with_capacity(d)),
    };
    for i in 0..d {
        let denom: f64 = (0..d).map(|j| sigma_hat_diag[j] * lambda[(i, j)].powi(2)).sum();
        let pull: f64 = (0..d).map(|j| lambda[(i, j)] * (nu[j] - mu_hat[j])).sum();
        let s = (sigma_hat_diag[i] / denom).sqrt();
        let lii = lambda[(i, i)];
        out.sigma_score.push(s);
        out.mu_score.push(mu_hat[i] + s * pull);
        out.sigma_fisher.as_mut().unwrap().push(1.0 / lii);
        out.mu_fisher.as_mut().unwrap().push(mu_hat[i] + pull / lii);
    }
    Ok(out)
}

/// Largest absolute deviation of each batch statistic from its limit.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BatchDeviation {
    pub theta_bar: f64,
    pub c_theta: f64,
    pub g_bar: f64,
    pub c_g: f64,
    pub c_theta_g: f64,
}

impl BatchDeviation {
    pub fn max(&self) -> f64 {
        [self.theta_bar, self.c_theta, self.g_bar, self.c_g, self.c_theta_g]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Draws B samples from N(μ̂, Σ̂), forms the batch statistics for the
/// Gaussian target and reports their deviations from the limits.
pub fn batch_statistics_deviation(
    lambda: &DMatrix<f64>,
    nu: &[f64],
    mu_hat: &[f64],
    sigma_hat: &DMatrix<f64>,
    b: usize,
    rng: &mut impl Rng,
) -> Result<(BatchSummary, BatchDeviation)> {
    let limits = batch_statistic_limits(lambda, nu, mu_hat, sigma_hat)?;
    if b < 2 {
        return Err(Error::InvalidInput("batch size must be at least 2".into()));
    }
    let d = nu.len();
    let l = sigma_hat.clone().cholesky().expect("checked above").l();
    let mut thetas = vec![0.0; b * d];
    let mut grads = vec![0.0; b * d];
    let nu_v = DVector::from_column_slice(nu);
    let mu_v = DVector::from_column_slice(mu_hat);
    for i in 0..b {
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let theta = &mu_v + &l * z;
        let g = lambda * (&nu_v - &theta);
        thetas[i * d..(i + 1) * d].copy_from_slice(theta.as_slice());
        grads[i * d..(i + 1) * d].copy_from_slice(g.as_slice());
    }
    let s = BatchSummary::from_flat(d, &thetas, &grads)?;
    let dev = BatchDeviation {
        theta_bar: (&s.theta_bar - &limits.theta_bar).amax(),
        c_theta: (&s.c_theta - &limits.c_theta).amax(),
        g_bar: (&s.g_bar - &limits.g_bar).amax(),
        c_g: (&s.c_g - &limits.c_g).amax(),
        c_theta_g: (&s.c_theta_g - &limits.c_theta_g).amax(),
    };
    Ok((s, dev))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn two_point_hand_computation() {
        // N(0,1) target, θ ∈ {0, 2}: g = −θ
        let s = BatchSummary::from_flat(1, &[0.0, 2.0], &[0.0, -2.0]).unwrap();
        assert_eq!(s.theta_bar[0], 1.0);
        assert_eq!(s.c_theta[(0, 0)], 1.0);
        assert_eq!(s.g_bar[0], -1.0);
        assert_eq!(s.c_g[(0, 0)], 1.0);
        assert_eq!(s.c_theta_g[(0, 0)], -1.0);
        let m = batch_meanfield_minimizers(&s).unwrap();
        assert_eq!(m.sigma_score, vec![1.0]);
        assert_eq!(m.mu_score, vec![0.0]);
        assert_eq!(m.sigma_fisher, Some(vec![1.0]));
    }

    #[test]
    fn cross_covariance_identity_holds_at_any_batch_size() {
        let lambda = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let sigma = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 2.0]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (s, _) = batch_statistics_deviation(&lambda, &[1.0, 0.0], &[0.0, 0.5], &sigma, 7, &mut rng).unwrap();
        let expect = -(&s.c_theta * &lambda);
        assert!((s.c_theta_g - expect).amax() < 1e-12);
    }

    #[test]
    fn limits_by_hand() {
        let lambda = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let l = batch_limits(&lambda, &[0.0; 2], &[0.0; 2], &[1.0, 1.0]).unwrap();
        assert!((l.sigma_score[0] - 1.25f64.sqrt().recip()).abs() < 1e-15);
        assert_eq!(l.sigma_fisher.as_ref().unwrap(), &vec![1.0, 1.0]);
        assert!(l.score_below_fisher(1e-12));
        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        let l = batch_limits(&diag, &[1.0, -1.0], &[5.0, 7.0], &[0.3, 0.9]).unwrap();
        let mf = l.mu_fisher.unwrap();
        assert!((mf[0] - 1.0).abs() < 1e-15 && (mf[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn positive_cross_covariance_has_no_fisher_minimizer() {
        let s = BatchSummary::from_flat(1, &[0.0, 2.0], &[0.0, 2.0]).unwrap();
        assert!(batch_meanfield_minimizers(&s).unwrap().sigma_fisher.is_none());
    }
}
