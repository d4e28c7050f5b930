use super::alg2::BatchStats;
use crate::analytics::require_spd;
use crate::error::{check_len, Error, Result};
use crate::linalg::{sym_eigenvalues, sym_matrix_function, symmetrize};
use crate::targets::{GaussianTarget, TargetModel};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Updates whose covariance condition number exceeds this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Draws B points from N(μ, Σ) and evaluates the scores.
pub(crate) fn sample_dense(mu: &[f64], sigma: &DMatrix<f64>, model: &dyn TargetModel, b: usize, rng: &mut impl Rng) -> Result<BatchStats> {
    let d = mu.len();
    check_len(d, model.dim())?;
    let l = require_spd(sigma, "variational covariance")?.l();
    let mv = DVector::from_column_slice(mu);
    let thetas: Vec<Vec<f64>> = (0..b)
        .map(|_| {
            let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            (&mv + &l * z).as_slice().to_vec()
        })
        .collect();
    let grads: Vec<Vec<f64>> = thetas.par_iter().map(|th| model.grad_log_h(th)).collect::<Result<_>>()?;
    BatchStats::new(thetas, grads)
}

/// Closed-form minimizer of Ŝ(μ', Σ') + (2/ρ) KL(N(μ, Σ) ‖ N(μ', Σ')) for
/// a fixed batch:
///   U = ρ C_g + ρ/(1+ρ) ḡḡᵀ,  V = Σ + ρ C_θ + ρ/(1+ρ)(μ − θ̄)(μ − θ̄)ᵀ,
///   Σ' = 2V [I + (I + 4UV)^{1/2}]⁻¹,  μ' = (μ + ρ(Σ'ḡ + θ̄)) / (1+ρ).
/// Σ' is evaluated in the symmetric form 2L f(LᵀUL) Lᵀ with V = LLᵀ and
/// f(x) = 1/(1 + √(1+4x)).
pub fn bam_update(mu: &[f64], sigma: &DMatrix<f64>, stats: &BatchStats, rho: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let d = mu.len();
    check_len(d, stats.dim())?;
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::InvalidInput(format!("BaM learning rate must be positive, got {rho}")));
    }
    let g_bar = DVector::from_column_slice(&stats.g_bar);
    let theta_bar = DVector::from_column_slice(&stats.theta_bar);
    let mv = DVector::from_column_slice(mu);
    let shrink = rho / (1.0 + rho);
    let mut u = stats.c_g() * rho + &g_bar * g_bar.transpose() * shrink;
    symmetrize(&mut u);
    let a = &mv - &theta_bar;
    let mut v = sigma + stats.c_theta() * rho + &a * a.transpose() * shrink;
    symmetrize(&mut v);
    let l = require_spd(&v, "BaM V")?.l();
    let mut inner = l.transpose() * &u * &l;
    symmetrize(&mut inner);
    let mut sigma_new = 2.0 * &l * sym_matrix_function(&inner, |x| 1.0 / (1.0 + (1.0 + 4.0 * x.max(0.0)).sqrt())) * l.transpose();
    symmetrize(&mut sigma_new);
    let ev = sym_eigenvalues(&sigma_new);
    let (lo, hi) = (ev[0], ev[d - 1]);
    if !(lo > 0.0) || hi / lo > MAX_CONDITION || !hi.is_finite() {
        return Err(Error::IllConditioned(format!("BaM covariance eigenvalues in [{lo:e}, {hi:e}]")));
    }
    let mu_new = (mv + rho * (&sigma_new * g_bar + theta_bar)) / (1.0 + rho);
    Ok((mu_new.as_slice().to_vec(), sigma_new))
}

/// One batch-and-match iteration at step `t` ≥ 1 with ρ_t = Bd/t.
pub fn bam_step(
    mu: &[f64],
    sigma: &DMatrix<f64>,
    model: &dyn TargetModel,
    b: usize,
    t: usize,
    rng: &mut impl Rng,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if b < 2 || t == 0 {
        return Err(Error::InvalidInput(format!("BaM needs B ≥ 2 and t ≥ 1, got B = {b}, t = {t}")));
    }
    let stats = sample_dense(mu, sigma, model, b, rng)?;
    let rho = (b * mu.len()) as f64 / t as f64;
    bam_update(mu, sigma, &stats, rho)
}

/// Natural-gradient SDb update from batch summaries:
///   Σ⁻¹' = Σ⁻¹ + 2ρ(V − Σ⁻¹UΣ⁻¹),  μ' = μ − ρΣ'{2Σ⁻¹(μ − θ̄) − 2ḡ}.
fn natural_update(
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    theta_bar: &DVector<f64>,
    g_bar: &DVector<f64>,
    rho: f64,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let prec = require_spd(sigma, "variational covariance")?.inverse();
    let mut prec_new = &prec + 2.0 * rho * (v - &prec * u * &prec);
    symmetrize(&mut prec_new);
    let sigma_new = require_spd(&prec_new, "updated precision")?.inverse();
    let grad = 2.0 * &prec * (mu - theta_bar) - 2.0 * g_bar;
    let mu_new = mu - rho * &sigma_new * grad;
    Ok((mu_new.as_slice().to_vec(), sigma_new))
}

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..0.25).contains(&rho) {
        return Err(Error::InvalidInput(format!("natural SDb step needs 0 ≤ ρ < 1/4, got {rho}")));
    }
    Ok(())
}

/// Natural-gradient SDb step for a Gaussian target in the infinite-batch
/// limit, where θ̄ = μ, C_θ = Σ, ḡ = Λ(ν − μ) and C_g = ΛΣΛ.
pub fn sdb_natural_step(mu: &[f64], sigma: &DMatrix<f64>, target: &GaussianTarget, rho: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    check_rho(rho)?;
    check_len(target.dim(), mu.len())?;
    let lambda = target.lambda();
    let mv = DVector::from_column_slice(mu);
    let g_bar = lambda * (target.nu() - &mv);
    let v = lambda * sigma * lambda + &g_bar * g_bar.transpose();
    natural_update(&mv, sigma, sigma, &v, &mv, &g_bar, rho)
}

/// The same update with a finite batch of B draws from N(μ, Σ).
pub fn sdb_natural_step_batch(
    mu: &[f64],
    sigma: &DMatrix<f64>,
    model: &dyn TargetModel,
    rho: f64,
    b: usize,
    rng: &mut impl Rng,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    check_rho(rho)?;
    let stats = sample_dense(mu, sigma, model, b, rng)?;
    natural_update(
        &DVector::from_column_slice(mu),
        sigma,
        &stats.u(mu),
        &stats.v(),
        &DVector::from_column_slice(&stats.theta_bar),
        &DVector::from_column_slice(&stats.g_bar),
        rho,
    )
}
