use super::adadelta::Adadelta;
use crate::error::{check_len, Error, Result};
use crate::linalg::{CholFactor, SparsityPattern};
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;
use std::sync::Arc;

/// Variational parameters λ = (μ, vech(T*)) and their Adadelta accumulators,
/// laid out as μ first, then the pattern slots of T*.
#[derive(Debug, Clone)]
pub struct VariationalState {
    pub mu: Vec<f64>,
    pub factor: CholFactor,
    pub adadelta: Adadelta,
    pub iter: usize,
}

impl VariationalState {
    pub fn new(mu: Vec<f64>, factor: CholFactor, decay: f64, eps: f64) -> Result<Self> {
        check_len(factor.dim(), mu.len())?;
        let n = mu.len() + factor.pattern().nnz();
        Ok(VariationalState {
            mu,
            factor,
            adadelta: Adadelta::new(n, decay, eps),
            iter: 0,
        })
    }

    /// μ = `mu0`·1 and T = `t_diag`·I on `pattern`.
    pub fn init(pattern: Arc<SparsityPattern>, mu0: f64, t_diag: f64, decay: f64, eps: f64) -> Result<Self> {
        if !(t_diag > 0.0) {
            return Err(Error::InvalidInput(format!("initial T diagonal must be positive, got {t_diag}")));
        }
        let d = pattern.dim();
        Self::new(vec![mu0; d], CholFactor::scaled_identity(pattern, t_diag), decay, eps)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// z ~ N(0, I) and θ = μ + T^{-⊤}z; also returns u = T^{-⊤}z.
    pub fn draw(&self, rng: &mut impl Rng) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let z: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        let (u, theta) = self.transform(&z)?;
        Ok((z, u, theta))
    }

    /// (u, θ) = (T^{-⊤}z, μ + u).
    pub fn transform(&self, z: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let u = self.factor.solve_upper_transpose(z)?;
        let theta = self.mu.iter().zip(&u).map(|(m, v)| m + v).collect();
        Ok((u, theta))
    }

    /// log q(θ) for θ = μ + T^{-⊤}z, using Tᵀ(θ − μ) = z.
    pub fn log_q_at(&self, z: &[f64]) -> f64 {
        let d = self.dim() as f64;
        -0.5 * d * (2.0 * PI).ln() + self.factor.log_det() - 0.5 * z.iter().map(|v| v * v).sum::<f64>()
    }

    /// Applies an Adadelta step for descent gradients (μ part, T* part).
    /// The state is only changed when the new parameters are finite.
    pub(crate) fn apply(&mut self, grad_mu: &[f64], grad_star: &[f64]) -> Result<()> {
        let d = self.dim();
        let mut grad = Vec::with_capacity(d + grad_star.len());
        grad.extend_from_slice(grad_mu);
        grad.extend_from_slice(grad_star);
        if let Some(i) = grad.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient entry {i}")));
        }
        let mut acc = self.adadelta.clone();
        let step = acc.step(&grad)?;
        let mu: Vec<f64> = self.mu.iter().zip(&step[..d]).map(|(m, s)| m + s).collect();
        let star: Vec<f64> = self.factor.star().iter().zip(&step[d..]).map(|(t, s)| t + s).collect();
        if mu.iter().chain(&star).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("updated parameters".into()));
        }
        let mut factor = self.factor.clone();
        factor.set_star(&star)?;
        self.mu = mu;
        self.factor = factor;
        self.adadelta = acc;
        self.iter += 1;
        Ok(())
    }
}
