use super::TargetModel;
use crate::error::{check_finite, check_len, Error, Result};
use crate::linalg::{dvec, SparsityPattern, SymPatternMatrix};
use crate::special::{sigmoid, softplus};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// Bayesian logistic regression with a N(0, σ₀² I) prior.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    x: DMatrix<f64>,
    y: DVector<f64>,
    sigma0_sq: f64,
    pattern: Arc<SparsityPattern>,
}

impl LogisticModel {
    pub fn new(x: DMatrix<f64>, y: Vec<f64>, sigma0_sq: f64) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::InvalidInput("logistic model needs n >= 1".into()));
        }
        check_len(x.nrows(), y.len())?;
        if y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidInput("responses must be 0 or 1".into()));
        }
        if !(sigma0_sq > 0.0) {
            return Err(Error::InvalidInput("prior variance must be positive".into()));
        }
        let d = x.ncols();
        Ok(LogisticModel {
            x,
            y: DVector::from_vec(y),
            sigma0_sq,
            pattern: Arc::new(SparsityPattern::dense(d)?),
        })
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.x
    }
    pub fn response(&self) -> &DVector<f64> {
        &self.y
    }
    pub fn sigma0_sq(&self) -> f64 {
        self.sigma0_sq
    }

    fn eta(&self, theta: &[f64]) -> Result<DVector<f64>> {
        check_len(self.dim(), theta.len())?;
        Ok(&self.x * dvec(theta))
    }
}

impl TargetModel for LogisticModel {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn pattern(&self) -> Arc<SparsityPattern> {
        self.pattern.clone()
    }

    fn log_h(&self, theta: &[f64]) -> Result<f64> {
        let eta = self.eta(theta)?;
        let lik: f64 = eta.iter().zip(self.y.iter()).map(|(e, y)| y * e - softplus(*e)).sum();
        check_finite(lik, "logistic log-likelihood")?;
        let d = self.dim() as f64;
        let ss: f64 = theta.iter().map(|v| v * v).sum();
        Ok(lik - 0.5 * d * (2.0 * std::f64::consts::PI * self.sigma0_sq).ln() - ss / (2.0 * self.sigma0_sq))
    }

    fn grad_log_h(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let eta = self.eta(theta)?;
        let resid = DVector::from_iterator(eta.len(), eta.iter().zip(self.y.iter()).map(|(e, y)| y - sigmoid(*e)));
        let g = self.x.tr_mul(&resid) - dvec(theta) / self.sigma0_sq;
        Ok(g.data.into())
    }

    fn hess_log_h(&self, theta: &[f64]) -> Result<SymPatternMatrix> {
        let eta = self.eta(theta)?;
        let mut xw = self.x.clone();
        for (i, e) in eta.iter().enumerate() {
            let w = sigmoid(*e);
            let s = (w * (1.0 - w)).sqrt();
            xw.row_mut(i).scale_mut(s);
        }
        let mut h = -xw.tr_mul(&xw);
        for i in 0..self.dim() {
            h[(i, i)] -= 1.0 / self.sigma0_sq;
        }
        SymPatternMatrix::from_dense(self.pattern.clone(), &h)
    }

    fn hess_vec(&self, theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let eta = self.eta(theta)?;
        let mut xv = &self.x * dvec(v);
        for (o, e) in xv.iter_mut().zip(eta.iter()) {
            let w = sigmoid(*e);
            *o *= w * (1.0 - w);
        }
        let out = -self.x.tr_mul(&xv) - dvec(v) / self.sigma0_sq;
        Ok(out.data.into())
    }
}
