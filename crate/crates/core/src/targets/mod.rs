//! Posterior targets h(θ) = p(y|θ)p(θ) with gradients and sparse Hessians.
//!
//! Every model keeps its additive normalizing constants in `log_h` so that
//! lower-bound traces are on the scale of log p(y). The constants never
//! affect gradients.

mod gaussian;
mod glmm;
mod logistic;
mod student_t;
mod sv;

pub use gaussian::GaussianTarget;
pub use glmm::{GlmmFamily, GlmmModel, GlmmSubject};
pub use logistic::LogisticModel;
pub use student_t::StudentTTarget;
pub use sv::SvModel;

use crate::error::Result;
use crate::linalg::{SparsityPattern, SymPatternMatrix};
use std::sync::Arc;

pub trait TargetModel: Send + Sync {
    fn dim(&self) -> usize;

    /// Pattern shared by the Hessian and the variational factor.
    fn pattern(&self) -> Arc<SparsityPattern>;

    fn log_h(&self, theta: &[f64]) -> Result<f64>;

    fn grad_log_h(&self, theta: &[f64]) -> Result<Vec<f64>>;

    fn hess_log_h(&self, theta: &[f64]) -> Result<SymPatternMatrix>;

    /// ∇²log h(θ) · v.
    fn hess_vec(&self, theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        Ok(self.hess_log_h(theta)?.matvec(v))
    }
}

#[cfg(test)]
pub(crate) mod fd {
    //! Central-difference oracles shared by the model tests.
    use super::TargetModel;

    pub fn step(x: f64) -> f64 {
        1e-5 * (1.0 + x.abs())
    }

    pub fn check_gradient(model: &dyn TargetModel, theta: &[f64], rtol: f64) {
        let g = model.grad_log_h(theta).unwrap();
        let mut t = theta.to_vec();
        for i in 0..theta.len() {
            let h = step(theta[i]);
            t[i] = theta[i] + h;
            let up = model.log_h(&t).unwrap();
            t[i] = theta[i] - h;
            let down = model.log_h(&t).unwrap();
            t[i] = theta[i];
            let fd = (up - down) / (2.0 * h);
            assert!(
                (fd - g[i]).abs() <= rtol * (1.0 + g[i].abs()),
                "grad[{i}]: analytic {} vs fd {fd}",
                g[i]
            );
        }
    }

    pub fn check_hessian(model: &dyn TargetModel, theta: &[f64], tol: f64) {
        let hmat = model.hess_log_h(theta).unwrap().to_dense();
        let d = theta.len();
        let mut t = theta.to_vec();
        for j in 0..d {
            let h = step(theta[j]);
            t[j] = theta[j] + h;
            let up = model.grad_log_h(&t).unwrap();
            t[j] = theta[j] - h;
            let down = model.grad_log_h(&t).unwrap();
            t[j] = theta[j];
            for i in 0..d {
                let fd = (up[i] - down[i]) / (2.0 * h);
                assert!(
                    (fd - hmat[(i, j)]).abs() <= tol * (1.0 + fd.abs()),
                    "hess[{i},{j}]: analytic {} vs fd {fd}",
                    hmat[(i, j)]
                );
            }
        }
        let v: Vec<f64> = (0..d).map(|i| (i as f64 * 0.37).sin()).collect();
        let hv = model.hess_vec(theta, &v).unwrap();
        let dense = &hmat * crate::linalg::dvec(&v);
        for i in 0..d {
            assert!((hv[i] - dense[i]).abs() <= 1e-9 * (1.0 + dense[i].abs()));
        }
    }
}
