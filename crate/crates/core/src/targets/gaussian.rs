use super::TargetModel;
use crate::error::{check_len, Error, Result};
use crate::linalg::{dvec, SparsityPattern, SymPatternMatrix};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// N(ν, Λ⁻¹) target.
#[derive(Debug, Clone)]
pub struct GaussianTarget {
    nu: DVector<f64>,
    lambda: DMatrix<f64>,
    log_norm: f64,
    pattern: Arc<SparsityPattern>,
}

impl GaussianTarget {
    pub fn new(nu: Vec<f64>, lambda: DMatrix<f64>) -> Result<Self> {
        let d = nu.len();
        Self::with_pattern(nu, lambda, Arc::new(SparsityPattern::dense(d)?))
    }

    /// Uses `pattern` for the Hessian and the variational factor; Λ must be
    /// zero outside it.
    pub fn with_pattern(nu: Vec<f64>, lambda: DMatrix<f64>, pattern: Arc<SparsityPattern>) -> Result<Self> {
        let d = nu.len();
        check_len(d, lambda.nrows())?;
        check_len(d, lambda.ncols())?;
        check_len(d, pattern.dim())?;
        for i in 0..d {
            for j in 0..i {
                if (lambda[(i, j)] - lambda[(j, i)]).abs() > 1e-12 * (1.0 + lambda[(i, j)].abs()) {
                    return Err(Error::InvalidInput("precision is not symmetric".into()));
                }
            }
        }
        let chol = lambda
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("target precision".into()))?;
        SymPatternMatrix::from_dense(pattern.clone(), &lambda)?;
        let half_logdet: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum();
        let log_norm = half_logdet - 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln();
        Ok(GaussianTarget {
            nu: DVector::from_vec(nu),
            lambda,
            log_norm,
            pattern,
        })
    }

    pub fn nu(&self) -> &DVector<f64> {
        &self.nu
    }
    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }
}

impl TargetModel for GaussianTarget {
    fn dim(&self) -> usize {
        self.nu.len()
    }

    fn pattern(&self) -> Arc<SparsityPattern> {
        self.pattern.clone()
    }

    fn log_h(&self, theta: &[f64]) -> Result<f64> {
        check_len(self.dim(), theta.len())?;
        let r = dvec(theta) - &self.nu;
        Ok(self.log_norm - 0.5 * r.dot(&(&self.lambda * &r)))
    }

    fn grad_log_h(&self, theta: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), theta.len())?;
        let r = dvec(theta) - &self.nu;
        Ok((-(&self.lambda * r)).data.into())
    }

    fn hess_log_h(&self, theta: &[f64]) -> Result<SymPatternMatrix> {
        check_len(self.dim(), theta.len())?;
        SymPatternMatrix::from_dense(self.pattern.clone(), &(-&self.lambda))
    }

    fn hess_vec(&self, theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), theta.len())?;
        Ok((-(&self.lambda * dvec(v))).data.into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::fd;

    #[test]
    fn standard_normal_values() {
        let t = GaussianTarget::new(vec![0.0, 0.0], DMatrix::identity(2, 2)).unwrap();
        let at_mode = t.log_h(&[0.0, 0.0]).unwrap();
        let v = t.log_h(&[1.0, 2.0]).unwrap();
        assert!((v - at_mode + 2.5).abs() < 1e-14);
        assert_eq!(t.grad_log_h(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(t.hess_log_h(&[5.0, 1.0]).unwrap().to_dense(), -DMatrix::<f64>::identity(2, 2));
    }

    #[test]
    fn banded_pattern_and_fd() {
        let d = 6;
        let lambda = DMatrix::from_fn(d, d, |i, j| match i.abs_diff(j) {
            0 => 2.0,
            1 => -0.6,
            _ => 0.0,
        });
        let nu: Vec<f64> = (0..d).map(|i| i as f64 * 0.1).collect();
        let p = Arc::new(SparsityPattern::banded(d, 1).unwrap());
        let t = GaussianTarget::with_pattern(nu, lambda.clone(), p.clone()).unwrap();
        let theta: Vec<f64> = (0..d).map(|i| (i as f64).cos()).collect();
        fd::check_gradient(&t, &theta, 1e-7);
        fd::check_hessian(&t, &theta, 1e-6);
        let wide = lambda.map(|v| if v == 0.0 { 0.1 } else { v });
        assert!(GaussianTarget::with_pattern(vec![0.0; d], wide, p).is_err());
    }

    #[test]
    fn rejects_indefinite() {
        let l = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GaussianTarget::new(vec![0.0, 0.0], l).is_err());
    }
}
