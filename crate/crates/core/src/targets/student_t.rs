use super::TargetModel;
use crate::error::{check_len, Error, Result};
use crate::linalg::{dvec, SparsityPattern, SymPatternMatrix};
use crate::special::ln_gamma;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// Multivariate Student-t target t_ν(m, S).
#[derive(Debug, Clone)]
pub struct StudentTTarget {
    nu: f64,
    m: DVector<f64>,
    s_inv: DMatrix<f64>,
    log_norm: f64,
    pattern: Arc<SparsityPattern>,
}

impl StudentTTarget {
    pub fn new(nu: f64, m: Vec<f64>, s: DMatrix<f64>) -> Result<Self> {
        let d = m.len();
        if !(nu > 0.0) {
            return Err(Error::InvalidInput("degrees of freedom must be positive".into()));
        }
        check_len(d, s.nrows())?;
        let chol = s
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("scale matrix".into()))?;
        let half_logdet: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum();
        let df = d as f64;
        let log_norm = ln_gamma(0.5 * (nu + df))
            - ln_gamma(0.5 * nu)
            - 0.5 * df * (nu * std::f64::consts::PI).ln()
            - half_logdet;
        Ok(StudentTTarget {
            nu,
            m: DVector::from_vec(m),
            s_inv: chol.inverse(),
            log_norm,
            pattern: Arc::new(SparsityPattern::dense(d)?),
        })
    }

    fn parts(&self, theta: &[f64]) -> (DVector<f64>, f64) {
        let r = dvec(theta) - &self.m;
        let sr = &self.s_inv * &r;
        let q = r.dot(&sr);
        (sr, q)
    }
}

impl TargetModel for StudentTTarget {
    fn dim(&self) -> usize {
        self.m.len()
    }

    fn pattern(&self) -> Arc<SparsityPattern> {
        self.pattern.clone()
    }

    fn log_h(&self, theta: &[f64]) -> Result<f64> {
        check_len(self.dim(), theta.len())?;
        let (_, q) = self.parts(theta);
        let df = self.dim() as f64;
        Ok(self.log_norm - 0.5 * (self.nu + df) * (q / self.nu).ln_1p())
    }

    fn grad_log_h(&self, theta: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), theta.len())?;
        let (sr, q) = self.parts(theta);
        let w = (self.nu + self.dim() as f64) / (self.nu + q);
        Ok((-w * sr).data.into())
    }

    fn hess_log_h(&self, theta: &[f64]) -> Result<SymPatternMatrix> {
        check_len(self.dim(), theta.len())?;
        let (sr, q) = self.parts(theta);
        let w = (self.nu + self.dim() as f64) / (self.nu + q);
        let h = -w * &self.s_inv + (2.0 * w / (self.nu + q)) * &sr * sr.transpose();
        SymPatternMatrix::from_dense(self.pattern.clone(), &h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::fd;

    #[test]
    fn univariate_density_and_derivatives() {
        let t = StudentTTarget::new(3.0, vec![0.0], DMatrix::identity(1, 1)).unwrap();
        // t₃ density at 0 is 2/(π√3)
        let p0 = 2.0 / (std::f64::consts::PI * 3f64.sqrt());
        assert!((t.log_h(&[0.0]).unwrap() - p0.ln()).abs() < 1e-13);
        let g = t.grad_log_h(&[1.5]).unwrap()[0];
        assert!((g + 4.0 * 1.5 / (3.0 + 2.25)).abs() < 1e-14);
    }

    #[test]
    fn multivariate_fd() {
        let s = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5]);
        let t = StudentTTarget::new(5.0, vec![0.1, -0.4, 1.0], s).unwrap();
        let theta = [0.7, 0.2, -0.3];
        fd::check_gradient(&t, &theta, 1e-7);
        fd::check_hessian(&t, &theta, 1e-6);
    }
}
