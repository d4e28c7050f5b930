use super::pattern::SparsityPattern;
use crate::error::{check_len, Error, Result};
use nalgebra::DMatrix;
use std::sync::Arc;

/// Lower bound on the stored log-diagonal.
pub const STAR_DIAG_FLOOR: f64 = -700.0;
const SINGULAR_THRESHOLD: f64 = 1e-300;

/// Sparse lower-triangular factor T of a precision matrix Ω = TTᵀ.
///
/// `star` holds the unconstrained parameters (log T_ii on the diagonal,
/// T_ij elsewhere); `values` holds T itself.
#[derive(Debug, Clone, PartialEq)]
pub struct CholFactor {
    pattern: Arc<SparsityPattern>,
    star: Vec<f64>,
    values: Vec<f64>,
}

impl CholFactor {
    pub fn identity(pattern: Arc<SparsityPattern>) -> Self {
        Self::scaled_identity(pattern, 1.0)
    }

    pub fn scaled_identity(pattern: Arc<SparsityPattern>, c: f64) -> Self {
        let mut star = vec![0.0; pattern.nnz()];
        for j in 0..pattern.dim() {
            star[pattern.diag_slot(j)] = c.ln();
        }
        Self::from_star(pattern, star).expect("layout matches")
    }

    pub fn from_star(pattern: Arc<SparsityPattern>, star: Vec<f64>) -> Result<Self> {
        check_len(pattern.nnz(), star.len())?;
        let mut f = CholFactor {
            values: vec![0.0; star.len()],
            star,
            pattern,
        };
        f.refresh();
        Ok(f)
    }

    pub fn from_values(pattern: Arc<SparsityPattern>, values: Vec<f64>) -> Result<Self> {
        check_len(pattern.nnz(), values.len())?;
        let mut star = values.clone();
        for j in 0..pattern.dim() {
            let k = pattern.diag_slot(j);
            if !(values[k] > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "diagonal entry T[{j},{j}] = {} must be positive",
                    values[k]
                )));
            }
            star[k] = values[k].ln();
        }
        Self::from_star(pattern, star)
    }

    /// Lower Cholesky factor of a dense SPD precision, restricted to `pattern`.
    /// Entries of the exact factor that fall outside the pattern are dropped.
    pub fn from_precision(pattern: Arc<SparsityPattern>, omega: &DMatrix<f64>) -> Result<Self> {
        let chol = omega
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("precision".into()))?;
        let l = chol.l();
        let values = pattern.positions().map(|(i, j)| l[(i, j)]).collect();
        Self::from_values(pattern, values)
    }

    fn refresh(&mut self) {
        let p = &self.pattern;
        for j in 0..p.dim() {
            let k = p.diag_slot(j);
            if self.star[k] < STAR_DIAG_FLOOR {
                self.star[k] = STAR_DIAG_FLOOR;
            }
        }
        for (k, v) in self.values.iter_mut().enumerate() {
            *v = if p.is_diag_slot(k) {
                self.star[k].exp()
            } else {
                self.star[k]
            };
        }
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }
    pub fn dim(&self) -> usize {
        self.pattern.dim()
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn star(&self) -> &[f64] {
        &self.star
    }

    pub fn set_star(&mut self, star: &[f64]) -> Result<()> {
        check_len(self.star.len(), star.len())?;
        self.star.copy_from_slice(star);
        self.refresh();
        Ok(())
    }

    pub fn diag(&self, j: usize) -> f64 {
        self.values[self.pattern.diag_slot(j)]
    }

    /// Σ log T_ii.
    pub fn log_det(&self) -> f64 {
        (0..self.dim()).map(|j| self.star[self.pattern.diag_slot(j)]).sum()
    }

    fn check_diag(&self) -> Result<()> {
        for j in 0..self.dim() {
            let v = self.diag(j);
            if !(v.abs() >= SINGULAR_THRESHOLD) {
                return Err(Error::SingularFactor { index: j, value: v });
            }
        }
        Ok(())
    }

    /// Solves T x = b in place.
    pub fn solve_lower_in_place(&self, x: &mut [f64]) -> Result<()> {
        check_len(self.dim(), x.len())?;
        self.check_diag()?;
        let p = &*self.pattern;
        let rows = p.rows();
        for j in 0..p.dim() {
            let r = p.column(j);
            let xj = x[j] / self.values[r.start];
            x[j] = xj;
            if xj != 0.0 {
                for k in r.start + 1..r.end {
                    x[rows[k]] -= self.values[k] * xj;
                }
            }
        }
        Ok(())
    }

    /// Solves Tᵀ x = b in place.
    pub fn solve_upper_transpose_in_place(&self, x: &mut [f64]) -> Result<()> {
        check_len(self.dim(), x.len())?;
        self.check_diag()?;
        let p = &*self.pattern;
        let rows = p.rows();
        for j in (0..p.dim()).rev() {
            let r = p.column(j);
            let mut s = x[j];
            for k in r.start + 1..r.end {
                s -= self.values[k] * x[rows[k]];
            }
            x[j] = s / self.values[r.start];
        }
        Ok(())
    }

    pub fn solve_lower(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x)?;
        Ok(x)
    }

    pub fn solve_upper_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = b.to_vec();
        self.solve_upper_transpose_in_place(&mut x)?;
        Ok(x)
    }

    /// T x.
    pub fn mul_lower(&self, x: &[f64]) -> Vec<f64> {
        let p = &*self.pattern;
        let mut y = vec![0.0; p.dim()];
        for ((&i, &j), v) in p.rows().iter().zip(p.cols()).zip(&self.values) {
            y[i] += v * x[j];
        }
        y
    }

    /// Tᵀ x.
    pub fn mul_upper_transpose(&self, x: &[f64]) -> Vec<f64> {
        let p = &*self.pattern;
        let mut y = vec![0.0; p.dim()];
        for ((&i, &j), v) in p.rows().iter().zip(p.cols()).zip(&self.values) {
            y[j] += v * x[i];
        }
        y
    }

    /// Σ v = T^{-⊤}(T^{-1} v) without forming Σ.
    pub fn cov_mul(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.solve_lower(v)?;
        self.solve_upper_transpose_in_place(&mut x)?;
        Ok(x)
    }

    /// Ω v = T(Tᵀ v).
    pub fn precision_mul(&self, v: &[f64]) -> Vec<f64> {
        self.mul_lower(&self.mul_upper_transpose(v))
    }

    /// Diagonal of Σ = (TTᵀ)^{-1}, one solve per coordinate.
    pub fn covariance_diag(&self) -> Result<Vec<f64>> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d);
        let mut e = vec![0.0; d];
        for i in 0..d {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[i] = 1.0;
            self.solve_lower_in_place(&mut e)?;
            out.push(e.iter().map(|v| v * v).sum());
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for ((i, j), v) in self.pattern.positions().zip(&self.values) {
            m[(i, j)] = *v;
        }
        m
    }

    pub fn precision_dense(&self) -> DMatrix<f64> {
        let t = self.to_dense();
        &t * t.transpose()
    }

    pub fn covariance_dense(&self) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        let mut e = vec![0.0; d];
        for i in 0..d {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[i] = 1.0;
            let col = self.cov_mul(&e)?;
            out.set_column(i, &nalgebra::DVector::from_vec(col));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> CholFactor {
        let p = Arc::new(SparsityPattern::dense(2).unwrap());
        CholFactor::from_values(p, vec![2.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn identity_solves() {
        let p = Arc::new(SparsityPattern::dense(2).unwrap());
        let t = CholFactor::identity(p);
        assert_eq!(t.solve_lower(&[3.0, -1.0]).unwrap(), vec![3.0, -1.0]);
    }

    #[test]
    fn hand_substitution() {
        let t = two_by_two();
        assert_eq!(t.solve_lower(&[2.0, 3.0]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(t.solve_upper_transpose(&[2.0, 3.0]).unwrap(), vec![-0.5, 3.0]);
        assert_eq!(t.mul_lower(&[1.0, 2.0]), vec![2.0, 3.0]);
        assert_eq!(t.mul_upper_transpose(&[-0.5, 3.0]), vec![2.0, 3.0]);
    }

    #[test]
    fn star_round_trip() {
        let t = two_by_two();
        let back = CholFactor::from_star(t.pattern().clone(), t.star().to_vec()).unwrap();
        for (a, b) in back.values().iter().zip(t.values()) {
            assert!((a - b).abs() <= 1e-15 * b.abs());
        }
        assert!((t.log_det() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn floor_keeps_diagonal_positive_but_flags_singular() {
        let p = Arc::new(SparsityPattern::dense(1).unwrap());
        let t = CholFactor::from_star(p, vec![-5000.0]).unwrap();
        assert_eq!(t.star()[0], STAR_DIAG_FLOOR);
        assert!(t.diag(0) > 0.0);
        assert!(matches!(t.solve_lower(&[1.0]), Err(Error::SingularFactor { .. })));
    }

    #[test]
    fn covariance_matches_dense_inverse() {
        let t = two_by_two();
        let sigma = t.precision_dense().try_inverse().unwrap();
        let diag = t.covariance_diag().unwrap();
        let dense = t.covariance_dense().unwrap();
        for i in 0..2 {
            assert!((diag[i] - sigma[(i, i)]).abs() < 1e-14);
            for j in 0..2 {
                assert!((dense[(i, j)] - sigma[(i, j)]).abs() < 1e-14);
            }
        }
    }
}
