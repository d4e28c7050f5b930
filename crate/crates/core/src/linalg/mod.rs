//! Sparse lower-triangular factors, vech maps and the diagonal
//! log-reparameterization scaling.

mod factor;
mod pattern;

pub use factor::{CholFactor, STAR_DIAG_FLOOR};
pub use pattern::{PatternDescriptor, SparsityPattern};

use crate::error::{check_len, Error, Result};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// Pattern-aligned vector from a square matrix, plus the number of nonzero
/// lower-triangular entries that were outside the pattern and dropped.
pub fn vech_gather(m: &DMatrix<f64>, pattern: &SparsityPattern) -> Result<(Vec<f64>, usize)> {
    let d = pattern.dim();
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: m.nrows().max(m.ncols()),
        });
    }
    let v: Vec<f64> = pattern.positions().map(|(i, j)| m[(i, j)]).collect();
    let mut dropped = 0;
    for j in 0..d {
        for i in j..d {
            if m[(i, j)] != 0.0 && pattern.slot(i, j).is_none() {
                dropped += 1;
            }
        }
    }
    Ok((v, dropped))
}

/// Lower-triangular matrix with `v` on the pattern and zeros elsewhere.
pub fn vech_scatter(v: &[f64], pattern: &SparsityPattern) -> Result<DMatrix<f64>> {
    check_len(pattern.nnz(), v.len())?;
    let d = pattern.dim();
    let mut m = DMatrix::zeros(d, d);
    for ((i, j), x) in pattern.positions().zip(v) {
        m[(i, j)] = *x;
    }
    Ok(m)
}

/// out[k] += alpha · a[row_k] · b[col_k] over pattern slots.
pub fn accumulate_outer(pattern: &SparsityPattern, alpha: f64, a: &[f64], b: &[f64], out: &mut [f64]) {
    for ((&i, &j), o) in pattern.rows().iter().zip(pattern.cols()).zip(out.iter_mut()) {
        *o += alpha * a[i] * b[j];
    }
}

/// The diagonal matrix D = diag(vech(J)), J with diag(T) on the diagonal and
/// ones elsewhere. It converts a gradient in T to a gradient in T*.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagScaler {
    pub d_diag: Vec<f64>,
}

impl DiagScaler {
    pub fn new(t: &CholFactor) -> Self {
        let p = t.pattern();
        let d_diag = (0..p.nnz())
            .map(|k| if p.is_diag_slot(k) { t.values()[k] } else { 1.0 })
            .collect();
        DiagScaler { d_diag }
    }

    pub fn apply(&self, g: &mut [f64]) {
        for (x, d) in g.iter_mut().zip(&self.d_diag) {
            *x *= d;
        }
    }
}

/// Symmetric matrix stored by its lower triangle on a sparsity pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct SymPatternMatrix {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
}

impl SymPatternMatrix {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        SymPatternMatrix { pattern, values }
    }

    pub fn from_dense(pattern: Arc<SparsityPattern>, m: &DMatrix<f64>) -> Result<Self> {
        let (values, dropped) = vech_gather(m, &pattern)?;
        if dropped > 0 {
            return Err(Error::InvalidInput(format!(
                "{dropped} nonzero entries fall outside the sparsity pattern"
            )));
        }
        Ok(SymPatternMatrix { pattern, values })
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Adds `v` at (i, j) (and implicitly (j, i)).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let k = self
            .pattern
            .slot(r, c)
            .unwrap_or_else(|| panic!("entry ({r},{c}) outside the Hessian pattern"));
        self.values[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        self.pattern.slot(r, c).map_or(0.0, |k| self.values[k])
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let p = &*self.pattern;
        let mut y = vec![0.0; p.dim()];
        for ((&i, &j), v) in p.rows().iter().zip(p.cols()).zip(&self.values) {
            y[i] += v * x[j];
            if i != j {
                y[j] += v * x[i];
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.pattern.dim();
        let mut m = DMatrix::zeros(d, d);
        for ((i, j), v) in self.pattern.positions().zip(&self.values) {
            m[(i, j)] = *v;
            m[(j, i)] = *v;
        }
        m
    }
}

pub(crate) fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Symmetric eigenvalues sorted ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Spectral norm of a symmetric matrix.
pub fn sym_spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()))
}

/// f(M) for symmetric M via its eigendecomposition.
pub fn sym_matrix_function(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let q = &eig.eigenvectors;
    let fd = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
    let mut out = q * fd * q.transpose();
    symmetrize(&mut out);
    out
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}
