use super::TargetModel;
use crate::error::{check_finite, check_len, Error, Result};
use crate::linalg::{SparsityPattern, SymPatternMatrix};
use crate::special::{ln_gamma, sigmoid, softplus};
use nalgebra::DMatrix;
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlmmFamily {
    BernoulliLogit,
    PoissonLog,
}

impl GlmmFamily {
    fn a(self, x: f64) -> f64 {
        match self {
            GlmmFamily::BernoulliLogit => softplus(x),
            GlmmFamily::PoissonLog => x.exp(),
        }
    }
    fn a1(self, x: f64) -> f64 {
        match self {
            GlmmFamily::BernoulliLogit => sigmoid(x),
            GlmmFamily::PoissonLog => x.exp(),
        }
    }
    fn a2(self, x: f64) -> f64 {
        match self {
            GlmmFamily::BernoulliLogit => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            GlmmFamily::PoissonLog => x.exp(),
        }
    }
}

/// Rows of one subject: fixed-effect design X_i (n_i×p), random-effect
/// design Z_i (n_i×r) and responses y_i.
#[derive(Debug, Clone)]
pub struct GlmmSubject {
    pub x: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub y: Vec<f64>,
}

/// GLMM with canonical link, b_i ~ N(0, (WWᵀ)⁻¹) and Gaussian priors on β
/// and ζ = vech(W*), where W* holds log W_kk on its diagonal.
///
/// θ = (b_1, …, b_n, β, ζ); ζ is stacked column by column.
#[derive(Debug, Clone)]
pub struct GlmmModel {
    family: GlmmFamily,
    subjects: Vec<GlmmSubject>,
    p: usize,
    r: usize,
    sigma_beta_sq: f64,
    sigma_zeta_sq: f64,
    log_const: f64,
    pattern: Arc<SparsityPattern>,
}

struct Cov {
    w: DMatrix<f64>,
    g: DMatrix<f64>,
}

impl GlmmModel {
    pub fn new(
        family: GlmmFamily,
        subjects: Vec<GlmmSubject>,
        sigma_beta_sq: f64,
        sigma_zeta_sq: f64,
    ) -> Result<Self> {
        let first = subjects
            .first()
            .ok_or_else(|| Error::InvalidInput("GLMM needs at least one subject".into()))?;
        let (p, r) = (first.x.ncols(), first.z.ncols());
        if r == 0 {
            return Err(Error::InvalidInput("GLMM needs at least one random effect".into()));
        }
        if !(sigma_beta_sq > 0.0 && sigma_zeta_sq > 0.0) {
            return Err(Error::InvalidInput("prior variances must be positive".into()));
        }
        let mut log_const = 0.0;
        for (i, s) in subjects.iter().enumerate() {
            if s.x.ncols() != p || s.z.ncols() != r {
                return Err(Error::InvalidInput(format!("subject {i} has inconsistent design widths")));
            }
            check_len(s.y.len(), s.x.nrows())?;
            check_len(s.y.len(), s.z.nrows())?;
            for &y in &s.y {
                match family {
                    GlmmFamily::BernoulliLogit if y != 0.0 && y != 1.0 => {
                        return Err(Error::InvalidInput(format!("subject {i}: binary response {y}")))
                    }
                    GlmmFamily::PoissonLog if !(y >= 0.0 && y.fract() == 0.0) => {
                        return Err(Error::InvalidInput(format!("subject {i}: count response {y}")))
                    }
                    GlmmFamily::PoissonLog => log_const -= ln_gamma(y + 1.0),
                    _ => {}
                }
            }
        }
        let n = subjects.len();
        let q = r * (r + 1) / 2;
        log_const -= 0.5 * (n * r) as f64 * (2.0 * PI).ln();
        log_const -= 0.5 * p as f64 * (2.0 * PI * sigma_beta_sq).ln();
        log_const -= 0.5 * q as f64 * (2.0 * PI * sigma_zeta_sq).ln();
        let pattern = Arc::new(SparsityPattern::build(n, &vec![r; n], p + q, 0)?);
        Ok(GlmmModel {
            family,
            subjects,
            p,
            r,
            sigma_beta_sq,
            sigma_zeta_sq,
            log_const,
            pattern,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }
    pub fn n_fixed(&self) -> usize {
        self.p
    }
    pub fn n_random(&self) -> usize {
        self.r
    }
    pub fn family(&self) -> GlmmFamily {
        self.family
    }

    fn beta_offset(&self) -> usize {
        self.subjects.len() * self.r
    }
    fn zeta_offset(&self) -> usize {
        self.beta_offset() + self.p
    }

    /// Position of W*_{kl} (k ≥ l) inside ζ.
    pub fn zeta_index(&self, k: usize, l: usize) -> usize {
        l * self.r - l * l.saturating_sub(1) / 2 + (k - l)
    }

    fn zeta_pairs(&self) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        for l in 0..self.r {
            for k in l..self.r {
                v.push((k, l));
            }
        }
        v
    }

    fn cov(&self, theta: &[f64]) -> Cov {
        let r = self.r;
        let z0 = self.zeta_offset();
        let mut w = DMatrix::zeros(r, r);
        for (idx, (k, l)) in self.zeta_pairs().into_iter().enumerate() {
            let v = theta[z0 + idx];
            w[(k, l)] = if k == l { v.exp() } else { v };
        }
        let g = &w * w.transpose();
        Cov { w, g }
    }

    fn eta(&self, i: usize, theta: &[f64]) -> Vec<f64> {
        let s = &self.subjects[i];
        let b = &theta[i * self.r..(i + 1) * self.r];
        let beta = &theta[self.beta_offset()..self.beta_offset() + self.p];
        (0..s.y.len())
            .map(|j| {
                let mut e = 0.0;
                for c in 0..self.p {
                    e += s.x[(j, c)] * beta[c];
                }
                for c in 0..self.r {
                    e += s.z[(j, c)] * b[c];
                }
                e
            })
            .collect()
    }

    /// M = Σ_i b_i b_iᵀ.
    fn scatter(&self, theta: &[f64]) -> DMatrix<f64> {
        let r = self.r;
        let mut m = DMatrix::zeros(r, r);
        for i in 0..self.subjects.len() {
            let b = &theta[i * r..(i + 1) * r];
            for a in 0..r {
                for c in 0..r {
                    m[(a, c)] += b[a] * b[c];
                }
            }
        }
        m
    }
}

impl TargetModel for GlmmModel {
    fn dim(&self) -> usize {
        self.zeta_offset() + self.r * (self.r + 1) / 2
    }

    fn pattern(&self) -> Arc<SparsityPattern> {
        self.pattern.clone()
    }

    fn log_h(&self, theta: &[f64]) -> Result<f64> {
        check_len(self.dim(), theta.len())?;
        let r = self.r;
        let cov = self.cov(theta);
        let mut lik = 0.0;
        let mut quad = 0.0;
        for (i, s) in self.subjects.iter().enumerate() {
            for (e, y) in self.eta(i, theta).iter().zip(&s.y) {
                lik += y * e - self.family.a(*e);
            }
            let b = nalgebra::DVector::from_column_slice(&theta[i * r..(i + 1) * r]);
            let wb = cov.w.tr_mul(&b);
            quad += wb.norm_squared();
        }
        check_finite(lik, "GLMM log-likelihood")?;
        let log_det_w: f64 = (0..r).map(|k| cov.w[(k, k)].ln()).sum();
        let beta = &theta[self.beta_offset()..self.zeta_offset()];
        let zeta = &theta[self.zeta_offset()..];
        let bb: f64 = beta.iter().map(|v| v * v).sum();
        let zz: f64 = zeta.iter().map(|v| v * v).sum();
        let n = self.subjects.len() as f64;
        let v = lik + n * log_det_w - 0.5 * quad - bb / (2.0 * self.sigma_beta_sq) - zz / (2.0 * self.sigma_zeta_sq)
            + self.log_const;
        check_finite(v, "GLMM log density")
    }

    fn grad_log_h(&self, theta: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), theta.len())?;
        let (r, p) = (self.r, self.p);
        let cov = self.cov(theta);
        let b0 = self.beta_offset();
        let z0 = self.zeta_offset();
        let mut g = vec![0.0; self.dim()];
        for (i, s) in self.subjects.iter().enumerate() {
            let eta = self.eta(i, theta);
            for (j, e) in eta.iter().enumerate() {
                let res = s.y[j] - self.family.a1(*e);
                for c in 0..r {
                    g[i * r + c] += res * s.z[(j, c)];
                }
                for c in 0..p {
                    g[b0 + c] += res * s.x[(j, c)];
                }
            }
            for a in 0..r {
                let mut gb = 0.0;
                for c in 0..r {
                    gb += cov.g[(a, c)] * theta[i * r + c];
                }
                g[i * r + a] -= gb;
            }
        }
        for c in 0..p {
            g[b0 + c] -= theta[b0 + c] / self.sigma_beta_sq;
        }
        let mw = self.scatter(theta) * &cov.w;
        let n = self.subjects.len() as f64;
        for (idx, (k, l)) in self.zeta_pairs().into_iter().enumerate() {
            let dkl = if k == l { cov.w[(k, k)] } else { 1.0 };
            let mut v = -dkl * mw[(k, l)] - theta[z0 + idx] / self.sigma_zeta_sq;
            if k == l {
                v += n;
            }
            g[z0 + idx] = v;
        }
        crate::error::check_all_finite(&g, "GLMM gradient")?;
        Ok(g)
    }

    fn hess_log_h(&self, theta: &[f64]) -> Result<SymPatternMatrix> {
        check_len(self.dim(), theta.len())?;
        let (r, p) = (self.r, self.p);
        let cov = self.cov(theta);
        let b0 = self.beta_offset();
        let z0 = self.zeta_offset();
        let pairs = self.zeta_pairs();
        let mut h = SymPatternMatrix::zeros(self.pattern.clone());
        for (i, s) in self.subjects.iter().enumerate() {
            let eta = self.eta(i, theta);
            let bi = &theta[i * r..(i + 1) * r];
            for (j, e) in eta.iter().enumerate() {
                let w2 = self.family.a2(*e);
                for a in 0..r {
                    for c in 0..=a {
                        h.add(i * r + a, i * r + c, -w2 * s.z[(j, a)] * s.z[(j, c)]);
                    }
                    for c in 0..p {
                        h.add(b0 + c, i * r + a, -w2 * s.x[(j, c)] * s.z[(j, a)]);
                    }
                }
                for a in 0..p {
                    for c in 0..=a {
                        h.add(b0 + a, b0 + c, -w2 * s.x[(j, a)] * s.x[(j, c)]);
                    }
                }
            }
            for a in 0..r {
                for c in 0..=a {
                    h.add(i * r + a, i * r + c, -cov.g[(a, c)]);
                }
            }
            // ∂²/∂ζ_kl ∂b_is = −D_kl (δ_ks (Wᵀb_i)_l + b_ik W_sl)
            let wtb = cov.w.tr_mul(&nalgebra::DVector::from_column_slice(bi));
            for (idx, &(k, l)) in pairs.iter().enumerate() {
                let dkl = if k == l { cov.w[(k, k)] } else { 1.0 };
                for sidx in 0..r {
                    let mut v = bi[k] * cov.w[(sidx, l)];
                    if sidx == k {
                        v += wtb[l];
                    }
                    h.add(z0 + idx, i * r + sidx, -dkl * v);
                }
            }
        }
        for a in 0..p {
            h.add(b0 + a, b0 + a, -1.0 / self.sigma_beta_sq);
        }
        let m = self.scatter(theta);
        let mw = &m * &cov.w;
        for (ia, &(k, l)) in pairs.iter().enumerate() {
            let dkl = if k == l { cov.w[(k, k)] } else { 1.0 };
            for (ib, &(k2, l2)) in pairs.iter().enumerate().take(ia + 1) {
                let d2 = if k2 == l2 { cov.w[(k2, k2)] } else { 1.0 };
                let mut v = if l == l2 { -dkl * d2 * m[(k, k2)] } else { 0.0 };
                if ia == ib {
                    if k == l {
                        v -= cov.w[(k, k)] * mw[(k, k)];
                    }
                    v -= 1.0 / self.sigma_zeta_sq;
                }
                if v != 0.0 {
                    h.add(z0 + ia, z0 + ib, v);
                }
            }
        }
        crate::error::check_all_finite(h.values(), "GLMM Hessian")?;
        Ok(h)
    }
}
