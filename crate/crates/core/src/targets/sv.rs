use super::TargetModel;
use crate::error::{check_all_finite, check_finite, check_len, Error, Result};
use crate::linalg::{SparsityPattern, SymPatternMatrix};
use crate::special::{sigmoid, softplus};
use std::f64::consts::PI;
use std::sync::Arc;

/// Stochastic volatility model y_t ~ N(0, exp(λ + σ b_t)) with an AR(1)
/// latent process. θ = (b_1, …, b_n, α, λ, ψ), σ = e^α, φ = logistic(ψ),
/// and a N(0, σ₀² I) prior on (α, λ, ψ).
#[derive(Debug, Clone)]
pub struct SvModel {
    y2: Vec<f64>,
    sigma0_sq: f64,
    pattern: Arc<SparsityPattern>,
}

struct Globals {
    sigma: f64,
    lambda: f64,
    phi: f64,
    /// dφ/dψ
    dphi: f64,
}

impl SvModel {
    pub fn new(y: Vec<f64>, sigma0_sq: f64) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::InvalidInput("SV model needs at least one observation".into()));
        }
        if !(sigma0_sq > 0.0) {
            return Err(Error::InvalidInput("prior variance must be positive".into()));
        }
        check_all_finite(&y, "returns")?;
        let order = if n > 1 { 1 } else { 0 };
        let pattern = Arc::new(SparsityPattern::build(n, &vec![1; n], 3, order)?);
        Ok(SvModel {
            y2: y.iter().map(|v| v * v).collect(),
            sigma0_sq,
            pattern,
        })
    }

    pub fn n(&self) -> usize {
        self.y2.len()
    }

    fn globals(&self, theta: &[f64]) -> Globals {
        let n = self.n();
        let phi = sigmoid(theta[n + 2]);
        Globals {
            sigma: theta[n].exp(),
            lambda: theta[n + 1],
            phi,
            dphi: phi * sigmoid(-theta[n + 2]),
        }
    }

    /// e_t = y_t² exp(−λ − σ b_t).
    fn scaled(&self, theta: &[f64], g: &Globals) -> Vec<f64> {
        self.y2
            .iter()
            .zip(theta)
            .map(|(y2, b)| if *y2 == 0.0 { 0.0 } else { y2 * (-g.lambda - g.sigma * b).exp() })
            .collect()
    }
}

impl TargetModel for SvModel {
    fn dim(&self) -> usize {
        self.n() + 3
    }

    fn pattern(&self) -> Arc<SparsityPattern> {
        self.pattern.clone()
    }

    fn log_h(&self, theta: &[f64]) -> Result<f64> {
        check_len(self.dim(), theta.len())?;
        let n = self.n();
        let g = self.globals(theta);
        let e = self.scaled(theta, &g);
        let b = &theta[..n];
        let nf = n as f64;
        let l2pi = (2.0 * PI).ln();
        let psi = theta[n + 2];
        // log(1 − φ²) = log(1 − φ) + log(1 + φ)
        let log1m_phi2 = -softplus(psi) + g.phi.ln_1p();
        let mut v = -0.5 * nf * l2pi - 0.5 * nf * g.lambda;
        v -= 0.5 * g.sigma * b.iter().sum::<f64>();
        v -= 0.5 * e.iter().sum::<f64>();
        v += -0.5 * l2pi + 0.5 * log1m_phi2 - 0.5 * b[0] * b[0] * (1.0 - g.phi * g.phi);
        for t in 1..n {
            let r = b[t] - g.phi * b[t - 1];
            v -= 0.5 * l2pi + 0.5 * r * r;
        }
        let alpha = theta[n];
        v -= 1.5 * (2.0 * PI * self.sigma0_sq).ln();
        v -= (alpha * alpha + g.lambda * g.lambda + psi * psi) / (2.0 * self.sigma0_sq);
        check_finite(v, "SV log density")
    }

    fn grad_log_h(&self, theta: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), theta.len())?;
        let n = self.n();
        let g = self.globals(theta);
        let e = self.scaled(theta, &g);
        let b = &theta[..n];
        let mut out = vec![0.0; n + 3];
        for t in 0..n {
            let mut v = 0.5 * g.sigma * (e[t] - 1.0);
            if t == 0 {
                v -= (1.0 - g.phi * g.phi) * b[0];
            } else {
                v -= b[t] - g.phi * b[t - 1];
            }
            if t + 1 < n {
                v += g.phi * (b[t + 1] - g.phi * b[t]);
            }
            out[t] = v;
        }
        let sum_b: f64 = b.iter().sum();
        let sum_be: f64 = b.iter().zip(&e).map(|(b, e)| b * e).sum();
        let sum_e: f64 = e.iter().sum();
        out[n] = 0.5 * g.sigma * (sum_be - sum_b) - theta[n] / self.sigma0_sq;
        out[n + 1] = -0.5 * n as f64 + 0.5 * sum_e - g.lambda / self.sigma0_sq;
        let mut dphi = -g.phi / (1.0 - g.phi * g.phi) + g.phi * b[0] * b[0];
        for t in 1..n {
            dphi += (b[t] - g.phi * b[t - 1]) * b[t - 1];
        }
        out[n + 2] = dphi * g.dphi - theta[n + 2] / self.sigma0_sq;
        check_all_finite(&out, "SV gradient")?;
        Ok(out)
    }

    fn hess_log_h(&self, theta: &[f64]) -> Result<SymPatternMatrix> {
        check_len(self.dim(), theta.len())?;
        let n = self.n();
        let (ia, il, ip) = (n, n + 1, n + 2);
        let g = self.globals(theta);
        let e = self.scaled(theta, &g);
        let b = &theta[..n];
        let s = g.sigma;
        let mut h = SymPatternMatrix::zeros(self.pattern.clone());
        for t in 0..n {
            let mut v = -0.5 * s * s * e[t];
            v -= if t == 0 { 1.0 - g.phi * g.phi } else { 1.0 };
            if t + 1 < n {
                v -= g.phi * g.phi;
                h.add(t + 1, t, g.phi);
            }
            h.add(t, t, v);
            h.add(ia, t, 0.5 * s * (e[t] - 1.0) - 0.5 * s * s * b[t] * e[t]);
            h.add(il, t, -0.5 * s * e[t]);
            // ∂/∂φ of the latent-state gradient, times dφ/dψ
            let mut dp = if t == 0 { 2.0 * g.phi * b[0] } else { b[t - 1] };
            if t + 1 < n {
                dp += b[t + 1] - 2.0 * g.phi * b[t];
            }
            h.add(ip, t, dp * g.dphi);
        }
        let sum_b: f64 = b.iter().sum();
        let sum_be: f64 = b.iter().zip(&e).map(|(b, e)| b * e).sum();
        let sum_bbe: f64 = b.iter().zip(&e).map(|(b, e)| b * b * e).sum();
        let sum_e: f64 = e.iter().sum();
        h.add(ia, ia, 0.5 * s * (sum_be - sum_b) - 0.5 * s * s * sum_bbe - 1.0 / self.sigma0_sq);
        h.add(il, ia, -0.5 * s * sum_be);
        h.add(il, il, -0.5 * sum_e - 1.0 / self.sigma0_sq);
        let one_m = 1.0 - g.phi * g.phi;
        let mut gphi = -g.phi / one_m + g.phi * b[0] * b[0];
        let mut dgphi = -(1.0 + g.phi * g.phi) / (one_m * one_m) + b[0] * b[0];
        for t in 1..n {
            gphi += (b[t] - g.phi * b[t - 1]) * b[t - 1];
            dgphi -= b[t - 1] * b[t - 1];
        }
        let d2phi = g.dphi * (1.0 - 2.0 * g.phi);
        h.add(ip, ip, dgphi * g.dphi * g.dphi + gphi * d2phi - 1.0 / self.sigma0_sq);
        check_all_finite(h.values(), "SV Hessian")?;
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::fd;
    use rand::{Rng, SeedableRng};

    #[test]
    fn single_observation_by_hand() {
        let m = SvModel::new(vec![0.0], 10.0).unwrap();
        // σ = 1, φ = ½, λ = b = 0, y = 0
        let l2pi = (2.0 * PI).ln();
        let expected = -0.5 * l2pi + (-0.5 * l2pi + 0.5 * 0.75f64.ln()) - 1.5 * (20.0 * PI).ln();
        assert!((m.log_h(&[0.0; 4]).unwrap() - expected).abs() < 1e-13);
        fd::check_gradient(&m, &[0.3, -0.2, 0.5, 0.7], 1e-7);
        fd::check_hessian(&m, &[0.3, -0.2, 0.5, 0.7], 1e-6);
    }

    #[test]
    fn random_series_match_fd() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let n = rng.gen_range(1..8);
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let m = SvModel::new(y, 10.0).unwrap();
            let theta: Vec<f64> = (0..n + 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            fd::check_gradient(&m, &theta, 1e-6);
            fd::check_hessian(&m, &theta, 1e-5);
        }
    }

    #[test]
    fn hessian_structure() {
        let m = SvModel::new(vec![0.5, -1.0, 0.3, 2.0, -0.1], 10.0).unwrap();
        let theta = [0.1, 0.4, -0.3, 0.2, 0.0, -0.5, 0.3, 1.2];
        let h = m.hess_log_h(&theta).unwrap();
        let phi = sigmoid(1.2);
        for i in 0..5usize {
            for j in 0..5usize {
                if i != j {
                    let expected = if i.abs_diff(j) == 1 { phi } else { 0.0 };
                    assert_eq!(h.get(i, j), expected);
                }
            }
        }
        assert_eq!(h.get(7, 6), 0.0);
        assert_eq!(h.get(7, 5), 0.0);
    }
}
