use crate::error::{Error, Result};
use crate::special::{digamma, ln_gamma, mills, norm_logcdf, trigamma};
use serde::Serialize;
use std::f64::consts::PI;

/// Univariate non-Gaussian targets with known normalizing constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum UniTarget {
    /// Standard Student's t with `nu` degrees of freedom.
    StudentT { nu: f64 },
    /// Density of θ when e^{−θ} ~ Gamma(a1, rate b1).
    LogInvGamma { a1: f64, b1: f64 },
    /// 2 φ(θ | m, t²) Φ(λ(θ − m)).
    SkewNormal { m: f64, t: f64, lambda: f64 },
}

/// Mean, mode and variance of a target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub mode: f64,
    pub var: f64,
}

impl UniTarget {
    pub fn student_t(nu: f64) -> Result<Self> {
        if !(nu > 2.0) || !nu.is_finite() {
            return Err(Error::InvalidInput(format!("Student-t needs ν > 2 for a finite variance, got {nu}")));
        }
        Ok(UniTarget::StudentT { nu })
    }

    pub fn log_inv_gamma(a1: f64, b1: f64) -> Result<Self> {
        if !(a1 > 0.5) || !(b1 > 0.0) || !a1.is_finite() || !b1.is_finite() {
            return Err(Error::InvalidInput(format!("log inverse gamma needs a1 > 1/2 and b1 > 0, got ({a1}, {b1})")));
        }
        Ok(UniTarget::LogInvGamma { a1, b1 })
    }

    /// Posterior of θ = log variance for y_i ~ N(0, e^θ) under an
    /// IG(a0, b0) prior on e^θ.
    pub fn log_inv_gamma_from_data(y: &[f64], a0: f64, b0: f64) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::InvalidInput("need at least one observation".into()));
        }
        let a1 = a0 + y.len() as f64 / 2.0;
        let b1 = b0 + y.iter().map(|v| v * v).sum::<f64>() / 2.0;
        Self::log_inv_gamma(a1, b1)
    }

    pub fn skew_normal(m: f64, t: f64, lambda: f64) -> Result<Self> {
        if !(t > 0.0) || !m.is_finite() || !lambda.is_finite() || !t.is_finite() {
            return Err(Error::InvalidInput(format!("skew normal needs t > 0, got {t}")));
        }
        Ok(UniTarget::SkewNormal { m, t, lambda })
    }

    pub fn log_pdf(&self, theta: f64) -> f64 {
        match *self {
            UniTarget::StudentT { nu } => {
                ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (PI * nu).ln()
                    - 0.5 * (nu + 1.0) * (theta * theta / nu).ln_1p()
            }
            UniTarget::LogInvGamma { a1, b1 } => a1 * b1.ln() - ln_gamma(a1) - a1 * theta - b1 * (-theta).exp(),
            UniTarget::SkewNormal { m, t, lambda } => {
                let r = theta - m;
                2f64.ln() - 0.5 * (2.0 * PI * t * t).ln() - r * r / (2.0 * t * t) + norm_logcdf(lambda * r)
            }
        }
    }

    pub fn pdf(&self, theta: f64) -> f64 {
        self.log_pdf(theta).exp()
    }

    /// d/dθ log p.
    pub fn score(&self, theta: f64) -> f64 {
        match *self {
            UniTarget::StudentT { nu } => -(nu + 1.0) * theta / (nu + theta * theta),
            UniTarget::LogInvGamma { a1, b1 } => -a1 + b1 * (-theta).exp(),
            UniTarget::SkewNormal { m, t, lambda } => {
                let r = theta - m;
                -r / (t * t) + lambda * mills(lambda * r)
            }
        }
    }

    /// d²/dθ² log p.
    pub fn score_deriv(&self, theta: f64) -> f64 {
        match *self {
            UniTarget::StudentT { nu } => {
                let q = nu + theta * theta;
                -(nu + 1.0) * (nu - theta * theta) / (q * q)
            }
            UniTarget::LogInvGamma { b1, .. } => -b1 * (-theta).exp(),
            UniTarget::SkewNormal { m, t, lambda } => {
                let z = lambda * (theta - m);
                let r = mills(z);
                -1.0 / (t * t) - lambda * lambda * r * (z + r)
            }
        }
    }

    pub fn moments(&self) -> Result<Moments> {
        Ok(match *self {
            UniTarget::StudentT { nu } => Moments {
                mean: 0.0,
                mode: 0.0,
                var: nu / (nu - 2.0),
            },
            UniTarget::LogInvGamma { a1, b1 } => Moments {
                mean: b1.ln() - digamma(a1),
                mode: (b1 / a1).ln(),
                var: trigamma(a1),
            },
            UniTarget::SkewNormal { m, t, lambda } => {
                let alpha = lambda * t;
                let delta = alpha / (1.0 + alpha * alpha).sqrt();
                Moments {
                    mean: m + t * delta * (2.0 / PI).sqrt(),
                    mode: self.skew_normal_mode()?,
                    var: t * t * (1.0 - 2.0 * delta * delta / PI),
                }
            }
        })
    }

    /// The score is strictly decreasing, so the mode is its unique root.
    fn skew_normal_mode(&self) -> Result<f64> {
        let UniTarget::SkewNormal { m, t, .. } = *self else {
            unreachable!()
        };
        let (mut lo, mut hi) = (m - t, m + t);
        let mut guard = 0;
        while self.score(lo) < 0.0 || self.score(hi) > 0.0 {
            lo -= (hi - lo).max(t);
            hi += (hi - lo).max(t);
            guard += 1;
            if guard > 200 {
                return Err(Error::NoConvergence("skew normal mode bracket".into()));
            }
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let s = self.score(x);
            if s == 0.0 {
                break;
            }
            if s > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let newton = x - s / self.score_deriv(x);
            x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo < 1e-15 * (1.0 + x.abs()) {
                break;
            }
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;

    fn fd_check(t: &UniTarget, xs: &[f64]) {
        for &x in xs {
            let h = 1e-5;
            let ds = (t.log_pdf(x + h) - t.log_pdf(x - h)) / (2.0 * h);
            assert!((ds - t.score(x)).abs() < 1e-7 * (1.0 + ds.abs()), "{t:?} score at {x}");
            let dd = (t.score(x + h) - t.score(x - h)) / (2.0 * h);
            assert!((dd - t.score_deriv(x)).abs() < 1e-6 * (1.0 + dd.abs()), "{t:?} score' at {x}");
        }
    }

    #[test]
    fn derivatives_match_fd() {
        fd_check(&UniTarget::student_t(3.0).unwrap(), &[-4.0, -0.3, 0.0, 1.7, 9.0]);
        fd_check(&UniTarget::log_inv_gamma(3.01, 700.0).unwrap(), &[4.0, 5.5, 6.0, 8.0]);
        fd_check(&UniTarget::skew_normal(0.5, 2.0, 3.0).unwrap(), &[-8.0, -1.0, 0.5, 3.0, 10.0]);
    }

    #[test]
    fn densities_integrate_to_one_with_matching_moments() {
        let targets = [
            UniTarget::student_t(5.0).unwrap(),
            UniTarget::log_inv_gamma(3.01, 700.0).unwrap(),
            UniTarget::skew_normal(0.0, 1.0, 2.0).unwrap(),
            UniTarget::skew_normal(0.0, 5.0, 5.0).unwrap(),
        ];
        for t in targets {
            let mo = t.moments().unwrap();
            let sd = mo.var.sqrt();
            let (a, b) = (mo.mean - 60.0 * sd, mo.mean + 60.0 * sd);
            let mass = integrate(|x| t.pdf(x), a, b, 1e-12);
            let mean = integrate(|x| x * t.pdf(x), a, b, 1e-12);
            let var = integrate(|x| (x - mo.mean).powi(2) * t.pdf(x), a, b, 1e-12);
            let heavy = matches!(t, UniTarget::StudentT { .. });
            let tol = if heavy { 1e-4 } else { 1e-9 };
            assert!((mass - 1.0).abs() < tol, "{t:?} mass {mass}");
            assert!((mean - mo.mean).abs() < tol * sd, "{t:?} mean");
            assert!((var / mo.var - 1.0).abs() < if heavy { 2e-2 } else { 1e-8 }, "{t:?} var {var}");
            assert!(t.score(mo.mode).abs() < 1e-10);
        }
    }

    #[test]
    fn skew_normal_with_zero_skew_is_gaussian() {
        let t = UniTarget::skew_normal(1.0, 2.0, 0.0).unwrap();
        let mo = t.moments().unwrap();
        assert_eq!((mo.mean, mo.mode, mo.var), (1.0, 1.0, 4.0));
        let g = -0.5 * (8.0 * PI).ln() - 0.125;
        assert!((t.log_pdf(2.0) - g).abs() < 1e-14);
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(UniTarget::student_t(2.0).is_err());
        assert!(UniTarget::log_inv_gamma(0.5, 1.0).is_err());
        assert!(UniTarget::skew_normal(0.0, 0.0, 1.0).is_err());
    }
}
