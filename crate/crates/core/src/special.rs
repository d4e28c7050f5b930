//! Scalar special functions: stable logistic helpers, normal tails,
//! digamma/trigamma and the principal branch of Lambert W.

use crate::error::{Error, Result};
use std::f64::consts::{E, PI};

pub use statrs::function::gamma::ln_gamma;

/// log(1 + e^x) without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Scaled complementary error function exp(x²)·erfc(x).
pub fn erfcx(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 * (x * x).exp() - erfcx(-x);
    }
    if x < 20.0 {
        return (x * x).exp() * statrs::function::erf::erfc(x);
    }
    // asymptotic series, terms shrink fast for x ≥ 20
    let x2 = x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..12 {
        term *= -((2 * k - 1) as f64) / (2.0 * x2);
        sum += term;
    }
    sum / (x * PI.sqrt())
}

/// log Φ(x), accurate far into the lower tail.
pub fn norm_logcdf(x: f64) -> f64 {
    if x > -5.0 {
        norm_cdf(x).ln()
    } else {
        let u = -x / std::f64::consts::SQRT_2;
        (0.5 * erfcx(u)).ln() - u * u
    }
}

/// Inverse Mills ratio φ(x)/Φ(x).
pub fn mills(x: f64) -> f64 {
    if x > -5.0 {
        norm_pdf(x) / norm_cdf(x)
    } else {
        (2.0 / PI).sqrt() / erfcx(-x / std::f64::consts::SQRT_2)
    }
}

pub fn digamma(mut x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let r = 1.0 / (x * x);
    acc + x.ln() - 0.5 / x
        - r * (1.0 / 12.0
            - r * (1.0 / 120.0
                - r * (1.0 / 252.0 - r * (1.0 / 240.0 - r * (1.0 / 132.0 - r * 691.0 / 32760.0)))))
}

pub fn trigamma(x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    let x0 = x;
    let mut x = x;
    let mut shifts = 0usize;
    while x < 20.0 {
        x += 1.0;
        shifts += 1;
    }
    let r = 1.0 / (x * x);
    let mut acc = 1.0 / x
        + r / 2.0
        + (1.0 / x)
            * r
            * (1.0 / 6.0
                - r * (1.0 / 30.0 - r * (1.0 / 42.0 - r * (1.0 / 30.0 - r * 5.0 / 66.0))));
    // smallest terms first
    for k in (0..shifts).rev() {
        let y = x0 + k as f64;
        acc += 1.0 / (y * y);
    }
    acc
}

/// Principal branch W₀ via Halley iteration.
pub fn lambert_w0(x: f64) -> Result<f64> {
    let branch = -1.0 / E;
    if !(x >= branch) {
        return Err(Error::InvalidInput(format!(
            "lambert_w0 requires x >= -1/e, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let p2 = 2.0 * (E * x + 1.0);
    if p2 < 1e-24 {
        return Ok(-1.0);
    }
    let mut w = if x < -0.32 {
        let p = p2.sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < 3.0 {
        x.ln_1p()
    } else {
        let l = x.ln();
        l - l.ln()
    };
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - x;
        if f == 0.0 {
            break;
        }
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        w -= step;
        if step.abs() <= 1e-16 * (1.0 + w.abs()) {
            break;
        }
    }
    let resid = (w * w.exp() - x).abs();
    if resid > 1e-13 * x.abs().max(1.0) {
        return Err(Error::NoConvergence(format!(
            "lambert_w0({x}) residual {resid:e}"
        )));
    }
    Ok(w.max(-1.0))
}
