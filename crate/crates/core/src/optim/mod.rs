//! Stochastic optimizers for Gaussian variational families: the
//! reparameterization-trick methods (KLD, FDr, SDr), the batch-approximation
//! methods (FDb, SDb), batch-and-match, and natural-gradient SDb.

mod adadelta;
mod alg1;
mod alg2;
mod bam;
mod state;

pub use adadelta::Adadelta;
pub use alg1::{alg1_gradient, step_alg1, Alg1Gradient};
pub use alg2::{alg2_gradient, step_alg2, Alg2Gradient, BatchStats};
pub use bam::{bam_step, bam_update, sdb_natural_step, sdb_natural_step_batch, MAX_CONDITION};
pub use state::VariationalState;

use crate::error::{Error, Result};
use crate::linalg::{CholFactor, PatternDescriptor, SparsityPattern};
use crate::targets::TargetModel;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

/// Consecutive rejected steps after which a fit is abandoned.
pub const MAX_CONSECUTIVE_REJECTIONS: usize = 50;
/// Number of recent window averages in the stopping-rule regression.
pub const STOP_POINTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "KLD")]
    Kld,
    #[serde(rename = "FDr")]
    Fdr,
    #[serde(rename = "SDr")]
    Sdr,
    #[serde(rename = "FDb")]
    Fdb,
    #[serde(rename = "SDb")]
    Sdb,
    #[serde(rename = "BaM")]
    Bam,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Kld, Method::Fdr, Method::Sdr, Method::Fdb, Method::Sdb, Method::Bam];

    pub fn label(self) -> &'static str {
        match self {
            Method::Kld => "KLD",
            Method::Fdr => "FDr",
            Method::Sdr => "SDr",
            Method::Fdb => "FDb",
            Method::Sdb => "SDb",
            Method::Bam => "BaM",
        }
    }

    pub fn is_batch(self) -> bool {
        matches!(self, Method::Fdb | Method::Sdb | Method::Bam)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidInput(format!("unknown method '{s}' (expected one of KLD, FDr, SDr, FDb, SDb, BaM)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub method: Method,
    /// Batch size for FDb, SDb and BaM; ignored otherwise.
    pub batch_size: usize,
    pub max_iter: usize,
    /// Iterations per lower-bound average.
    pub window: usize,
    pub adadelta_decay: f64,
    pub adadelta_eps: f64,
    /// Initial μ = init_mu · 1.
    pub init_mu: f64,
    /// Initial T = init_t · I.
    pub init_t: f64,
    /// Stop once the regression slope of the last five averages is negative.
    pub use_stopping_rule: bool,
    pub seed: u64,
}

impl FitConfig {
    pub fn new(method: Method, seed: u64) -> Self {
        FitConfig {
            method,
            batch_size: if method == Method::Bam { 100 } else { 5 },
            max_iter: 50_000,
            window: 1000,
            adadelta_decay: 0.95,
            adadelta_eps: 1e-6,
            init_mu: 0.0,
            init_t: 1.0,
            use_stopping_rule: true,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.window == 0 || self.max_iter == 0 {
            return Err(Error::InvalidInput("window and max_iter must be positive".into()));
        }
        if self.method.is_batch() && self.batch_size < 2 {
            return Err(Error::InvalidInput(format!("{} needs batch_size ≥ 2", self.method)));
        }
        if !(self.adadelta_decay > 0.0 && self.adadelta_decay < 1.0) || !(self.adadelta_eps > 0.0) {
            return Err(Error::InvalidInput("Adadelta needs decay in (0, 1) and eps > 0".into()));
        }
        if !(self.init_t > 0.0) || !self.init_mu.is_finite() {
            return Err(Error::InvalidInput("init_t must be positive and init_mu finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The fitted slope of the last five lower-bound averages turned negative.
    Plateau,
    MaxIter,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub method: Method,
    pub seed: u64,
    pub config: FitConfig,
    pub dim: usize,
    pub mu: Vec<f64>,
    pub pattern: PatternDescriptor,
    /// Values of T on the pattern slots, column-major.
    pub t_values: Vec<f64>,
    /// Lower-bound averages per window; the last entry may cover a partial window.
    pub lower_bound_trace: Vec<f64>,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub rejected_steps: usize,
    /// Wall-clock time; left out of the JSON so reruns are byte-identical.
    #[serde(skip)]
    pub elapsed: Duration,
}

impl FitResult {
    pub fn factor(&self) -> Result<CholFactor> {
        let p = Arc::new(SparsityPattern::from_descriptor(&self.pattern)?);
        CholFactor::from_values(p, self.t_values.clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("FitResult JSON: {e}")))
    }
}

/// OLS slope of `ys` against 0, 1, 2, ….
pub fn ols_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let xbar = (n - 1.0) / 2.0;
    let ybar = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - xbar;
        sxy += dx * (y - ybar);
        sxx += dx * dx;
    }
    sxy / sxx
}

fn recoverable(e: &Error) -> bool {
    matches!(e, Error::NonFinite(_) | Error::SingularFactor { .. } | Error::IllConditioned(_) | Error::NotPositiveDefinite(_))
}

/// Window bookkeeping shared by all methods.
struct Progress {
    window: usize,
    stopping: bool,
    trace: Vec<f64>,
    sum: f64,
    count: usize,
    rejected: usize,
    consecutive: usize,
}

impl Progress {
    fn record(&mut self, it: usize, outcome: Result<f64>) -> Result<bool> {
        match outcome {
            Ok(lb) => {
                self.consecutive = 0;
                self.sum += lb;
                self.count += 1;
            }
            Err(e) if recoverable(&e) => {
                self.rejected += 1;
                self.consecutive += 1;
                if self.consecutive > MAX_CONSECUTIVE_REJECTIONS {
                    return Err(Error::NoConvergence(format!(
                        "{} consecutive rejected steps at iteration {}; last: {e}",
                        self.consecutive,
                        it + 1
                    )));
                }
            }
            Err(e) => return Err(e),
        }
        if (it + 1) % self.window == 0 {
            self.flush();
            let n = self.trace.len();
            if self.stopping && n >= STOP_POINTS && ols_slope(&self.trace[n - STOP_POINTS..]) < 0.0 {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn flush(&mut self) {
        if self.count > 0 {
            self.trace.push(self.sum / self.count as f64);
        } else {
            self.trace.push(f64::NAN);
        }
        self.sum = 0.0;
        self.count = 0;
    }
}

/// Runs `config.method` on `model` until the stopping rule fires or
/// `max_iter` is reached. Steps with non-finite values are rejected and
/// the previous state kept; more than 50 in a row abort the fit.
pub fn fit(model: &dyn TargetModel, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut prog = Progress {
        window: config.window,
        stopping: config.use_stopping_rule,
        trace: Vec::new(),
        sum: 0.0,
        count: 0,
        rejected: 0,
        consecutive: 0,
    };
    let mut iterations = 0;
    let mut stop_reason = StopReason::MaxIter;
    let (mu, factor) = if config.method == Method::Bam {
        let d = model.dim();
        let mut mu = vec![config.init_mu; d];
        let mut sigma = DMatrix::identity(d, d) / (config.init_t * config.init_t);
        for it in 0..config.max_iter {
            iterations = it + 1;
            let outcome = bam_step(&mu, &sigma, model, config.batch_size, it + 1, &mut rng).and_then(|(m, s)| {
                let lb = dense_lower_bound(model, &mu, &sigma, &mut rng)?;
                mu = m;
                sigma = s;
                Ok(lb)
            });
            if prog.record(it, outcome)? {
                stop_reason = StopReason::Plateau;
                break;
            }
        }
        let pattern = Arc::new(SparsityPattern::dense(d)?);
        let omega = crate::analytics::require_spd(&sigma, "BaM covariance")?.inverse();
        (mu, CholFactor::from_precision(pattern, &omega)?)
    } else {
        let mut state = VariationalState::init(model.pattern(), config.init_mu, config.init_t, config.adadelta_decay, config.adadelta_eps)?;
        for it in 0..config.max_iter {
            iterations = it + 1;
            let outcome = match config.method {
                Method::Kld | Method::Fdr | Method::Sdr => step_alg1(&mut state, model, config.method, &mut rng),
                _ => step_alg2(&mut state, model, config.method, config.batch_size, &mut rng),
            };
            if prog.record(it, outcome)? {
                stop_reason = StopReason::Plateau;
                break;
            }
        }
        (state.mu, state.factor)
    };
    if iterations % config.window != 0 {
        prog.flush();
    }
    Ok(FitResult {
        method: config.method,
        seed: config.seed,
        config: config.clone(),
        dim: mu.len(),
        mu,
        pattern: factor.pattern().descriptor(),
        t_values: factor.values().to_vec(),
        lower_bound_trace: prog.trace,
        iterations,
        stop_reason,
        rejected_steps: prog.rejected,
        elapsed: start.elapsed(),
    })
}

/// log h(θ) − log q(θ) for one fresh θ ~ N(μ, Σ).
fn dense_lower_bound(model: &dyn TargetModel, mu: &[f64], sigma: &DMatrix<f64>, rng: &mut impl Rng) -> Result<f64> {
    let d = mu.len();
    let l = crate::analytics::require_spd(sigma, "variational covariance")?.l();
    let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let theta = DVector::from_column_slice(mu) + &l * &z;
    let log_q = -0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln() - l.diagonal().iter().map(|v| v.ln()).sum::<f64>() - 0.5 * z.norm_squared();
    let lb = model.log_h(theta.as_slice())? - log_q;
    if lb.is_finite() {
        Ok(lb)
    } else {
        Err(Error::NonFinite("lower bound".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::GaussianTarget;

    #[test]
    fn slope_of_a_line() {
        assert!((ols_slope(&[1.0, 3.0, 5.0, 7.0, 9.0]) - 2.0).abs() < 1e-15);
        assert!(ols_slope(&[5.0, 4.0, 4.5, 4.2, 4.1]) < 0.0);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.label().to_lowercase().parse::<Method>().unwrap(), m);
        }
        assert!("ADVI".parse::<Method>().is_err());
    }

    #[test]
    fn trace_length_is_ceiling_of_iterations_over_window() {
        let target = GaussianTarget::new(vec![0.0, 1.0], DMatrix::identity(2, 2)).unwrap();
        let mut cfg = FitConfig::new(Method::Kld, 1);
        cfg.max_iter = 2500;
        cfg.use_stopping_rule = false;
        let r = fit(&target, &cfg).unwrap();
        assert_eq!((r.iterations, r.lower_bound_trace.len()), (2500, 3));
        assert_eq!(r.stop_reason, StopReason::MaxIter);
    }

    #[test]
    fn same_seed_same_json() {
        let target = GaussianTarget::new(vec![0.5, -1.0, 2.0], DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.2, 0.0, 0.2, 3.0])).unwrap();
        for m in [Method::Sdb, Method::Sdr] {
            let mut cfg = FitConfig::new(m, 99);
            cfg.max_iter = 3000;
            let a = fit(&target, &cfg).unwrap().to_json();
            let b = fit(&target, &cfg).unwrap().to_json();
            assert_eq!(a, b);
            let back = FitResult::from_json(&a).unwrap();
            assert_eq!(back.to_json(), a);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let target = GaussianTarget::new(vec![0.0], DMatrix::identity(1, 1)).unwrap();
        let mut cfg = FitConfig::new(Method::Sdb, 0);
        cfg.batch_size = 1;
        assert!(fit(&target, &cfg).is_err());
        let mut cfg = FitConfig::new(Method::Kld, 0);
        cfg.window = 0;
        assert!(fit(&target, &cfg).is_err());
    }
}
