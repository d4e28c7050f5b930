//! Comparison of a fitted Gaussian against reference posterior draws:
//! MMD-based M*, and marginal mean, mode and s.d. discrepancies.

mod marginal;
mod mmd;

pub use marginal::{marginal_stats, silverman_bandwidth, MarginalStats, KDE_GRID, KDE_SPAN_SD};
pub use mmd::{median_heuristic, mmd2_u, mmd2_u_brute, mmd_mstar, mstar, MSTAR_OFFSET};

use crate::error::{check_len, Error, Result};
use crate::optim::FitResult;
use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;
use std::path::Path;

/// Posterior draws, one per row.
#[derive(Debug, Clone)]
pub struct ReferenceSamples {
    pub names: Vec<String>,
    pub draws: DMatrix<f64>,
    pub provenance: String,
}

impl ReferenceSamples {
    pub fn new(names: Vec<String>, draws: DMatrix<f64>, provenance: impl Into<String>) -> Result<Self> {
        check_len(draws.ncols(), names.len())?;
        if draws.nrows() == 0 {
            return Err(Error::InvalidInput("reference samples are empty".into()));
        }
        if let Some(k) = draws.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("reference draw {} column {}", k % draws.nrows(), k / draws.nrows())));
        }
        Ok(ReferenceSamples {
            names,
            draws,
            provenance: provenance.into(),
        })
    }

    /// CSV with a header row of variable names and one draw per line.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let (names, rows) = crate::data::read_numeric_csv(path)?;
        let d = names.len();
        let m = rows.len();
        let draws = DMatrix::from_fn(m, d, |i, j| rows[i][j]);
        Self::new(names, draws, path.display().to_string())
    }

    pub fn dim(&self) -> usize {
        self.draws.ncols()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareSettings {
    pub replicates: usize,
    /// Draws per set in each MMD evaluation.
    pub m: usize,
    pub seed: u64,
}

impl Default for CompareSettings {
    fn default() -> Self {
        CompareSettings {
            replicates: 50,
            m: 1000,
            seed: 0,
        }
    }
}

/// Per-coordinate discrepancies and replicate M* values. Ratios are `None`
/// where the reference s.d. is zero.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub names: Vec<String>,
    pub reference: Vec<MarginalStats>,
    pub q_mean: Vec<f64>,
    pub q_sd: Vec<f64>,
    /// |μ − μ*| / σ*
    pub mean_error: Vec<Option<f64>>,
    /// |μ − m*| / σ*
    pub mode_error: Vec<Option<f64>>,
    /// σ / σ*
    pub sd_ratio: Vec<Option<f64>>,
    /// Raw MMD²_u per replicate; may be slightly negative.
    pub mmd2: Vec<f64>,
    pub mstar: Vec<f64>,
    pub mstar_mean: f64,
    pub mstar_sd: f64,
    pub bandwidth: f64,
    pub settings: CompareSettings,
    pub provenance: String,
    pub mode_method: String,
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

/// Draws `m` rows from q = N(μ, (TTᵀ)⁻¹) and `m` reference rows without
/// replacement, using stream `r` of the seeded generator.
fn replicate_sets(fit: &FitResult, reference: &ReferenceSamples, m: usize, seed: u64, r: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    let factor = fit.factor()?;
    let d = fit.dim;
    let mut q = DMatrix::zeros(m, d);
    for i in 0..m {
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let u = factor.solve_upper_transpose(&z)?;
        for j in 0..d {
            q[(i, j)] = fit.mu[j] + u[j];
        }
    }
    let idx = sample_indices(&mut rng, reference.draws.nrows(), m);
    let g = reference.draws.select_rows(idx.iter().collect::<Vec<_>>().iter());
    Ok((q, g))
}

/// Compares a fit with reference draws. M* is computed on `replicates`
/// independent pairs of m-draw sets; the RBF bandwidth is the median
/// pairwise distance of the first replicate's pooled draws.
pub fn compare(fit: &FitResult, reference: &ReferenceSamples, settings: &CompareSettings) -> Result<ComparisonReport> {
    let d = fit.dim;
    check_len(d, reference.dim())?;
    let m = settings.m;
    if m < 2 || reference.draws.nrows() < m {
        return Err(Error::InvalidInput(format!(
            "need 2 ≤ m ≤ reference draws, got m = {m} with {} draws",
            reference.draws.nrows()
        )));
    }
    if settings.replicates == 0 {
        return Err(Error::InvalidInput("at least one replicate is required".into()));
    }
    let stats: Vec<MarginalStats> = (0..d)
        .into_par_iter()
        .map(|j| marginal_stats(reference.draws.column(j).as_slice()))
        .collect::<Result<_>>()?;
    let q_sd: Vec<f64> = fit.factor()?.covariance_diag()?.iter().map(|v| v.sqrt()).collect();
    let (q0, g0) = replicate_sets(fit, reference, m, settings.seed, 0)?;
    let bandwidth = median_heuristic(&q0, &g0)?;
    let mmd2: Vec<f64> = (0..settings.replicates)
        .into_par_iter()
        .map(|r| {
            let (q, g) = replicate_sets(fit, reference, m, settings.seed, r)?;
            mmd2_u(&q, &g, bandwidth)
        })
        .collect::<Result<_>>()?;
    let mstar_vals: Vec<f64> = mmd2.iter().map(|&v| mstar(v)).collect();
    let n = mstar_vals.len() as f64;
    let mstar_mean = mstar_vals.iter().sum::<f64>() / n;
    let mstar_sd = if mstar_vals.len() > 1 {
        (mstar_vals.iter().map(|v| (v - mstar_mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(ComparisonReport {
        names: reference.names.clone(),
        mean_error: (0..d).map(|j| ratio((fit.mu[j] - stats[j].mean).abs(), stats[j].sd)).collect(),
        mode_error: (0..d).map(|j| ratio((fit.mu[j] - stats[j].mode).abs(), stats[j].sd)).collect(),
        sd_ratio: (0..d).map(|j| ratio(q_sd[j], stats[j].sd)).collect(),
        reference: stats,
        q_mean: fit.mu.clone(),
        q_sd,
        mmd2,
        mstar: mstar_vals,
        mstar_mean,
        mstar_sd,
        bandwidth,
        settings: settings.clone(),
        provenance: reference.provenance.clone(),
        mode_method: format!("gaussian KDE, Silverman bandwidth, {KDE_GRID}-point grid over mean ± {KDE_SPAN_SD} sd"),
    })
}

impl ComparisonReport {
    /// One row per variable; undefined ratios are written as NA.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "variable,ref_mean,ref_mode,ref_sd,q_mean,q_sd,mean_error,mode_error,sd_ratio")?;
        let f = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.6}"));
        for j in 0..self.names.len() {
            let r = &self.reference[j];
            writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{}",
                self.names[j],
                r.mean,
                r.mode,
                r.sd,
                self.q_mean[j],
                self.q_sd[j],
                f(self.mean_error[j]),
                f(self.mode_error[j]),
                f(self.sd_ratio[j])
            )?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }
}
