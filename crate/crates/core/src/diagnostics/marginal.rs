use crate::error::{check_all_finite, Error, Result};
use serde::Serialize;
use std::f64::consts::PI;

pub const KDE_GRID: usize = 512;
pub const KDE_SPAN_SD: f64 = 4.0;

/// Sample mean, KDE mode and sample standard deviation of one coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginalStats {
    pub mean: f64,
    pub mode: f64,
    pub sd: f64,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule 0.9 · min(sd, IQR/1.34) · n^{−1/5}, falling back to sd
/// when the IQR is zero.
pub fn silverman_bandwidth(xs: &[f64], sd: f64) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * (xs.len() as f64).powf(-0.2)
}

/// Mean and s.d. are sample statistics (n − 1 divisor). The mode is the
/// argmax of a Gaussian KDE on 512 points over mean ± 4 s.d.
pub fn marginal_stats(xs: &[f64]) -> Result<MarginalStats> {
    if xs.is_empty() {
        return Err(Error::InvalidInput("no draws".into()));
    }
    check_all_finite(xs, "reference draws")?;
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let sd = var.sqrt();
    if !(sd > 0.0) {
        return Ok(MarginalStats { mean, mode: mean, sd: 0.0 });
    }
    let bw = silverman_bandwidth(xs, sd);
    let (lo, hi) = (mean - KDE_SPAN_SD * sd, mean + KDE_SPAN_SD * sd);
    let norm = 1.0 / (n * bw * (2.0 * PI).sqrt());
    let mut best = (lo, f64::NEG_INFINITY);
    for k in 0..KDE_GRID {
        let g = lo + (hi - lo) * k as f64 / (KDE_GRID - 1) as f64;
        let dens = norm * xs.iter().map(|x| (-0.5 * ((g - x) / bw).powi(2)).exp()).sum::<f64>();
        if dens > best.1 {
            best = (g, dens);
        }
    }
    Ok(MarginalStats { mean, mode: best.0, sd })
}
