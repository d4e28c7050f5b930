use super::require_spd;
use crate::error::{check_len, Error, Result};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum MeanFieldDivergence {
    Kl,
    Fisher,
    Score,
    /// Diagonal weight matrix.
    Weighted(Vec<f64>),
}

/// Which side of the KKT dichotomy a coordinate of the NQP solution is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KktCase {
    /// s_i = 0 and (Hs)_i ≥ 1: the variance collapses.
    Active,
    /// s_i > 0 and (Hs)_i = 1.
    Inactive,
    NotApplicable,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeanFieldSolution {
    pub sigma_diag: Vec<f64>,
    pub mu: Vec<f64>,
    pub kkt_cases: Vec<KktCase>,
    pub divergence: MeanFieldDivergence,
}

fn validate(lambda: &DMatrix<f64>, nu: &[f64]) -> Result<()> {
    check_len(nu.len(), lambda.nrows())?;
    require_spd(lambda, "target precision")?;
    Ok(())
}

/// Σ_ii = 1/Λ_ii.
pub fn meanfield_kl(lambda: &DMatrix<f64>, nu: &[f64]) -> Result<MeanFieldSolution> {
    validate(lambda, nu)?;
    let d = nu.len();
    Ok(MeanFieldSolution {
        sigma_diag: (0..d).map(|i| 1.0 / lambda[(i, i)]).collect(),
        mu: nu.to_vec(),
        kkt_cases: vec![KktCase::NotApplicable; d],
        divergence: MeanFieldDivergence::Kl,
    })
}

/// Σ_ii = √(M_ii / Σ_j M_jj Λ_ij²) for a diagonal weight M.
pub fn meanfield_weighted(lambda: &DMatrix<f64>, nu: &[f64], m_diag: &[f64]) -> Result<MeanFieldSolution> {
    validate(lambda, nu)?;
    let d = nu.len();
    check_len(d, m_diag.len())?;
    if m_diag.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
        return Err(Error::InvalidInput("weights must be positive".into()));
    }
    let sigma_diag = (0..d)
        .map(|i| {
            let denom: f64 = (0..d).map(|j| m_diag[j] * lambda[(i, j)].powi(2)).sum();
            (m_diag[i] / denom).sqrt()
        })
        .collect();
    let divergence = if m_diag.iter().all(|&m| m == 1.0) {
        MeanFieldDivergence::Fisher
    } else {
        MeanFieldDivergence::Weighted(m_diag.to_vec())
    };
    Ok(MeanFieldSolution {
        sigma_diag,
        mu: nu.to_vec(),
        kkt_cases: vec![KktCase::NotApplicable; d],
        divergence,
    })
}

const NQP_MAX_ITER: usize = 100_000;
const KKT_TOL: f64 = 1e-8;

/// Minimizes ½ sᵀHs − 1ᵀs over s ≥ 0 for positive definite H by a
/// primal active-set method (Lawson–Hanson style). Each subproblem is an
/// exact Cholesky solve on the free set, so the result satisfies the KKT
/// conditions to rounding error.
pub fn solve_nqp(h: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = h.nrows();
    let mut s = vec![0.0; n];
    let mut free = vec![false; n];
    let mut iters = 0;
    loop {
        let hs = h * nalgebra::DVector::from_column_slice(&s);
        let enter = (0..n)
            .filter(|&i| !free[i])
            .map(|i| (i, 1.0 - hs[i]))
            .filter(|&(_, w)| w > 1e-13)
            .max_by(|a, b| a.1.total_cmp(&b.1));
        let Some((j, _)) = enter else { break };
        free[j] = true;
        loop {
            iters += 1;
            if iters > NQP_MAX_ITER {
                return Err(Error::NoConvergence("NQP active-set iterations exhausted".into()));
            }
            let idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
            let sub = DMatrix::from_fn(idx.len(), idx.len(), |a, b| h[(idx[a], idx[b])]);
            let chol = sub
                .cholesky()
                .ok_or_else(|| Error::NotPositiveDefinite("NQP Hessian restricted to the free set".into()))?;
            let z = chol.solve(&nalgebra::DVector::from_element(idx.len(), 1.0));
            if z.iter().all(|&v| v > 0.0) {
                s.iter_mut().for_each(|v| *v = 0.0);
                for (k, &i) in idx.iter().enumerate() {
                    s[i] = z[k];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (k, &i) in idx.iter().enumerate() {
                if z[k] <= 0.0 {
                    alpha = alpha.min(s[i] / (s[i] - z[k]));
                }
            }
            for (k, &i) in idx.iter().enumerate() {
                s[i] += alpha * (z[k] - s[i]);
                if s[i] <= 1e-14 {
                    s[i] = 0.0;
                    free[i] = false;
                }
            }
            if free.iter().all(|f| !f) {
                break;
            }
        }
    }
    let hs = h * nalgebra::DVector::from_column_slice(&s);
    let residual = (0..n)
        .map(|i| if s[i] > 0.0 { (hs[i] - 1.0).abs() } else { (1.0 - hs[i]).max(0.0) })
        .fold(0.0f64, f64::max);
    if residual > KKT_TOL {
        return Err(Error::NoConvergence(format!("NQP KKT residual {residual:e}")));
    }
    Ok(s)
}

/// Mean-field score-based divergence optimum: s solves the NQP with
/// H_ij = Λ_ij² / (Λ_ii Λ_jj) and Σ_ii = s_i / Λ_ii.
pub fn meanfield_sd_nqp(lambda: &DMatrix<f64>, nu: &[f64]) -> Result<MeanFieldSolution> {
    validate(lambda, nu)?;
    let d = nu.len();
    let h = DMatrix::from_fn(d, d, |i, j| lambda[(i, j)].powi(2) / (lambda[(i, i)] * lambda[(j, j)]));
    let s = solve_nqp(&h)?;
    Ok(MeanFieldSolution {
        sigma_diag: (0..d).map(|i| s[i] / lambda[(i, i)]).collect(),
        mu: nu.to_vec(),
        kkt_cases: s.iter().map(|&v| if v > 0.0 { KktCase::Inactive } else { KktCase::Active }).collect(),
        divergence: MeanFieldDivergence::Score,
    })
}

/// Per-coordinate comparison of the mean-field optima.
#[derive(Debug, Clone, Serialize)]
pub struct OrderingReport {
    pub sigma_kl: Vec<f64>,
    pub sigma_weighted: Vec<f64>,
    pub sigma_fisher: Vec<f64>,
    pub sigma_score: Vec<f64>,
    pub kkt_cases: Vec<KktCase>,
    /// Σ^M_ii ≤ Σ^KL_ii for every i.
    pub weighted_le_kl: bool,
    /// Σ^S_ii ≤ Σ^KL_ii for every i.
    pub score_le_kl: bool,
    pub has_offdiagonal: bool,
    pub weighted_strict_somewhere: bool,
    pub score_strict_somewhere: bool,
    /// Σ^S_ii ≤ Σ^F_ii √(Σ_j Λ_ij²) / Λ_ii for every i.
    pub row_norm_bound: bool,
    pub diagonally_dominant: bool,
    /// Σ^S_ii / Σ^F_ii ≤ √2 for every i (only meaningful if dominant).
    pub sqrt2_bound: bool,
    /// Largest KKT residual of the NQP solution.
    pub kkt_residual: f64,
}

impl OrderingReport {
    pub fn all_hold(&self) -> bool {
        let strict = !self.has_offdiagonal || (self.weighted_strict_somewhere && self.score_strict_somewhere);
        self.weighted_le_kl
            && self.score_le_kl
            && strict
            && self.row_norm_bound
            && (!self.diagonally_dominant || self.sqrt2_bound)
            && self.kkt_residual <= KKT_TOL
    }
}

const ORDER_MARGIN: f64 = 1e-10;

pub fn ordering_check(lambda: &DMatrix<f64>, m_diag: &[f64]) -> Result<OrderingReport> {
    let d = lambda.nrows();
    let nu = vec![0.0; d];
    let kl = meanfield_kl(lambda, &nu)?;
    let wm = meanfield_weighted(lambda, &nu, m_diag)?;
    let fi = meanfield_weighted(lambda, &nu, &vec![1.0; d])?;
    let sd = meanfield_sd_nqp(lambda, &nu)?;
    let le = |a: f64, b: f64| a <= b + ORDER_MARGIN * b.max(1.0);
    let lt = |a: f64, b: f64| a < b - ORDER_MARGIN * b.max(1.0);
    let mut has_off = false;
    let mut dominant = true;
    let mut row_bound = true;
    let mut sqrt2 = true;
    let mut kkt_residual = 0.0f64;
    for i in 0..d {
        let mut off_abs = 0.0;
        let mut row_sq = 0.0;
        let mut hs = 0.0;
        let lii = lambda[(i, i)];
        for j in 0..d {
            let v = lambda[(i, j)];
            row_sq += v * v;
            hs += v * v / (lii * lambda[(j, j)]) * sd.sigma_diag[j] * lambda[(j, j)];
            if j != i {
                off_abs += v.abs();
                has_off |= v != 0.0;
            }
        }
        dominant &= lii >= off_abs;
        let (s, f) = (sd.sigma_diag[i], fi.sigma_diag[i]);
        row_bound &= le(s, f * row_sq.sqrt() / lii);
        sqrt2 &= le(s, f * std::f64::consts::SQRT_2);
        let r = if s > 0.0 { (hs - 1.0).abs() } else { (1.0 - hs).max(0.0) };
        kkt_residual = kkt_residual.max(r);
    }
    let all = |a: &[f64], b: &[f64], f: &dyn Fn(f64, f64) -> bool| a.iter().zip(b).all(|(x, y)| f(*x, *y));
    let any = |a: &[f64], b: &[f64], f: &dyn Fn(f64, f64) -> bool| a.iter().zip(b).any(|(x, y)| f(*x, *y));
    Ok(OrderingReport {
        weighted_le_kl: all(&wm.sigma_diag, &kl.sigma_diag, &le),
        score_le_kl: all(&sd.sigma_diag, &kl.sigma_diag, &le),
        weighted_strict_somewhere: any(&wm.sigma_diag, &kl.sigma_diag, &lt),
        score_strict_somewhere: any(&sd.sigma_diag, &kl.sigma_diag, &lt),
        has_offdiagonal: has_off,
        row_norm_bound: row_bound,
        diagonally_dominant: dominant,
        sqrt2_bound: sqrt2,
        kkt_residual,
        kkt_cases: sd.kkt_cases,
        sigma_kl: kl.sigma_diag,
        sigma_weighted: wm.sigma_diag,
        sigma_fisher: fi.sigma_diag,
        sigma_score: sd.sigma_diag,
    })
}

/// Number of coordinates with Σ^S_ii ≤ Σ^F_ii for the 3-d family
/// Λ = [[1,a,b],[a,1,c],[b,c,1]].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RegionCase {
    All,
    Two,
    One,
    None,
    Indefinite,
}

impl RegionCase {
    pub fn label(self) -> &'static str {
        match self {
            RegionCase::All => "all",
            RegionCase::Two => "two",
            RegionCase::One => "one",
            RegionCase::None => "none",
            RegionCase::Indefinite => "indefinite",
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RegionRow {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub case: RegionCase,
}

fn region_case(a: f64, b: f64, c: f64) -> Result<RegionCase> {
    let lambda = DMatrix::from_row_slice(3, 3, &[1.0, a, b, a, 1.0, c, b, c, 1.0]);
    if lambda.clone().cholesky().is_none() {
        return Ok(RegionCase::Indefinite);
    }
    let nu = [0.0; 3];
    let f = meanfield_weighted(&lambda, &nu, &[1.0; 3])?;
    let s = meanfield_sd_nqp(&lambda, &nu)?;
    let count = (0..3)
        .filter(|&i| s.sigma_diag[i] <= f.sigma_diag[i] * (1.0 + 1e-12))
        .count();
    Ok(match count {
        3 => RegionCase::All,
        2 => RegionCase::Two,
        1 => RegionCase::One,
        _ => RegionCase::None,
    })
}

/// Classifies every (a, b) on a grid over [−1, 1]² with `steps` intervals
/// per axis, for each c.
pub fn region_sweep(c_values: &[f64], steps: usize) -> Result<Vec<RegionRow>> {
    if steps == 0 {
        return Err(Error::InvalidInput("grid needs at least one step".into()));
    }
    let coord = |i: usize| 2.0 * i as f64 / steps as f64 - 1.0;
    let cells: Vec<(f64, f64, f64)> = c_values
        .iter()
        .flat_map(|&c| (0..=steps).flat_map(move |i| (0..=steps).map(move |j| (coord(i), coord(j), c))))
        .collect();
    cells
        .par_iter()
        .map(|&(a, b, c)| Ok(RegionRow { a, b, c, case: region_case(a, b, c)? }))
        .collect()
}

pub fn write_region_csv(rows: &[RegionRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "a,b,c,case")?;
    for r in rows {
        writeln!(out, "{:.4},{:.4},{:.4},{}", r.a, r.b, r.c, r.case.label())?;
    }
    Ok(())
}
