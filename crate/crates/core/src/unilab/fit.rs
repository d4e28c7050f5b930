use super::objective::objective_and_grad;
use super::{UniDivergence, UniTarget};
use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_lower_tail, integrate_upper_tail};
use crate::special::norm_pdf;
use serde::Serialize;

/// Lower bound on σ² during optimization; a fit that ends here is
/// reported as collapsed.
pub const SIGMA_SQ_FLOOR: f64 = 1e-12;
const GRAD_TOL: f64 = 1e-8;
/// BFGS hands over to the Newton polish here; closer in, quadrature noise
/// in the gradient stalls the line search.
const BFGS_TOL: f64 = 1e-6;
/// Starts reaching σ²/σ*² above this, or a mean √ESCAPE_RATIO·σ* away
/// from μ*, are treated as having escaped to infinity (FD decays to its
/// infimum there for heavy-tailed targets).
pub const ESCAPE_RATIO: f64 = 1e4;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct UniMetrics {
    /// |μ − μ*| / σ*
    pub mean_error: f64,
    /// |μ − m*| / σ*
    pub mode_error: f64,
    /// σ² / σ*²
    pub variance_ratio: f64,
    /// 1 − IAE/2, in [0, 1].
    pub accuracy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct UniFit {
    pub target: UniTarget,
    pub divergence: UniDivergence,
    pub mu: f64,
    pub sigma_sq: f64,
    pub objective: f64,
    /// Max-norm of the gradient in (μ, log σ²) at the returned point.
    pub grad_norm: f64,
    pub collapsed: bool,
    /// Starts discarded because σ² ran off past `ESCAPE_RATIO`·σ*².
    pub escaped_starts: usize,
    pub metrics: UniMetrics,
}

/// Objective and gradient in x = (μ, log σ²), with log σ² clamped at the floor.
fn eval(target: &UniTarget, div: UniDivergence, x: [f64; 2]) -> Result<(f64, [f64; 2])> {
    let eta = x[1].max(SIGMA_SQ_FLOOR.ln());
    let sigma = (0.5 * eta).exp();
    let [f, dmu, dsig] = objective_and_grad(target, div, x[0], sigma)?;
    if !f.is_finite() {
        return Err(Error::NonFinite("objective".into()));
    }
    Ok((f, [dmu, 0.5 * sigma * dsig]))
}

/// Projected gradient norm: at the σ² floor a positive log σ² derivative
/// means the bound is active.
fn proj_norm(x: [f64; 2], g: [f64; 2]) -> f64 {
    let at_floor = x[1] <= SIGMA_SQ_FLOOR.ln() + 1e-12;
    let g1 = if at_floor && g[1] > 0.0 { 0.0 } else { g[1] };
    g[0].abs().max(g1.abs())
}

struct Local {
    x: [f64; 2],
    f: f64,
    g: [f64; 2],
}

/// Dense BFGS with Armijo backtracking, then Newton polishing with a
/// finite-difference Hessian of the analytic gradient.
/// A run is abandoned as soon as `escaped` holds.
fn minimize(target: &UniTarget, div: UniDivergence, x0: [f64; 2], escaped: impl Fn([f64; 2]) -> bool) -> Result<Local> {
    let floor = SIGMA_SQ_FLOOR.ln();
    let (mut f, mut g) = eval(target, div, x0)?;
    let mut x = x0;
    let mut h = [[1.0, 0.0], [0.0, 1.0]];
    for _ in 0..2000 {
        if proj_norm(x, g) < BFGS_TOL {
            break;
        }
        let mut p = [-(h[0][0] * g[0] + h[0][1] * g[1]), -(h[1][0] * g[0] + h[1][1] * g[1])];
        if p[0] * g[0] + p[1] * g[1] >= 0.0 {
            h = [[1.0, 0.0], [0.0, 1.0]];
            p = [-g[0], -g[1]];
        }
        let big = p[0].abs().max(p[1].abs());
        if big > 2.0 {
            p = [2.0 * p[0] / big, 2.0 * p[1] / big];
        }
        let slope = p[0] * g[0] + p[1] * g[1];
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn = [x[0] + alpha * p[0], (x[1] + alpha * p[1]).max(floor)];
            if let Ok((fn_, gn)) = eval(target, div, xn) {
                if fn_ <= f + 1e-4 * alpha * slope {
                    accepted = Some((xn, fn_, gn));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else { break };
        let s = [xn[0] - x[0], xn[1] - x[1]];
        let y = [gn[0] - g[0], gn[1] - g[1]];
        let sy = s[0] * y[0] + s[1] * y[1];
        if sy > 1e-14 * (s[0].hypot(s[1]) * y[0].hypot(y[1])) {
            let hy = [h[0][0] * y[0] + h[0][1] * y[1], h[1][0] * y[0] + h[1][1] * y[1]];
            let yhy = y[0] * hy[0] + y[1] * hy[1];
            for i in 0..2 {
                for j in 0..2 {
                    h[i][j] += (sy + yhy) * s[i] * s[j] / (sy * sy) - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
        x = xn;
        f = fn_;
        g = gn;
        if escaped(x) {
            return Ok(Local { x, f, g });
        }
    }
    // Newton polish
    for _ in 0..30 {
        if proj_norm(x, g) < GRAD_TOL {
            break;
        }
        let mut hess = [[0.0; 2]; 2];
        for k in 0..2 {
            let step = 1e-5 * (1.0 + x[k].abs());
            let mut xp = x;
            let mut xm = x;
            xp[k] += step;
            xm[k] -= step;
            let (_, gp) = eval(target, div, xp)?;
            let (_, gm) = eval(target, div, xm)?;
            for i in 0..2 {
                hess[i][k] = (gp[i] - gm[i]) / (2.0 * step);
            }
        }
        let sym = 0.5 * (hess[0][1] + hess[1][0]);
        let det = hess[0][0] * hess[1][1] - sym * sym;
        if !(det > 0.0 && hess[0][0] > 0.0) {
            break;
        }
        let dx = [(hess[1][1] * g[0] - sym * g[1]) / det, (hess[0][0] * g[1] - sym * g[0]) / det];
        let xn = [x[0] - dx[0], (x[1] - dx[1]).max(floor)];
        let Ok((fn_, gn)) = eval(target, div, xn) else { break };
        if proj_norm(xn, gn) >= proj_norm(x, g) {
            break;
        }
        x = xn;
        f = fn_;
        g = gn;
    }
    Ok(Local { x, f, g })
}

/// Minimizes the divergence over N(μ, σ²) from 24 starts: 8 values of
/// log σ² spanning log σ*² + [−6, 2] and μ ∈ {μ* − 2σ*, μ*, μ* + 2σ*}.
/// Returns the converged interior local minimum with the lowest objective.
pub fn uni_fit(target: &UniTarget, div: UniDivergence) -> Result<UniFit> {
    let mo = target.moments()?;
    let sd = mo.var.sqrt();
    let escape = mo.var.ln() + ESCAPE_RATIO.ln();
    let escaped = |x: [f64; 2]| x[1] > escape || (x[0] - mo.mean).abs() > ESCAPE_RATIO.sqrt() * sd;
    let mut escaped_starts = 0;
    let mut best: Option<Local> = None;
    for k in 0..8 {
        let eta = mo.var.ln() - 6.0 + 8.0 * k as f64 / 7.0;
        for off in [-2.0, 0.0, 2.0] {
            let Ok(loc) = minimize(target, div, [mo.mean + off * sd, eta], escaped) else { continue };
            if escaped(loc.x) {
                escaped_starts += 1;
                continue;
            }
            if proj_norm(loc.x, loc.g) >= GRAD_TOL {
                continue;
            }
            if best.as_ref().is_none_or(|b| loc.f < b.f) {
                best = Some(loc);
            }
        }
    }
    let loc = best.ok_or_else(|| Error::NoConvergence(format!("no start converged for {} on {target:?}", div.label())))?;
    let sigma_sq = loc.x[1].max(SIGMA_SQ_FLOOR.ln()).exp();
    let metrics = UniMetrics {
        mean_error: (loc.x[0] - mo.mean).abs() / sd,
        mode_error: (loc.x[0] - mo.mode).abs() / sd,
        variance_ratio: sigma_sq / mo.var,
        accuracy: accuracy(loc.x[0], sigma_sq, target)?,
    };
    Ok(UniFit {
        target: *target,
        divergence: div,
        mu: loc.x[0],
        sigma_sq,
        objective: loc.f,
        grad_norm: proj_norm(loc.x, loc.g),
        collapsed: sigma_sq <= SIGMA_SQ_FLOOR * (1.0 + 1e-9),
        escaped_starts,
        metrics,
    })
}

/// 1 − ½∫|q − p|, with the core over ±12 standard deviations of both
/// densities integrated adaptively and the remaining tails mapped to
/// finite intervals.
pub fn accuracy(mu: f64, sigma_sq: f64, target: &UniTarget) -> Result<f64> {
    if !(sigma_sq > 0.0) {
        return Err(Error::InvalidInput("σ² must be positive".into()));
    }
    let mo = target.moments()?;
    let (s, s_star) = (sigma_sq.sqrt(), mo.var.sqrt());
    let lo = (mu - 12.0 * s).min(mo.mean - 12.0 * s_star);
    let hi = (mu + 12.0 * s).max(mo.mean + 12.0 * s_star);
    let diff = |x: f64| (norm_pdf((x - mu) / s) / s - target.pdf(x)).abs();
    // split at both centres so narrow q and wide p are each resolved
    let mut cuts = vec![lo, hi];
    for k in [-12.0, -6.0, -3.0, -1.0, 0.0, 1.0, 3.0, 6.0, 12.0] {
        cuts.push(mu + k * s);
        cuts.push(mo.mode + k * s_star);
    }
    cuts.retain(|c| (lo..=hi).contains(c));
    cuts.sort_by(f64::total_cmp);
    let mut iae = 0.0;
    for w in cuts.windows(2) {
        if w[1] > w[0] {
            iae += integrate(diff, w[0], w[1], 1e-11);
        }
    }
    iae += integrate_upper_tail(diff, hi, 1e-12) + integrate_lower_tail(diff, lo, 1e-12);
    Ok((1.0 - 0.5 * iae).clamp(0.0, 1.0))
}
