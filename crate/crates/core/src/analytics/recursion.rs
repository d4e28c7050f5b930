use super::require_spd;
use crate::error::{check_len, Error, Result};
use crate::linalg::{sym_eigenvalues, sym_spectral_norm, symmetrize};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Normalized state of natural-gradient SDb in the infinite-batch limit:
/// J = Λ^{-1/2} Σ⁻¹ Λ^{-1/2}, ε = Λ^{1/2}(μ − ν), β = 1 − 2ρ.
#[derive(Debug, Clone)]
pub struct RecursionState {
    pub j: DMatrix<f64>,
    pub eps: DVector<f64>,
    pub beta: f64,
    pub t: usize,
}

impl RecursionState {
    pub fn new(j: DMatrix<f64>, eps: DVector<f64>, beta: f64) -> Result<Self> {
        check_len(j.nrows(), eps.len())?;
        require_spd(&j, "J")?;
        if !(beta > 0.5 && beta < 1.0) {
            return Err(Error::InvalidInput(format!("β must lie in (1/2, 1), got {beta}")));
        }
        Ok(RecursionState { j, eps, beta, t: 0 })
    }

    /// J' = βJ + (1−β)(J⁻¹ + εεᵀ), ε' = (I − (1−β)J'⁻¹)ε. Returns
    /// (K, H) = (βJ + (1−β)J⁻¹, K + (1−β)‖ε‖² I) built from the old state.
    pub fn step(&mut self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let d = self.j.nrows();
        let b1 = 1.0 - self.beta;
        let j_inv = self
            .j
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite(format!("J at step {}", self.t)))?
            .inverse();
        let mut k = self.beta * &self.j + b1 * &j_inv;
        symmetrize(&mut k);
        let e2 = self.eps.norm_squared();
        let h = &k + DMatrix::identity(d, d) * (b1 * e2);
        let mut j_next = &k + b1 * &self.eps * self.eps.transpose();
        symmetrize(&mut j_next);
        let chol = j_next
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite(format!("J at step {}", self.t + 1)))?;
        let eps_next = &self.eps - b1 * chol.solve(&self.eps);
        self.j = j_next;
        self.eps = eps_next;
        self.t += 1;
        Ok((k, h))
    }

    pub fn delta_norm(&self) -> f64 {
        let d = self.j.nrows();
        sym_spectral_norm(&(&self.j - DMatrix::identity(d, d)))
    }
}

/// Per-step norms and their analytic upper bounds. Index t refers to the
/// state after t updates. `delta_bound[0]` is +∞ since the bound starts
/// from ‖Δ₁‖.
#[derive(Debug, Clone, Serialize)]
pub struct RecursionTrace {
    pub eps_norm: Vec<f64>,
    pub delta_norm: Vec<f64>,
    pub eps_bound: Vec<f64>,
    pub delta_bound: Vec<f64>,
    /// ξ = min(τ_min(J₁⁻¹), 1/ε̃₀).
    pub xi: f64,
    /// δ = 1 − (1−β)ξ.
    pub delta: f64,
    /// Smallest eigenvalue of J − K and of H − J over all steps.
    pub min_sandwich_gap: f64,
    /// Steps where a norm exceeded its bound by more than rounding.
    pub bound_violations: usize,
}

impl RecursionTrace {
    pub fn sandwich_holds(&self, tol: f64) -> bool {
        self.min_sandwich_gap >= -tol
    }
}

/// Runs the recursion for `t_max` steps, checking the K ⪯ J ⪯ H sandwich by
/// eigenvalues and the bounds ‖ε_t‖ ≤ δ^t ‖ε₀‖ and
/// ‖Δ_{t+1}‖ ≤ β^t ‖Δ₁‖ + (1−β)‖ε₀‖² Σ_{j<t} β^j δ^{2(t−j)} at every step.
pub fn natural_sdb_recursion(j0: &DMatrix<f64>, eps0: &[f64], beta: f64, t_max: usize) -> Result<RecursionTrace> {
    let mut st = RecursionState::new(j0.clone(), DVector::from_column_slice(eps0), beta)?;
    let e0 = st.eps.norm();
    let e0_tilde = (e0 * e0 + (e0.powi(4) + 4.0).sqrt()) / 2.0;
    let mut eps_norm = vec![e0];
    let mut delta_norm = vec![st.delta_norm()];
    let mut min_gap = f64::INFINITY;
    let record = |st: &RecursionState, k: &DMatrix<f64>, h: &DMatrix<f64>, gap: &mut f64| {
        let lo = sym_eigenvalues(&(&st.j - k))[0];
        let hi = sym_eigenvalues(&(h - &st.j))[0];
        let scale = 1.0 + sym_spectral_norm(&st.j);
        *gap = gap.min(lo / scale).min(hi / scale);
    };
    if t_max == 0 {
        return Ok(RecursionTrace {
            eps_bound: vec![e0],
            delta_bound: vec![f64::INFINITY],
            eps_norm,
            delta_norm,
            xi: f64::NAN,
            delta: f64::NAN,
            min_sandwich_gap: 0.0,
            bound_violations: 0,
        });
    }
    let (k, h) = st.step()?;
    record(&st, &k, &h, &mut min_gap);
    eps_norm.push(st.eps.norm());
    let d1 = st.delta_norm();
    delta_norm.push(d1);
    let tau_min_jinv = 1.0 / sym_eigenvalues(&st.j).last().copied().unwrap_or(1.0);
    let xi = tau_min_jinv.min(1.0 / e0_tilde);
    let delta = 1.0 - (1.0 - beta) * xi;
    for _ in 1..t_max {
        let (k, h) = st.step()?;
        record(&st, &k, &h, &mut min_gap);
        eps_norm.push(st.eps.norm());
        delta_norm.push(st.delta_norm());
    }
    let eps_bound: Vec<f64> = (0..=t_max).map(|t| delta.powi(t as i32) * e0).collect();
    let d2 = delta * delta;
    let delta_bound: Vec<f64> = (0..=t_max)
        .map(|s| {
            if s == 0 {
                return f64::INFINITY;
            }
            let t = (s - 1) as i32;
            let geo = if (d2 - beta).abs() > 1e-12 {
                d2 * (d2.powi(t) - beta.powi(t)) / (d2 - beta)
            } else {
                t as f64 * beta.powi(t)
            };
            beta.powi(t) * d1 + (1.0 - beta) * e0 * e0 * geo
        })
        .collect();
    let slack = |b: f64| 1e-12 * (1.0 + b);
    let bound_violations = (0..=t_max)
        .filter(|&t| eps_norm[t] > eps_bound[t] + slack(eps_bound[t]) || delta_norm[t] > delta_bound[t] + slack(delta_bound[t]))
        .count();
    Ok(RecursionTrace {
        eps_norm,
        delta_norm,
        eps_bound,
        delta_bound,
        xi,
        delta,
        min_sandwich_gap: min_gap,
        bound_violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn scalar_one_step_by_hand() {
        let mut st = RecursionState::new(DMatrix::from_element(1, 1, 2.0), DVector::from_element(1, 1.0), 0.9).unwrap();
        st.step().unwrap();
        assert!((st.j[(0, 0)] - 1.95).abs() < 1e-15);
        assert!((st.eps[0] - (1.0 - 0.1 / 1.95)).abs() < 1e-15);
    }

    #[test]
    fn fixed_point_stays_put() {
        let tr = natural_sdb_recursion(&DMatrix::identity(3, 3), &[0.0; 3], 0.7, 50).unwrap();
        assert!(tr.eps_norm.iter().all(|v| *v == 0.0));
        assert!(tr.delta_norm.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn random_start_converges_within_bounds() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let a = DMatrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0));
        let j0 = &a * a.transpose() + DMatrix::identity(5, 5) * 0.2;
        let eps0: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let tr = natural_sdb_recursion(&j0, &eps0, 0.8, 500).unwrap();
        assert!(*tr.eps_norm.last().unwrap() < 1e-6);
        assert!(*tr.delta_norm.last().unwrap() < 1e-4);
        assert_eq!(tr.bound_violations, 0);
        assert!(tr.sandwich_holds(1e-12));
        assert!(tr.eps_norm.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn rejects_bad_beta() {
        assert!(RecursionState::new(DMatrix::identity(1, 1), DVector::zeros(1), 0.4).is_err());
    }
}
