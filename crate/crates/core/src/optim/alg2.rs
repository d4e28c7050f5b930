use super::state::VariationalState;
use super::Method;
use crate::error::{check_all_finite, check_finite, check_len, Error, Result};
use crate::linalg::{accumulate_outer, CholFactor, DiagScaler};
use crate::targets::TargetModel;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Below this many scalar gradient entries per batch the scores are
/// evaluated serially.
const PARALLEL_WORK: usize = 4096;

/// Batch of draws θ_i with scores g_h(θ_i) and their 1/B-normalized
/// summaries. The covariances are kept as centred samples so that products
/// with T stay O(B · nnz); dense matrices are available on request.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub theta_bar: Vec<f64>,
    pub g_bar: Vec<f64>,
    /// θ_i − θ̄
    pub theta_dev: Vec<Vec<f64>>,
    /// g_h(θ_i) − ḡ
    pub g_dev: Vec<Vec<f64>>,
}

fn mean(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows[0].len();
    let mut m = vec![0.0; d];
    for r in rows {
        for (a, b) in m.iter_mut().zip(r) {
            *a += b;
        }
    }
    let b = rows.len() as f64;
    m.iter_mut().for_each(|v| *v /= b);
    m
}

fn outer_sum(a: &[Vec<f64>], b: &[Vec<f64>]) -> DMatrix<f64> {
    let d = a[0].len();
    let mut m = DMatrix::zeros(d, d);
    for (x, y) in a.iter().zip(b) {
        m += DVector::from_column_slice(x) * DVector::from_column_slice(y).transpose();
    }
    m / a.len() as f64
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl BatchStats {
    pub fn new(thetas: Vec<Vec<f64>>, grads: Vec<Vec<f64>>) -> Result<Self> {
        if thetas.len() < 2 {
            return Err(Error::InvalidInput(format!("batch size must be at least 2, got {}", thetas.len())));
        }
        check_len(thetas.len(), grads.len())?;
        let d = thetas[0].len();
        for (t, g) in thetas.iter().zip(&grads) {
            check_len(d, t.len())?;
            check_len(d, g.len())?;
            check_all_finite(t, "θ")?;
            check_all_finite(g, "∇log h")?;
        }
        let theta_bar = mean(&thetas);
        let g_bar = mean(&grads);
        let centre = |rows: Vec<Vec<f64>>, m: &[f64]| -> Vec<Vec<f64>> {
            rows.into_iter()
                .map(|r| r.iter().zip(m).map(|(a, b)| a - b).collect())
                .collect()
        };
        Ok(BatchStats {
            theta_dev: centre(thetas, &theta_bar),
            g_dev: centre(grads, &g_bar),
            theta_bar,
            g_bar,
        })
    }

    /// Draws B points from q = N(μ, (TTᵀ)⁻¹) and evaluates the scores.
    pub fn sample(state: &VariationalState, model: &dyn TargetModel, b: usize, rng: &mut impl Rng) -> Result<Self> {
        let d = state.dim();
        let zs: Vec<Vec<f64>> = (0..b)
            .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let thetas: Vec<Vec<f64>> = zs.iter().map(|z| state.transform(z).map(|(_, th)| th)).collect::<Result<_>>()?;
        let grads: Vec<Vec<f64>> = if b * d >= PARALLEL_WORK {
            thetas.par_iter().map(|th| model.grad_log_h(th)).collect::<Result<_>>()?
        } else {
            thetas.iter().map(|th| model.grad_log_h(th)).collect::<Result<_>>()?
        };
        Self::new(thetas, grads)
    }

    pub fn batch_size(&self) -> usize {
        self.theta_dev.len()
    }
    pub fn dim(&self) -> usize {
        self.theta_bar.len()
    }

    pub fn c_theta(&self) -> DMatrix<f64> {
        outer_sum(&self.theta_dev, &self.theta_dev)
    }
    pub fn c_g(&self) -> DMatrix<f64> {
        outer_sum(&self.g_dev, &self.g_dev)
    }
    pub fn c_theta_g(&self) -> DMatrix<f64> {
        outer_sum(&self.theta_dev, &self.g_dev)
    }

    fn offset(&self, mu: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.dim(), mu.iter().zip(&self.theta_bar).map(|(m, t)| m - t))
    }

    /// U = C_θ + (μ − θ̄)(μ − θ̄)ᵀ.
    pub fn u(&self, mu: &[f64]) -> DMatrix<f64> {
        let a = self.offset(mu);
        self.c_theta() + &a * a.transpose()
    }
    /// V = C_g + ḡḡᵀ.
    pub fn v(&self) -> DMatrix<f64> {
        let g = DVector::from_column_slice(&self.g_bar);
        self.c_g() + &g * g.transpose()
    }
    /// W = C_θg − (μ − θ̄)ḡᵀ.
    pub fn w(&self, mu: &[f64]) -> DMatrix<f64> {
        let a = self.offset(mu);
        self.c_theta_g() - a * DVector::from_column_slice(&self.g_bar).transpose()
    }

    /// Batch SD in trace form tr(VΣ) + tr(UΣ⁻¹) + 2tr(W).
    pub fn score_objective(&self, mu: &[f64], factor: &CholFactor) -> Result<f64> {
        let sigma = factor.covariance_dense()?;
        let omega = factor.precision_dense();
        Ok((self.v() * sigma).trace() + (self.u(mu) * omega).trace() + 2.0 * self.w(mu).trace())
    }

    /// Batch FD in trace form tr(V) + tr(UΣ⁻²) + 2tr(WΣ⁻¹).
    pub fn fisher_objective(&self, mu: &[f64], factor: &CholFactor) -> Result<f64> {
        let omega = factor.precision_dense();
        Ok(self.v().trace() + (self.u(mu) * &omega * &omega).trace() + 2.0 * (self.w(mu) * omega).trace())
    }

    /// Both objectives by direct summation over the draws: (SD, FD).
    pub fn objectives_direct(&self, mu: &[f64], factor: &CholFactor) -> Result<(f64, f64)> {
        let (mut s, mut f) = (0.0, 0.0);
        for (dt, dg) in self.theta_dev.iter().zip(&self.g_dev) {
            let g: Vec<f64> = dg.iter().zip(&self.g_bar).map(|(a, b)| a + b).collect();
            let r: Vec<f64> = dt.iter().zip(&self.theta_bar).zip(mu).map(|((a, b), m)| a + b - m).collect();
            let omega_r = factor.precision_mul(&r);
            s += dot(&g, &factor.cov_mul(&g)?) + 2.0 * dot(&g, &r) + dot(&r, &omega_r);
            f += dot(&g, &g) + 2.0 * dot(&g, &omega_r) + dot(&omega_r, &omega_r);
        }
        let b = self.batch_size() as f64;
        Ok((s / b, f / b))
    }
}

/// Descent gradients of the batch objective (before Adadelta).
#[derive(Debug, Clone)]
pub struct Alg2Gradient {
    pub grad_mu: Vec<f64>,
    /// Gradient in vech(T*), scaled by D.
    pub grad_star: Vec<f64>,
}

/// Batch-approximation gradients for SDb or FDb. U, V and W are low rank,
/// so every product with T is formed as a sum of outer products restricted
/// to the pattern.
pub fn alg2_gradient(state: &VariationalState, stats: &BatchStats, method: Method) -> Result<Alg2Gradient> {
    if !matches!(method, Method::Sdb | Method::Fdb) {
        return Err(Error::InvalidInput(format!("{} is not a batch-approximation method", method.label())));
    }
    let t = &state.factor;
    let pattern = t.pattern();
    check_len(state.dim(), stats.dim())?;
    let b = stats.batch_size() as f64;
    let a: Vec<f64> = state.mu.iter().zip(&stats.theta_bar).map(|(m, th)| m - th).collect();
    let omega_a = t.precision_mul(&a);
    let g_mu: Vec<f64> = omega_a.iter().zip(&stats.g_bar).map(|(x, g)| 2.0 * x - 2.0 * g).collect();
    let mut g_t = vec![0.0; pattern.nnz()];
    // U = Σ_k c_k x_k x_kᵀ with x = θ_i − θ̄ (c = 1/B) and x = a (c = 1)
    let u_terms = stats.theta_dev.iter().map(|x| (1.0 / b, x.as_slice())).chain([(1.0, a.as_slice())]);
    let grad_mu = match method {
        Method::Sdb => {
            // 2(UT − Σ V T^{-⊤})
            for (c, x) in u_terms {
                accumulate_outer(pattern, 2.0 * c, x, &t.mul_upper_transpose(x), &mut g_t);
            }
            let v_terms = stats.g_dev.iter().map(|y| (1.0 / b, y.as_slice())).chain([(1.0, stats.g_bar.as_slice())]);
            for (c, y) in v_terms {
                let y_lo = t.solve_lower(y)?;
                let sigma_y = t.solve_upper_transpose(&y_lo)?;
                accumulate_outer(pattern, -2.0 * c, &sigma_y, &y_lo, &mut g_t);
            }
            g_mu
        }
        _ => {
            // 2(W + Wᵀ + ΩU + UΩ)T with Ω = TTᵀ
            for (c, x) in u_terms {
                let tx = t.mul_upper_transpose(x);
                let omega_x = t.mul_lower(&tx);
                accumulate_outer(pattern, 2.0 * c, &omega_x, &tx, &mut g_t);
                accumulate_outer(pattern, 2.0 * c, x, &t.mul_upper_transpose(&omega_x), &mut g_t);
            }
            let neg_a: Vec<f64> = a.iter().map(|v| -v).collect();
            let w_terms = stats
                .theta_dev
                .iter()
                .zip(&stats.g_dev)
                .map(|(p, q)| (1.0 / b, p.as_slice(), q.as_slice()))
                .chain([(1.0, neg_a.as_slice(), stats.g_bar.as_slice())]);
            for (c, p, q) in w_terms {
                accumulate_outer(pattern, 2.0 * c, p, &t.mul_upper_transpose(q), &mut g_t);
                accumulate_outer(pattern, 2.0 * c, q, &t.mul_upper_transpose(p), &mut g_t);
            }
            t.precision_mul(&g_mu)
        }
    };
    DiagScaler::new(t).apply(&mut g_t);
    Ok(Alg2Gradient { grad_mu, grad_star: g_t })
}

/// One SGD step of the batch-approximation algorithm. The lower-bound
/// estimate uses a fresh draw from the pre-update state.
pub fn step_alg2(state: &mut VariationalState, model: &dyn TargetModel, method: Method, b: usize, rng: &mut impl Rng) -> Result<f64> {
    if b < 2 {
        return Err(Error::InvalidInput(format!("batch size must be at least 2, got {b}")));
    }
    let stats = BatchStats::sample(state, model, b, rng)?;
    let gr = alg2_gradient(state, &stats, method)?;
    let (z, _, theta) = state.draw(rng)?;
    let lower_bound = check_finite(model.log_h(&theta)? - state.log_q_at(&z), "lower bound")?;
    state.apply(&gr.grad_mu, &gr.grad_star)?;
    Ok(lower_bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SparsityPattern;
    use crate::targets::GaussianTarget;
    use rand::SeedableRng;
    use std::sync::Arc;

    fn unit_state(mu: f64) -> VariationalState {
        let p = Arc::new(SparsityPattern::dense(1).unwrap());
        VariationalState::init(p, mu, 1.0, 0.95, 1e-6).unwrap()
    }

    #[test]
    fn two_point_batch_by_hand() {
        let stats = BatchStats::new(vec![vec![-1.0], vec![1.0]], vec![vec![1.0], vec![-1.0]]).unwrap();
        assert_eq!(stats.c_theta()[(0, 0)], 1.0);
        assert_eq!(stats.c_g()[(0, 0)], 1.0);
        assert_eq!(stats.c_theta_g()[(0, 0)], -1.0);
        assert_eq!((stats.u(&[0.0])[(0, 0)], stats.v()[(0, 0)], stats.w(&[0.0])[(0, 0)]), (1.0, 1.0, -1.0));
        let g = alg2_gradient(&unit_state(0.0), &stats, Method::Sdb).unwrap();
        assert_eq!((g.grad_mu[0], g.grad_star[0]), (0.0, 0.0));
        let g = alg2_gradient(&unit_state(0.5), &stats, Method::Sdb).unwrap();
        assert!((g.grad_mu[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exact_gaussian_scores_give_zero_gradients() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let d = 4;
        let a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
        let lambda = &a * a.transpose() + DMatrix::identity(d, d);
        let nu: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let target = GaussianTarget::new(nu.clone(), lambda.clone()).unwrap();
        let f = CholFactor::from_precision(target.pattern(), &lambda).unwrap();
        let st = VariationalState::new(nu, f, 0.95, 1e-6).unwrap();
        let stats = BatchStats::sample(&st, &target, 6, &mut rng).unwrap();
        for m in [Method::Sdb, Method::Fdb] {
            let g = alg2_gradient(&st, &stats, m).unwrap();
            assert!(g.grad_mu.iter().chain(&g.grad_star).all(|v| v.abs() < 1e-10), "{m:?}");
        }
        let (s, fd) = stats.objectives_direct(&st.mu, &st.factor).unwrap();
        assert!(s.abs() < 1e-10 && fd.abs() < 1e-10);
    }

    #[test]
    fn gradients_match_finite_differences_of_batch_objectives() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let d = 3;
        let pattern = Arc::new(SparsityPattern::dense(d).unwrap());
        let thetas: Vec<Vec<f64>> = (0..4).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let grads: Vec<Vec<f64>> = (0..4).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let stats = BatchStats::new(thetas, grads).unwrap();
        let star: Vec<f64> = (0..pattern.nnz()).map(|_| rng.gen_range(-0.4..0.4)).collect();
        let mu: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let st = VariationalState::new(mu.clone(), CholFactor::from_star(pattern.clone(), star.clone()).unwrap(), 0.95, 1e-6).unwrap();
        let obj = |m: &[f64], s: &[f64], method: Method| {
            let f = CholFactor::from_star(pattern.clone(), s.to_vec()).unwrap();
            match method {
                Method::Sdb => stats.score_objective(m, &f).unwrap(),
                _ => stats.fisher_objective(m, &f).unwrap(),
            }
        };
        let h = 1e-6;
        for method in [Method::Sdb, Method::Fdb] {
            let g = alg2_gradient(&st, &stats, method).unwrap();
            for k in 0..star.len() {
                let (mut sp, mut sm) = (star.clone(), star.clone());
                sp[k] += h;
                sm[k] -= h;
                let fd = (obj(&mu, &sp, method) - obj(&mu, &sm, method)) / (2.0 * h);
                assert!((fd - g.grad_star[k]).abs() < 1e-6 * (1.0 + fd.abs()), "{method:?} slot {k}: {fd} vs {}", g.grad_star[k]);
            }
        }
        // SDb μ-gradient is ∇_μ Ŝ exactly
        let g = alg2_gradient(&st, &stats, Method::Sdb).unwrap();
        for i in 0..d {
            let (mut mp, mut mm) = (mu.clone(), mu.clone());
            mp[i] += h;
            mm[i] -= h;
            let fd = (obj(&mp, &star, Method::Sdb) - obj(&mm, &star, Method::Sdb)) / (2.0 * h);
            assert!((fd - g.grad_mu[i]).abs() < 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn trace_and_direct_objectives_agree() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let d = 5;
        let pattern = Arc::new(SparsityPattern::banded(d, 1).unwrap());
        let star: Vec<f64> = (0..pattern.nnz()).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let f = CholFactor::from_star(pattern, star).unwrap();
        let thetas: Vec<Vec<f64>> = (0..7).map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let grads: Vec<Vec<f64>> = (0..7).map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let stats = BatchStats::new(thetas, grads).unwrap();
        let mu: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (s, fd) = stats.objectives_direct(&mu, &f).unwrap();
        assert!((s - stats.score_objective(&mu, &f).unwrap()).abs() < 1e-10 * s.abs().max(1.0));
        assert!((fd - stats.fisher_objective(&mu, &f).unwrap()).abs() < 1e-10 * fd.abs().max(1.0));
    }
}
