//! Property checks for the library's structural invariants.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::sync::Arc;
use wfvi::analytics::{
    meanfield_sd_nqp, meanfield_weighted, natural_sdb_recursion, ordering_check, weighted_fd_gaussians, KktCase,
};
use wfvi::diagnostics::{mmd2_u, mstar};
use wfvi::linalg::{CholFactor, DiagScaler, SparsityPattern};
use wfvi::optim::{bam_update, step_alg1, step_alg2, BatchStats, Method, VariationalState};
use wfvi::special::trigamma;
use wfvi::targets::{GaussianTarget, TargetModel};
use wfvi::unilab::{loggamma_closed_forms, loggamma_fd_closed_form, uni_objective, UniDivergence, UniTarget};

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| normal(rng));
    &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * 0.3
}

/// Random factor on a hierarchical pattern with positive diagonal.
fn random_factor(pattern: Arc<SparsityPattern>, rng: &mut ChaCha8Rng) -> CholFactor {
    let star: Vec<f64> = (0..pattern.nnz()).map(|_| 0.5 * normal(rng)).collect();
    CholFactor::from_star(pattern, star).unwrap()
}

fn pattern_strategy() -> impl Strategy<Value = (usize, Vec<usize>, usize, usize)> {
    (1usize..6)
        .prop_flat_map(|n| (Just(n), prop::collection::vec(1usize..4, n), 0usize..4, 0..n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn triangular_solves_invert_products((n, dims, g, ell) in pattern_strategy(), seed in any::<u64>()) {
        let p = Arc::new(SparsityPattern::build(n, &dims, g, ell).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_factor(p.clone(), &mut rng);
        let x: Vec<f64> = (0..p.dim()).map(|_| normal(&mut rng)).collect();
        let back = t.solve_lower(&t.mul_lower(&x)).unwrap();
        let back_t = t.solve_upper_transpose(&t.mul_upper_transpose(&x)).unwrap();
        let scale = x.iter().map(|v| v.abs()).fold(1.0, f64::max);
        for i in 0..x.len() {
            prop_assert!((back[i] - x[i]).abs() < 1e-10 * scale);
            prop_assert!((back_t[i] - x[i]).abs() < 1e-10 * scale);
        }
    }

    #[test]
    fn precision_zeros_follow_the_markov_pattern((n, dims, g, ell) in pattern_strategy(), seed in any::<u64>()) {
        let p = Arc::new(SparsityPattern::build(n, &dims, g, ell).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let omega = random_factor(p.clone(), &mut rng).precision_dense();
        let mut block = Vec::new();
        for (b, &k) in dims.iter().enumerate() {
            block.extend(std::iter::repeat_n(Some(b), k));
        }
        block.extend(std::iter::repeat_n(None, g));
        for i in 0..p.dim() {
            for j in 0..p.dim() {
                if let (Some(a), Some(b)) = (block[i], block[j]) {
                    if a.abs_diff(b) > ell {
                        prop_assert_eq!(omega[(i, j)], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn star_round_trip_and_scaler((n, dims, g, ell) in pattern_strategy(), seed in any::<u64>()) {
        let p = Arc::new(SparsityPattern::build(n, &dims, g, ell).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_factor(p.clone(), &mut rng);
        let again = CholFactor::from_values(p.clone(), t.values().to_vec()).unwrap();
        for (a, b) in again.star().iter().zip(t.star()) {
            prop_assert!((a - b).abs() <= 1e-14 * (1.0 + b.abs()));
        }
        let s = DiagScaler::new(&t);
        let mut twice = vec![1.0; p.nnz()];
        s.apply(&mut twice);
        s.apply(&mut twice);
        for (k, v) in twice.iter().enumerate() {
            prop_assert!((v - s.d_diag[k].powi(2)).abs() < 1e-12 * v.abs().max(1.0));
        }
    }

    /// f(T) = Σ_k c_k T_k + log det T; D∇_T f equals finite differences in T*.
    #[test]
    fn diag_scaler_is_the_chain_rule(seed in any::<u64>()) {
        let p = Arc::new(SparsityPattern::build(3, &[2, 1, 2], 1, 1).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_factor(p.clone(), &mut rng);
        let c: Vec<f64> = (0..p.nnz()).map(|_| normal(&mut rng)).collect();
        let f = |f: &CholFactor| f.values().iter().zip(&c).map(|(a, b)| a * b).sum::<f64>() + f.log_det();
        let mut grad: Vec<f64> = (0..p.nnz())
            .map(|k| c[k] + if p.is_diag_slot(k) { 1.0 / t.values()[k] } else { 0.0 })
            .collect();
        DiagScaler::new(&t).apply(&mut grad);
        for k in 0..p.nnz() {
            let h = 1e-6;
            let mut up = t.star().to_vec();
            up[k] += h;
            let mut down = t.star().to_vec();
            down[k] -= h;
            let fd = (f(&CholFactor::from_star(p.clone(), up).unwrap()) - f(&CholFactor::from_star(p.clone(), down).unwrap())) / (2.0 * h);
            prop_assert!((fd - grad[k]).abs() < 1e-6 * (1.0 + grad[k].abs()), "slot {}: {} vs {}", k, fd, grad[k]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weighted_fd_vanishes_only_at_the_target(d in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lambda = random_spd(d, &mut rng);
        let nu: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
        let m = random_spd(d, &mut rng);
        let sigma = lambda.clone().try_inverse().unwrap();
        let at = weighted_fd_gaussians(&nu, &sigma, &nu, &lambda, &m).unwrap();
        prop_assert!(at.abs() < 1e-9 * (1.0 + m.norm() * lambda.norm()));
        let mu: Vec<f64> = nu.iter().map(|v| v + 0.1).collect();
        prop_assert!(weighted_fd_gaussians(&mu, &sigma, &nu, &lambda, &m).unwrap() > 0.0);
    }

    #[test]
    fn meanfield_orderings_and_kkt(d in 2usize..9, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lambda = random_spd(d, &mut rng);
        let m_diag: Vec<f64> = (0..d).map(|_| rng.gen_range(0.1..5.0)).collect();
        let report = ordering_check(&lambda, &m_diag).unwrap();
        prop_assert!(report.all_hold(), "{:?}", report);
        let sd = meanfield_sd_nqp(&lambda, &vec![0.0; d]).unwrap();
        for i in 0..d {
            let s_i = sd.sigma_diag[i] * lambda[(i, i)];
            let hs: f64 = (0..d)
                .map(|j| lambda[(i, j)].powi(2) / (lambda[(i, i)] * lambda[(j, j)]) * sd.sigma_diag[j] * lambda[(j, j)])
                .sum();
            match sd.kkt_cases[i] {
                KktCase::Active => prop_assert!(s_i == 0.0 && hs >= 1.0 - 1e-8),
                KktCase::Inactive => prop_assert!(s_i > 0.0 && (hs - 1.0).abs() <= 1e-8),
                KktCase::NotApplicable => prop_assert!(false, "SD solution must classify every coordinate"),
            }
        }
    }

    #[test]
    fn diagonal_precision_collapses_every_divergence_to_kl(diag in prop::collection::vec(0.1f64..20.0, 1..8)) {
        let d = diag.len();
        let lambda = DMatrix::from_diagonal(&DVector::from_vec(diag.clone()));
        let f = meanfield_weighted(&lambda, &vec![0.0; d], &vec![1.0; d]).unwrap();
        let s = meanfield_sd_nqp(&lambda, &vec![0.0; d]).unwrap();
        for i in 0..d {
            prop_assert!((f.sigma_diag[i] - 1.0 / diag[i]).abs() < 1e-12 / diag[i]);
            prop_assert!((s.sigma_diag[i] - f.sigma_diag[i]).abs() < 1e-9 / diag[i]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn recursion_keeps_the_sandwich(d in 1usize..6, beta in 0.55f64..0.95, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let j0 = random_spd(d, &mut rng);
        let eps0: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
        let trace = natural_sdb_recursion(&j0, &eps0, beta, 200).unwrap();
        prop_assert!(trace.sandwich_holds(1e-10));
        prop_assert_eq!(trace.bound_violations, 0);
        for w in trace.eps_norm.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn loggamma_quadrature_matches_closed_form(
        a1 in 0.6f64..30.0, b1 in 0.1f64..20.0, mu in -3.0f64..3.0, s2 in 0.05f64..3.0,
    ) {
        let t = UniTarget::log_inv_gamma(a1, b1).unwrap();
        let mu = mu + (b1 / a1).ln();
        let quad = uni_objective(&t, UniDivergence::Fd, mu, s2).unwrap();
        let closed = loggamma_fd_closed_form(a1, b1, mu, s2);
        prop_assert!((quad - closed).abs() < 1e-8 * (1.0 + closed.abs()), "{} vs {}", quad, closed);
        let fits = loggamma_closed_forms(a1, b1).unwrap();
        prop_assert!(fits.fd.1 > 0.0 && fits.fd.1 < 2.0);
        prop_assert!(fits.ordering_holds());
    }

    #[test]
    fn trigamma_exceeds_reciprocal(x in 1e-3f64..100.0) {
        prop_assert!(trigamma(x) > 1.0 / x);
    }

    #[test]
    fn mmd_is_symmetric_and_mstar_monotone(seed in any::<u64>(), shift in 0.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(30, 2, |_, _| normal(&mut rng));
        let y = DMatrix::from_fn(30, 2, |_, _| shift + normal(&mut rng));
        let a = mmd2_u(&x, &y, 1.0).unwrap();
        let b = mmd2_u(&y, &x, 1.0).unwrap();
        prop_assert!((a - b).abs() < 1e-13);
        // negative estimates are floored at zero, so compare above the floor
        let a = a.max(0.0);
        prop_assert!(mstar(a + 0.01) < mstar(a));
        prop_assert_eq!(mstar(-a - 0.01), mstar(0.0));
    }
}

fn banded_gaussian(d: usize, seed: u64) -> GaussianTarget {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lambda = DMatrix::zeros(d, d);
    for i in 0..d {
        lambda[(i, i)] = 2.0 + rng.gen_range(0.0..1.0);
        if i > 0 {
            let v = rng.gen_range(-0.6..0.6);
            lambda[(i, i - 1)] = v;
            lambda[(i - 1, i)] = v;
        }
    }
    let nu = (0..d).map(|_| normal(&mut rng)).collect();
    GaussianTarget::with_pattern(nu, lambda, Arc::new(SparsityPattern::banded(d, 1).unwrap())).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn steps_never_leave_the_pattern(seed in any::<u64>(), method_ix in 0usize..5) {
        let method = [Method::Kld, Method::Fdr, Method::Sdr, Method::Fdb, Method::Sdb][method_ix];
        let model = banded_gaussian(6, seed);
        let p = model.pattern();
        let mut state = VariationalState::init(p.clone(), 0.0, 1.0, 0.95, 1e-6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for _ in 0..50 {
            let _ = if method.is_batch() {
                step_alg2(&mut state, &model, method, 5, &mut rng)
            } else {
                step_alg1(&mut state, &model, method, &mut rng)
            };
        }
        let t = state.factor.to_dense();
        for i in 0..6 {
            for j in 0..6 {
                if p.slot(i, j).is_none() {
                    prop_assert_eq!(t[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn batch_objectives_agree(seed in any::<u64>(), b in 2usize..12) {
        let model = banded_gaussian(5, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let state = VariationalState::init(model.pattern(), 0.3, 0.8, 0.95, 1e-6).unwrap();
        let stats = BatchStats::sample(&state, &model, b, &mut rng).unwrap();
        let (s_direct, f_direct) = stats.objectives_direct(&state.mu, &state.factor).unwrap();
        let s = stats.score_objective(&state.mu, &state.factor).unwrap();
        let f = stats.fisher_objective(&state.mu, &state.factor).unwrap();
        prop_assert!((s - s_direct).abs() < 1e-10 * (1.0 + s.abs()));
        prop_assert!((f - f_direct).abs() < 1e-10 * (1.0 + f.abs()));
    }

    /// The BaM update minimizes Ŝ(μ', Σ') + (2/ρ) KL(q_t ‖ q') over (μ', Σ')
    /// for its batch, so it cannot do worse than staying put.
    #[test]
    fn bam_objective_decreases(seed in any::<u64>(), rho in 0.05f64..20.0) {
        let d = 4;
        let model = banded_gaussian(d, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let sigma = random_spd(d, &mut rng);
        let mu: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
        let dense = Arc::new(SparsityPattern::dense(d).unwrap());
        let factor = CholFactor::from_precision(dense.clone(), &sigma.clone().try_inverse().unwrap()).unwrap();
        let state = VariationalState::new(mu.clone(), factor, 0.95, 1e-6).unwrap();
        let stats = BatchStats::sample(&state, &model, 8, &mut rng).unwrap();
        let (mu_new, sigma_new) = bam_update(&mu, &sigma, &stats, rho).unwrap();
        let objective = |m: &[f64], s: &DMatrix<f64>| {
            let prec = s.clone().try_inverse().unwrap();
            let f = CholFactor::from_precision(dense.clone(), &prec).unwrap();
            let diff = DVector::from_iterator(d, m.iter().zip(&mu).map(|(a, b)| a - b));
            let kl = 0.5 * ((&prec * &sigma).trace() + (diff.transpose() * &prec * &diff)[0] - d as f64
                + s.determinant().ln() - sigma.determinant().ln());
            stats.score_objective(m, &f).unwrap() + 2.0 / rho * kl
        };
        let before = objective(&mu, &sigma);
        let after = objective(&mu_new, &sigma_new);
        prop_assert!(after <= before + 1e-9 * (1.0 + before.abs()), "{} > {}", after, before);
        let nudged: Vec<f64> = mu_new.iter().map(|v| v + 1e-3).collect();
        prop_assert!(after <= objective(&nudged, &(&sigma_new * 1.001)) + 1e-9 * (1.0 + after.abs()));
    }
}
