use super::state::VariationalState;
use super::Method;
use crate::error::{check_all_finite, check_finite, Error, Result};
use crate::linalg::{accumulate_outer, DiagScaler};
use crate::targets::TargetModel;
use rand::Rng;

/// Descent gradients of one reparameterization-trick draw, with the
/// one-sample lower-bound estimate log h(θ) − log q(θ) at the same θ.
#[derive(Debug, Clone)]
pub struct Alg1Gradient {
    pub grad_mu: Vec<f64>,
    /// Gradient in vech(T*) over the pattern slots, already scaled by D.
    pub grad_star: Vec<f64>,
    pub lower_bound: f64,
}

/// Gradients for a fixed z. For KLD these are of −ELBO; for FDr and SDr
/// of the divergence itself.
pub fn alg1_gradient(state: &VariationalState, model: &dyn TargetModel, method: Method, z: &[f64]) -> Result<Alg1Gradient> {
    if !matches!(method, Method::Kld | Method::Fdr | Method::Sdr) {
        return Err(Error::InvalidInput(format!("{} is not a reparameterization-trick method", method.label())));
    }
    let t = &state.factor;
    let pattern = t.pattern();
    let (u, theta) = state.transform(z)?;
    let gh = model.grad_log_h(&theta)?;
    check_all_finite(&gh, "∇log h")?;
    let tz = t.mul_lower(z);
    let g: Vec<f64> = gh.iter().zip(&tz).map(|(a, b)| a + b).collect();
    let mut g_t = vec![0.0; pattern.nnz()];
    let grad_mu = match method {
        Method::Kld => {
            let v = t.solve_lower(&g)?;
            accumulate_outer(pattern, 1.0, &u, &v, &mut g_t);
            g.iter().map(|x| -x).collect()
        }
        _ => {
            let (g, zz) = if method == Method::Sdr {
                let g1 = t.solve_lower(&g)?;
                let zz: Vec<f64> = z.iter().zip(&g1).map(|(a, b)| a - b).collect();
                (t.solve_upper_transpose(&g1)?, zz)
            } else {
                (g, z.to_vec())
            };
            let w = model.hess_vec(&theta, &g)?;
            let v = t.solve_lower(&w)?;
            accumulate_outer(pattern, 2.0, &g, &zz, &mut g_t);
            accumulate_outer(pattern, -2.0, &u, &v, &mut g_t);
            w.iter().map(|x| 2.0 * x).collect()
        }
    };
    DiagScaler::new(t).apply(&mut g_t);
    let lower_bound = check_finite(model.log_h(&theta)? - state.log_q_at(z), "lower bound")?;
    Ok(Alg1Gradient {
        grad_mu,
        grad_star: g_t,
        lower_bound,
    })
}

/// One SGD step of the reparameterization-trick algorithm. Returns the
/// lower-bound estimate at the pre-update state. On error the state is
/// unchanged.
pub fn step_alg1(state: &mut VariationalState, model: &dyn TargetModel, method: Method, rng: &mut impl Rng) -> Result<f64> {
    let (z, _, _) = state.draw(rng)?;
    let gr = alg1_gradient(state, model, method, &z)?;
    state.apply(&gr.grad_mu, &gr.grad_star)?;
    Ok(gr.lower_bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{CholFactor, SparsityPattern};
    use crate::targets::GaussianTarget;
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use std::sync::Arc;

    #[test]
    fn scalar_fd_gradient_vanishes_by_hand() {
        let target = GaussianTarget::new(vec![0.0], DMatrix::identity(1, 1)).unwrap();
        let p = target.pattern();
        let st = VariationalState::init(p, 0.0, 1.0, 0.95, 1e-6).unwrap();
        for m in [Method::Kld, Method::Fdr, Method::Sdr] {
            let gr = alg1_gradient(&st, &target, m, &[0.5]).unwrap();
            assert_eq!(gr.grad_mu, vec![0.0]);
            assert_eq!(gr.grad_star, vec![0.0]);
        }
    }

    #[test]
    fn kld_step_matches_dense_reference() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let d = 5;
        let a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
        let lambda = &a * a.transpose() + DMatrix::identity(d, d);
        let nu: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let target = GaussianTarget::new(nu.clone(), lambda.clone()).unwrap();
        let pattern = Arc::new(SparsityPattern::dense(d).unwrap());
        let vals: Vec<f64> = pattern
            .positions()
            .map(|(i, j)| if i == j { rng.gen_range(0.5..2.0) } else { rng.gen_range(-0.5..0.5) })
            .collect();
        let mu: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let st = VariationalState::new(mu.clone(), CholFactor::from_values(pattern.clone(), vals).unwrap(), 0.95, 1e-6).unwrap();
        let z: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let gr = alg1_gradient(&st, &target, Method::Kld, &z).unwrap();

        let t = st.factor.to_dense();
        let zv = DVector::from_vec(z);
        let u = t.transpose().clone().lu().solve(&zv).unwrap();
        let theta = DVector::from_vec(mu) + &u;
        let g = -&lambda * (&theta - DVector::from_vec(nu)) + &t * &zv;
        let v = t.clone().lu().solve(&g).unwrap();
        let g_t = -&u * v.transpose();
        for (k, (i, j)) in pattern.positions().enumerate() {
            let scale = if i == j { t[(i, i)] } else { 1.0 };
            assert!((gr.grad_star[k] + scale * g_t[(i, j)]).abs() < 1e-12);
        }
        for i in 0..d {
            assert!((gr.grad_mu[i] + g[i]).abs() < 1e-12);
        }
    }
}
