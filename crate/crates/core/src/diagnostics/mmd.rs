use crate::error::{check_len, Error, Result};
use nalgebra::DMatrix;
use rayon::prelude::*;

/// Offset inside the logarithm of M*.
pub const MSTAR_OFFSET: f64 = 1e-5;
const BLOCK: usize = 128;

fn check_pair(x: &DMatrix<f64>, y: &DMatrix<f64>, h: f64) -> Result<()> {
    check_len(x.nrows(), y.nrows())?;
    check_len(x.ncols(), y.ncols())?;
    if x.nrows() < 2 {
        return Err(Error::InvalidInput(format!("MMD needs at least 2 draws per set, got {}", x.nrows())));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidInput(format!("kernel bandwidth must be positive, got {h}")));
    }
    Ok(())
}

fn rbf(sq: f64, h: f64) -> f64 {
    (-sq.max(0.0) / (2.0 * h * h)).exp()
}

/// Σ_{i,j} k(a_i, b_j) over all pairs and Σ_i k(a_i, b_i), both from
/// row blocks of the Gram matrix a bᵀ.
fn kernel_sums(a: &DMatrix<f64>, b: &DMatrix<f64>, h: f64) -> (f64, f64) {
    let m = a.nrows();
    let na: Vec<f64> = a.row_iter().map(|r| r.norm_squared()).collect();
    let nb: Vec<f64> = b.row_iter().map(|r| r.norm_squared()).collect();
    let bt = b.transpose();
    let starts: Vec<usize> = (0..m).step_by(BLOCK).collect();
    let parts: Vec<(f64, f64)> = starts
        .par_iter()
        .map(|&s| {
            let e = (s + BLOCK).min(m);
            let gram = a.rows(s, e - s) * &bt;
            let (mut total, mut diag) = (0.0, 0.0);
            for i in 0..e - s {
                for j in 0..m {
                    let k = rbf(na[s + i] + nb[j] - 2.0 * gram[(i, j)], h);
                    total += k;
                    if s + i == j {
                        diag += k;
                    }
                }
            }
            (total, diag)
        })
        .collect();
    parts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1))
}

/// Unbiased MMD² between the rows of `x` (variational draws) and `y`
/// (reference draws) with RBF kernel exp(−‖·‖²/(2h²)):
/// 1/(m(m−1)) Σ_{i≠j} [k(x_i,x_j) + k(y_i,y_j) − k(x_i,y_j) − k(x_j,y_i)].
pub fn mmd2_u(x: &DMatrix<f64>, y: &DMatrix<f64>, h: f64) -> Result<f64> {
    check_pair(x, y, h)?;
    let m = x.nrows() as f64;
    let (xx, xx_d) = kernel_sums(x, x, h);
    let (yy, yy_d) = kernel_sums(y, y, h);
    let (xy, xy_d) = kernel_sums(x, y, h);
    // the two cross terms have the same off-diagonal sum
    Ok(((xx - xx_d) + (yy - yy_d) - 2.0 * (xy - xy_d)) / (m * (m - 1.0)))
}

/// The same statistic by a direct double loop.
pub fn mmd2_u_brute(x: &DMatrix<f64>, y: &DMatrix<f64>, h: f64) -> Result<f64> {
    check_pair(x, y, h)?;
    let m = x.nrows();
    let k = |a: nalgebra::DVectorView<f64>, b: nalgebra::DVectorView<f64>| rbf((a - b).norm_squared(), h);
    let mut s = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                let (xi, xj) = (x.row(i).transpose(), x.row(j).transpose());
                let (yi, yj) = (y.row(i).transpose(), y.row(j).transpose());
                s += k(xi.as_view(), xj.as_view()) + k(yi.as_view(), yj.as_view())
                    - k(xi.as_view(), yj.as_view())
                    - k(xj.as_view(), yi.as_view());
            }
        }
    }
    Ok(s / (m * (m - 1)) as f64)
}

/// M* = −log(MMD²_u + 10⁻⁵). The unbiased estimate can dip below zero
/// when the two sets match; it is floored at zero so M* stays finite.
pub fn mstar(mmd2: f64) -> f64 {
    -(mmd2.max(0.0) + MSTAR_OFFSET).ln()
}

pub fn mmd_mstar(x: &DMatrix<f64>, y: &DMatrix<f64>, h: f64) -> Result<f64> {
    Ok(mstar(mmd2_u(x, y, h)?))
}

/// Median of all pairwise Euclidean distances among the pooled rows.
pub fn median_heuristic(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    check_len(x.ncols(), y.ncols())?;
    let pooled: Vec<_> = x.row_iter().chain(y.row_iter()).collect();
    let n = pooled.len();
    let mut dists: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let pi = pooled[i];
            pooled[i + 1..].iter().map(move |pj| (pi - pj).norm())
        })
        .collect();
    if dists.is_empty() {
        return Err(Error::InvalidInput("median heuristic needs at least two points".into()));
    }
    let mid = dists.len() / 2;
    let (_, m, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    let h = *m;
    if h > 0.0 {
        Ok(h)
    } else {
        Err(Error::InvalidInput("all pooled draws coincide; bandwidth would be zero".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn cloud(m: usize, d: usize, shift: f64, seed: u64) -> DMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(m, d, |_, _| shift + rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn identical_sets_give_the_offset_bound() {
        let x = cloud(60, 3, 0.0, 1);
        assert!(mmd2_u(&x, &x, 0.8).unwrap().abs() < 1e-15);
        assert!((mmd_mstar(&x, &x, 0.8).unwrap() - 1e5f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn blocked_matches_brute_force() {
        let (x, y) = (cloud(50, 4, 0.0, 2), cloud(50, 4, 0.3, 3));
        for h in [0.3, 1.0, 5.0] {
            let a = mmd2_u(&x, &y, h).unwrap();
            let b = mmd2_u_brute(&x, &y, h).unwrap();
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn far_apart_two_point_clouds_by_hand() {
        // x = {0, 1}, y = {L, L+1} in one dimension, h = 1
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let y = DMatrix::from_row_slice(2, 1, &[1e3, 1e3 + 1.0]);
        let k1 = (-0.5f64).exp();
        // Σ_{i≠j}: k(x1,x2)+k(x2,x1) + same for y = 4 k1; cross terms vanish
        let expect = 4.0 * k1 / 2.0;
        assert!((mmd2_u(&x, &y, 1.0).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn symmetric_in_the_two_sets() {
        let (x, y) = (cloud(40, 2, 0.0, 4), cloud(40, 2, 0.5, 5));
        let a = mmd2_u(&x, &y, 0.7).unwrap();
        let b = mmd2_u(&y, &x, 0.7).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn mstar_is_finite_and_decreasing() {
        assert_eq!(mstar(-1e-3), mstar(0.0));
        assert!(mstar(0.1) < mstar(0.01));
    }

    #[test]
    fn median_of_a_square() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let y = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 1.0]);
        // six distances: four sides of length 1 and two diagonals
        assert_eq!(median_heuristic(&x, &y).unwrap(), 1.0);
        assert!(mmd2_u(&x, &y.rows(0, 1).into_owned(), 1.0).is_err());
    }
}
