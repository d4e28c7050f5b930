//! Gauss–Hermite rules and adaptive Gauss–Kronrod integration.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Nodes and weights for ∫ e^{−x²} f(x) dx.
#[derive(Debug, Clone)]
pub struct HermiteRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl HermiteRule {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let pim4 = PI.powf(-0.25);
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        // Jacobi-matrix eigenvalues seed the Newton polish; the classical
        // extrapolated guesses drift onto neighbouring roots for large n.
        let jacobi = nalgebra::DMatrix::from_fn(n, n, |i, j| {
            if i.abs_diff(j) == 1 {
                (i.max(j) as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let mut guesses: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
        guesses.sort_by(|a, b| b.total_cmp(a));
        for i in 0..m {
            let mut z = guesses[i];
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-14 * (1.0 + z.abs()) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        if n % 2 == 1 {
            x[m - 1] = 0.0;
        }
        HermiteRule {
            nodes: x,
            weights: w,
        }
    }

    /// Cached rule for the common sizes.
    pub fn cached(n: usize) -> &'static HermiteRule {
        static R100: OnceLock<HermiteRule> = OnceLock::new();
        static R200: OnceLock<HermiteRule> = OnceLock::new();
        static R400: OnceLock<HermiteRule> = OnceLock::new();
        match n {
            100 => R100.get_or_init(|| HermiteRule::new(100)),
            200 => R200.get_or_init(|| HermiteRule::new(200)),
            400 => R400.get_or_init(|| HermiteRule::new(400)),
            _ => panic!("no cached Gauss-Hermite rule of size {n}"),
        }
    }

    /// E f(X) for X ~ N(mu, sigma²). `f` receives (theta, standardized x).
    pub fn normal_expectation(&self, mu: f64, sigma: f64, mut f: impl FnMut(f64, f64) -> f64) -> f64 {
        let s2 = std::f64::consts::SQRT_2;
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            if *w == 0.0 {
                continue;
            }
            let xs = s2 * x;
            acc += w * f(mu + sigma * xs, xs);
        }
        acc / PI.sqrt()
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) integral of `f` over [a, b].
pub fn integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    // a few initial panels so a narrow peak in a wide interval is not missed
    const PANELS: usize = 16;
    let mut stack: Vec<(f64, f64, u32)> = (0..PANELS)
        .rev()
        .map(|k| {
            let lo = a + (b - a) * k as f64 / PANELS as f64;
            let hi = a + (b - a) * (k + 1) as f64 / PANELS as f64;
            (lo, hi, 0)
        })
        .collect();
    let mut total = 0.0;
    let width = (b - a).abs().max(f64::MIN_POSITIVE);
    while let Some((lo, hi, depth)) = stack.pop() {
        let (val, err) = gk15(&mut f, lo, hi);
        let local_tol = tol * ((hi - lo).abs() / width).max(1e-3);
        if err <= local_tol || depth >= 40 {
            total += val;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    total
}

/// ∫_a^∞ f via the map x = a + t/(1−t).
pub fn integrate_upper_tail(mut f: impl FnMut(f64) -> f64, a: f64, tol: f64) -> f64 {
    integrate(
        |t| {
            if t >= 1.0 {
                return 0.0;
            }
            let u = 1.0 - t;
            f(a + t / u) / (u * u)
        },
        0.0,
        1.0,
        tol,
    )
}

/// ∫_{−∞}^b f via the map x = b − t/(1−t).
pub fn integrate_lower_tail(mut f: impl FnMut(f64) -> f64, b: f64, tol: f64) -> f64 {
    integrate_upper_tail(|x| f(2.0 * b - x), b, tol)
}
