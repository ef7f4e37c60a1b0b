//! Reference computations for the integration and acceptance tests. Nothing
//! here goes through the Cholesky-based posterior code of the library: the
//! oracles build the full joint covariance and condition with an LU solve.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use trendgp::kernels::kernel_partial;
use trendgp::{Dataset, Hyperparams, KernelFamily, KernelSpec, MeanSpec};

/// Fourth-order central difference of the `(a, b)` partial in `s` (or `t`).
pub fn fd_partial(spec: &KernelSpec, a: usize, b: usize, s: f64, t: f64, h: f64, in_s: bool) -> f64 {
    let k = |d: f64| {
        if in_s {
            kernel_partial(spec, a, b, s + d, t).unwrap()
        } else {
            kernel_partial(spec, a, b, s, t + d).unwrap()
        }
    };
    (-k(2.0 * h) + 8.0 * k(h) - 8.0 * k(-h) + k(-2.0 * h)) / (12.0 * h)
}

pub fn random_kernel(rng: &mut ChaCha8Rng, family: KernelFamily) -> KernelSpec {
    let alpha = rng.random_range(0.3..3.0);
    let rho = rng.random_range(0.1..2.0);
    let nu = (family == KernelFamily::RationalQuadratic).then(|| rng.random_range(0.3..20.0));
    KernelSpec::new(family, alpha, rho, nu).unwrap()
}

/// Random data set of `n` distinct times in `[0, 1]` and hyper-parameters
/// of the given family with a random mean of degree up to 2.
pub fn random_instance(rng: &mut ChaCha8Rng, family: KernelFamily, n: usize) -> (Dataset, Hyperparams) {
    let mut ts: Vec<f64> = (0..n).map(|i| (i as f64 + rng.random_range(0.1..0.9)) / n as f64).collect();
    ts.sort_by(f64::total_cmp);
    let ys: Vec<f64> = ts
        .iter()
        .map(|t| (6.0 * t).sin() + rng.random_range(-0.3..0.3))
        .collect();
    let degree = rng.random_range(0..4usize);
    let mean = if degree == 3 {
        MeanSpec::zero()
    } else {
        let coef: Vec<f64> = (0..=degree).map(|_| rng.random_range(-1.0..1.0)).collect();
        MeanSpec::centered(coef, rng.random_range(0.0..1.0)).unwrap()
    };
    let alpha = rng.random_range(0.5..2.0);
    let rho = rng.random_range(0.15..0.6);
    let nu = (family == KernelFamily::RationalQuadratic).then(|| rng.random_range(0.5..10.0));
    let kernel = KernelSpec::new(family, alpha, rho, nu).unwrap();
    let theta = Hyperparams::new(mean, kernel, rng.random_range(0.05..0.4)).unwrap();
    (Dataset::new(ts, ys).unwrap(), theta)
}

/// Dense conditioning: assembles the covariance of `(y, f, df, .., d^(blocks-1) f)`
/// and applies the Schur complement formula with an LU solve.
pub fn dense_joint(data: &Dataset, theta: &Hyperparams, grid: &[f64], blocks: usize) -> (DVector<f64>, DMatrix<f64>) {
    let ts = data.ts();
    let n = ts.len();
    let p = grid.len();
    let m = blocks * p;
    let k = &theta.kernel;
    let kyy = DMatrix::from_fn(n, n, |i, j| {
        kernel_partial(k, 0, 0, ts[i], ts[j]).unwrap() + if i == j { theta.sigma * theta.sigma } else { 0.0 }
    });
    let kgy = DMatrix::from_fn(m, n, |r, j| kernel_partial(k, r / p, 0, grid[r % p], ts[j]).unwrap());
    let kgg = DMatrix::from_fn(m, m, |r, c| kernel_partial(k, r / p, c / p, grid[r % p], grid[c % p]).unwrap());
    let mu_g = DVector::from_fn(m, |r, _| theta.mean.eval(r / p, grid[r % p]));
    let resid = DVector::from_fn(n, |i, _| data.ys()[i] - theta.mean.eval(0, ts[i]));
    if n == 0 {
        return (mu_g, kgg);
    }
    let lu = kyy.lu();
    let a = lu.solve(&resid).unwrap();
    let b = lu.solve(&kgy.transpose()).unwrap();
    (mu_g + &kgy * a, kgg - &kgy * b)
}

/// Log density of `N(mu, cov)` at `y` from an LU factorization.
pub fn mvn_logpdf(y: &DVector<f64>, mu: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let n = y.len();
    let lu = cov.clone().lu();
    let u = lu.u();
    let log_det: f64 = (0..n).map(|i| u[(i, i)].abs().ln()).sum();
    let r = y - mu;
    let quad = r.dot(&lu.solve(&r).unwrap());
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + quad)
}

/// Marginal covariance of the observations under `theta`.
pub fn observation_law(data: &Dataset, theta: &Hyperparams) -> (DVector<f64>, DMatrix<f64>) {
    let ts = data.ts();
    let n = ts.len();
    let cov = DMatrix::from_fn(n, n, |i, j| {
        kernel_partial(&theta.kernel, 0, 0, ts[i], ts[j]).unwrap() + if i == j { theta.sigma * theta.sigma } else { 0.0 }
    });
    let mu = DVector::from_fn(n, |i, _| theta.mean.eval(0, ts[i]));
    (mu, cov)
}

/// Draws from `N(mu, cov)` through a symmetric eigen decomposition with the
/// negative rounding-level eigenvalues clipped. Rows are draws.
pub struct EigenSampler {
    mu: DVector<f64>,
    root: DMatrix<f64>,
}

impl EigenSampler {
    pub fn new(mu: DVector<f64>, cov: &DMatrix<f64>) -> Self {
        let sym = (cov + cov.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let scale = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()));
        let root = eig.eigenvectors * DMatrix::from_diagonal(&scale);
        EigenSampler { mu, root }
    }

    pub fn draw(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let z = DVector::from_fn(self.root.ncols(), |_, _| StandardNormal.sample(rng));
        &self.mu + &self.root * z
    }
}

pub fn sign_changes(path: &[f64]) -> usize {
    let signs: Vec<bool> = path.iter().filter(|v| **v != 0.0).map(|v| *v > 0.0).collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}
