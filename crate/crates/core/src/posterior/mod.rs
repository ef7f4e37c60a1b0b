//! Joint posterior of `(f, df, d2f)` under the latent Gaussian Process model.
//!
//! [`GpPosterior`] factorizes `C(t, t) + sigma^2 I` once and answers moment
//! queries on arbitrary grids from that single lower-triangular factor.

mod sampling;

pub use sampling::{sample_paths, GaussianSampler};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{validate_assumptions, KernelSpec, MeanSpec, JITTER};

/// Full hyper-parameter vector: mean coefficients, kernel parameters and the
/// observation noise standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub mean: MeanSpec,
    pub kernel: KernelSpec,
    pub sigma: f64,
}

impl Hyperparams {
    pub fn new(mean: MeanSpec, kernel: KernelSpec, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be non-negative and finite, got {sigma}"
            )));
        }
        Ok(Hyperparams {
            mean,
            kernel,
            sigma,
        })
    }
}

/// Mean vector and covariance matrix of `(f, df[, d2f])` on a grid, stored
/// block-wise in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPosterior {
    grid: Vec<f64>,
    mu: DVector<f64>,
    cov: DMatrix<f64>,
    blocks: usize,
}

impl JointPosterior {
    pub fn new(grid: Vec<f64>, mu: DVector<f64>, cov: DMatrix<f64>, blocks: usize) -> Result<Self> {
        let m = grid.len() * blocks;
        if mu.len() != m {
            return Err(Error::LengthMismatch {
                expected: m,
                got: mu.len(),
            });
        }
        if cov.shape() != (m, m) {
            return Err(Error::LengthMismatch {
                expected: m,
                got: cov.nrows(),
            });
        }
        Ok(JointPosterior {
            grid,
            mu,
            cov,
            blocks,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Number of derivative blocks: 3 for `(f, df, d2f)`, 2 for `(f, df)`.
    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn mean_block(&self, block: usize) -> &[f64] {
        let p = self.grid.len();
        &self.mu.as_slice()[block * p..(block + 1) * p]
    }

    pub fn cov_block(&self, row: usize, col: usize) -> DMatrix<f64> {
        let p = self.grid.len();
        self.cov.view((row * p, col * p), (p, p)).into_owned()
    }

    /// Restriction to the listed blocks, e.g. `[1]` for the trend only.
    pub fn select_blocks(&self, which: &[usize]) -> JointPosterior {
        let p = self.grid.len();
        let idx: Vec<usize> = which
            .iter()
            .flat_map(|&b| (b * p)..((b + 1) * p))
            .collect();
        let mu = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.mu[i]));
        let cov = DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.cov[(idx[i], idx[j])]);
        JointPosterior {
            grid: self.grid.clone(),
            mu,
            cov,
            blocks: which.len(),
        }
    }

    /// Pointwise standard deviations of one block.
    pub fn sd_block(&self, block: usize) -> Vec<f64> {
        let p = self.grid.len();
        (0..p)
            .map(|i| self.cov[(block * p + i, block * p + i)].max(0.0).sqrt())
            .collect()
    }
}

/// Posterior moments of `(df, d2f)` at a single time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalMoments {
    pub mu_df: f64,
    pub mu_d2f: f64,
    pub var_df: f64,
    pub var_d2f: f64,
    pub cov_df_d2f: f64,
}

/// Cholesky factorization with a jitter ladder starting at zero, then
/// `JITTER * scale` and growing by 100x up to `1e-6 * scale`.
pub(crate) fn factorize(mut k: DMatrix<f64>, scale: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = k.nrows();
    let mut applied = 0.0;
    for jitter in [0.0, JITTER, 1e-8, 1e-6] {
        let add = jitter * scale - applied;
        if add > 0.0 {
            for i in 0..n {
                k[(i, i)] += add;
            }
            applied = jitter * scale;
        }
        if let Some(ch) = Cholesky::new(k.clone()) {
            return Ok((ch, applied));
        }
    }
    Err(Error::Factorization(format!(
        "covariance of size {n} not positive definite after jitter {applied:e}"
    )))
}

/// Conditioned Gaussian Process: a factorized `C(t, t) + sigma^2 I` together
/// with the weights `(C + sigma^2 I)^-1 (Y - mu(t))`.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    ts: Vec<f64>,
    theta: Hyperparams,
    factor: Option<Cholesky<f64, Dyn>>,
    weights: DVector<f64>,
    jitter: f64,
}

impl GpPosterior {
    pub fn new(data: &Dataset, theta: &Hyperparams) -> Result<Self> {
        validate_assumptions(&theta.kernel, false)?;
        let ts = data.ts().to_vec();
        let n = ts.len();
        if n == 0 {
            return Ok(GpPosterior {
                ts,
                theta: theta.clone(),
                factor: None,
                weights: DVector::zeros(0),
                jitter: 0.0,
            });
        }
        let kernel = &theta.kernel;
        let s2 = theta.sigma * theta.sigma;
        let k = DMatrix::from_fn(n, n, |i, j| {
            let v = kernel.partial_unchecked(0, 0, ts[i], ts[j]);
            if i == j {
                v + s2
            } else {
                v
            }
        });
        let (factor, jitter) = factorize(k, kernel.variance())?;
        let resid = DVector::from_iterator(
            n,
            ts.iter()
                .zip(data.ys())
                .map(|(&t, &y)| y - theta.mean.eval(0, t)),
        );
        let weights = factor.solve(&resid);
        Ok(GpPosterior {
            ts,
            theta: theta.clone(),
            factor: Some(factor),
            weights,
            jitter,
        })
    }

    pub fn theta(&self) -> &Hyperparams {
        &self.theta
    }

    pub fn n_obs(&self) -> usize {
        self.ts.len()
    }

    /// Diagonal jitter that was added to make the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Number of derivative blocks the kernel supports (3, or 2 for M32).
    pub fn max_blocks(&self) -> usize {
        self.theta.kernel.family().max_order() + 1
    }

    /// `K_a[i, j] = d^a/ds^a C(grid_i, t_j)`.
    fn cross(&self, order: usize, grid: &[f64]) -> DMatrix<f64> {
        let kernel = &self.theta.kernel;
        DMatrix::from_fn(grid.len(), self.ts.len(), |i, j| {
            kernel.partial_unchecked(order, 0, grid[i], self.ts[j])
        })
    }

    /// `L^-1 K_a^T` (n x p); empty when there is no data.
    fn whitened(&self, cross: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.factor {
            Some(f) => f
                .l_dirty()
                .solve_lower_triangular(&cross.transpose())
                .expect("Cholesky factor has a positive diagonal"),
            None => DMatrix::zeros(0, cross.nrows()),
        }
    }

    fn block_mean(&self, order: usize, grid: &[f64], cross: &DMatrix<f64>) -> DVector<f64> {
        let prior = DVector::from_iterator(
            grid.len(),
            grid.iter().map(|&t| self.theta.mean.eval(order, t)),
        );
        if self.ts.is_empty() {
            prior
        } else {
            prior + cross * &self.weights
        }
    }

    /// Joint posterior of the first `blocks` derivative orders on `grid`.
    pub fn joint(&self, grid: &[f64], blocks: usize) -> Result<JointPosterior> {
        if blocks == 0 || blocks > self.max_blocks() {
            let o = blocks.saturating_sub(1);
            self.theta.kernel.check_order(o, o)?;
        }
        let p = grid.len();
        let kernel = &self.theta.kernel;
        let crosses: Vec<DMatrix<f64>> = (0..blocks).map(|a| self.cross(a, grid)).collect();
        let whites: Vec<DMatrix<f64>> = crosses.iter().map(|c| self.whitened(c)).collect();
        let mut mu = DVector::zeros(blocks * p);
        let mut cov = DMatrix::zeros(blocks * p, blocks * p);
        for a in 0..blocks {
            mu.rows_mut(a * p, p)
                .copy_from(&self.block_mean(a, grid, &crosses[a]));
            for b in a..blocks {
                let reduction = whites[a].transpose() * &whites[b];
                for i in 0..p {
                    for j in 0..p {
                        let v = kernel.partial_unchecked(a, b, grid[i], grid[j]) - reduction[(i, j)];
                        cov[(a * p + i, b * p + j)] = v;
                        cov[(b * p + j, a * p + i)] = v;
                    }
                }
            }
        }
        JointPosterior::new(grid.to_vec(), mu, cov, blocks)
    }

    /// Posterior mean and variance of `f` at each grid point.
    pub fn f_marginals(&self, grid: &[f64]) -> (Vec<f64>, Vec<f64>) {
        self.marginals(0, grid)
    }

    /// Posterior mean and variance of `df` at each grid point.
    pub fn df_marginals(&self, grid: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.theta.kernel.check_order(1, 1)?;
        Ok(self.marginals(1, grid))
    }

    fn marginals(&self, order: usize, grid: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let kernel = &self.theta.kernel;
        let cross = self.cross(order, grid);
        let white = self.whitened(&cross);
        let mean = self.block_mean(order, grid, &cross);
        let var = grid
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let prior = kernel.partial_unchecked(order, order, t, t);
                prior - white.column(i).norm_squared()
            })
            .collect();
        (mean.as_slice().to_vec(), var)
    }

    /// Posterior moments of `(df, d2f)` at each grid point.
    pub fn local_moments(&self, grid: &[f64]) -> Result<Vec<LocalMoments>> {
        self.theta.kernel.check_order(2, 2)?;
        let kernel = &self.theta.kernel;
        let c1 = self.cross(1, grid);
        let c2 = self.cross(2, grid);
        let w1 = self.whitened(&c1);
        let w2 = self.whitened(&c2);
        let m1 = self.block_mean(1, grid, &c1);
        let m2 = self.block_mean(2, grid, &c2);
        Ok(grid
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let v1 = w1.column(i);
                let v2 = w2.column(i);
                LocalMoments {
                    mu_df: m1[i],
                    mu_d2f: m2[i],
                    var_df: kernel.partial_unchecked(1, 1, t, t) - v1.norm_squared(),
                    var_d2f: kernel.partial_unchecked(2, 2, t, t) - v2.norm_squared(),
                    cov_df_d2f: kernel.partial_unchecked(1, 2, t, t) - v1.dot(&v2),
                }
            })
            .collect())
    }

    /// Posterior mean and variance of a new observation at `t_star`.
    pub fn predictive(&self, t_star: f64) -> (f64, f64) {
        let (m, v) = self.f_marginals(&[t_star]);
        (m[0], v[0] + self.theta.sigma * self.theta.sigma)
    }
}

/// Prior joint law of `(f, df, d2f)` on `grid`; kernels without a second
/// mean-square derivative yield only the `(f, df)` blocks.
pub fn prior_joint(theta: &Hyperparams, grid: &[f64]) -> Result<JointPosterior> {
    joint_posterior(&Dataset::empty(), theta, grid)
}

/// Posterior law of `(f, df, d2f)` on `grid` given the data.
pub fn joint_posterior(data: &Dataset, theta: &Hyperparams, grid: &[f64]) -> Result<JointPosterior> {
    let post = GpPosterior::new(data, theta)?;
    post.joint(grid, post.max_blocks())
}

/// Mean and variance of a new observation at `t_star`.
pub fn predictive(data: &Dataset, theta: &Hyperparams, t_star: f64) -> Result<(f64, f64)> {
    Ok(GpPosterior::new(data, theta)?.predictive(t_star))
}
