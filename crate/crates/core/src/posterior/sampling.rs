use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::JointPosterior;
use crate::error::{Error, Result};

/// Draws per RNG substream. Batch `b` of a call with seed `s` always uses
/// stream `b` of `ChaCha8(s)`, so output is schedule independent.
const BATCH: usize = 128;

/// Sampler for `N(mean, cov)` with a precomputed square-root factor.
///
/// The factor comes from a Cholesky decomposition of the correlation matrix
/// when it is numerically positive definite and from a clipped symmetric
/// eigendecomposition otherwise (smooth kernels on fine grids are singular to
/// working precision). Coordinates with zero variance are held at their mean.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn new(mean: DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let m = mean.len();
        if cov.shape() != (m, m) {
            return Err(Error::LengthMismatch {
                expected: m,
                got: cov.nrows(),
            });
        }
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::Factorization("non-finite covariance entry".into()));
        }
        let active: Vec<usize> = (0..m).filter(|&i| cov[(i, i)] > 0.0).collect();
        let sd: Vec<f64> = active.iter().map(|&i| cov[(i, i)].sqrt()).collect();
        let r = active.len();
        let corr = DMatrix::from_fn(r, r, |i, j| {
            let v = cov[(active[i], active[j])] / (sd[i] * sd[j]);
            if i == j {
                1.0
            } else {
                v
            }
        });
        let root = match Cholesky::new(corr.clone()) {
            Some(ch) => ch.unpack(),
            None => {
                let eig = SymmetricEigen::new(corr);
                let mut v = eig.eigenvectors;
                for (j, lam) in eig.eigenvalues.iter().enumerate() {
                    let s = lam.max(0.0).sqrt();
                    v.column_mut(j).scale_mut(s);
                }
                v
            }
        };
        let mut factor = DMatrix::zeros(m, r);
        for (ai, &i) in active.iter().enumerate() {
            for j in 0..r {
                factor[(i, j)] = sd[ai] * root[(ai, j)];
            }
        }
        Ok(GaussianSampler { mean, factor })
    }

    pub fn from_joint(jp: &JointPosterior) -> Result<Self> {
        Self::new(jp.mu().clone(), jp.cov())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn batch(&self, seed: u64, stream: u64, count: usize) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let r = self.factor.ncols();
        let z = DMatrix::from_fn(r, count, |_, _| StandardNormal.sample(&mut rng));
        let mut x = &self.factor * z;
        for mut col in x.column_iter_mut() {
            col += &self.mean;
        }
        x
    }

    /// `k` draws as the rows of a `k x dim` matrix.
    pub fn sample(&self, k: usize, seed: u64) -> DMatrix<f64> {
        let m = self.dim();
        let n_batches = k.div_ceil(BATCH);
        let batches: Vec<DMatrix<f64>> = (0..n_batches)
            .into_par_iter()
            .map(|b| {
                let count = BATCH.min(k - b * BATCH);
                self.batch(seed, b as u64, count)
            })
            .collect();
        let mut out = DMatrix::zeros(k, m);
        for (b, x) in batches.iter().enumerate() {
            for j in 0..x.ncols() {
                for i in 0..m {
                    out[(b * BATCH + j, i)] = x[(i, j)];
                }
            }
        }
        out
    }
}

/// `k` independent draws from the joint posterior, one per row.
pub fn sample_paths(jp: &JointPosterior, k: usize, seed: u64) -> Result<DMatrix<f64>> {
    Ok(GaussianSampler::from_joint(jp)?.sample(k, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{KernelSpec, MeanSpec};
    use crate::posterior::{prior_joint, Hyperparams};

    #[test]
    fn empty_and_deterministic() {
        let theta = Hyperparams::new(MeanSpec::zero(), KernelSpec::se(1.0, 0.3).unwrap(), 0.1).unwrap();
        let jp = prior_joint(&theta, &[0.0, 0.1, 0.2]).unwrap();
        assert_eq!(sample_paths(&jp, 0, 1).unwrap().nrows(), 0);
        let a = sample_paths(&jp, 300, 42).unwrap();
        let b = sample_paths(&jp, 300, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_paths(&jp, 300, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn prefix_is_stable_across_k() {
        let theta = Hyperparams::new(MeanSpec::zero(), KernelSpec::se(1.0, 0.3).unwrap(), 0.1).unwrap();
        let jp = prior_joint(&theta, &[0.0, 0.5]).unwrap();
        let a = sample_paths(&jp, 200, 7).unwrap();
        let b = sample_paths(&jp, 130, 7).unwrap();
        assert!((a.rows(0, 130) - b.rows(0, 130)).amax() < 1e-12);
    }

    #[test]
    fn zero_variance_is_a_point_mass() {
        let mean = DVector::from_vec(vec![1.0, 2.0]);
        let s = GaussianSampler::new(mean, &DMatrix::zeros(2, 2)).unwrap();
        let x = s.sample(5, 3);
        assert!(x.column(0).iter().all(|&v| v == 1.0));
        assert!(x.column(1).iter().all(|&v| v == 2.0));
    }

    #[test]
    fn singular_covariance_falls_back_to_eigen() {
        // rank one: x2 = 2 x1
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let s = GaussianSampler::new(DVector::zeros(2), &cov).unwrap();
        let x = s.sample(50, 9);
        for row in x.row_iter() {
            assert!((row[1] - 2.0 * row[0]).abs() < 1e-7);
        }
    }
}
