use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::posterior::{factorize, Hyperparams};

fn noisy_gram(ts: &[f64], kernel: &KernelSpec, sigma: f64) -> DMatrix<f64> {
    let n = ts.len();
    let s2 = sigma * sigma;
    DMatrix::from_fn(n, n, |i, j| {
        let v = kernel.partial_unchecked(0, 0, ts[i], ts[j]);
        if i == j {
            v + s2
        } else {
            v
        }
    })
}

fn log_det(factor: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * factor.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

fn factor_for(ts: &[f64], kernel: &KernelSpec, sigma: f64) -> Result<Cholesky<f64, Dyn>> {
    let k = noisy_gram(ts, kernel, sigma);
    let scale = kernel.variance().max(sigma * sigma);
    Ok(factorize(k, scale)?.0)
}

/// Log-density of the observations with the latent function integrated out,
/// `log N(Y; mu(t), C(t, t) + sigma^2 I)`, including the `-n/2 log(2 pi)`
/// constant.
pub fn marginal_loglik(data: &Dataset, theta: &Hyperparams) -> Result<f64> {
    let n = data.len();
    if n == 0 {
        return Ok(0.0);
    }
    let factor = factor_for(data.ts(), &theta.kernel, theta.sigma)?;
    let resid = DVector::from_iterator(
        n,
        data.ts()
            .iter()
            .zip(data.ys())
            .map(|(&t, &y)| y - theta.mean.eval(0, t)),
    );
    let mut z = resid;
    factor.l_dirty().solve_lower_triangular_mut(&mut z);
    Ok(-0.5 * log_det(&factor) - 0.5 * z.norm_squared() - 0.5 * n as f64 * (2.0 * PI).ln())
}

/// Marginal log-likelihood maximized over the mean coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfiledFit {
    pub loglik: f64,
    /// Generalized least squares coefficients of `(t - center)^k`.
    pub beta: Vec<f64>,
}

/// Marginal log-likelihood with the polynomial mean of the given degree
/// replaced by its generalized least squares estimate. `None` is the zero
/// mean and returns the plain marginal log-likelihood.
pub fn profiled_loglik(
    data: &Dataset,
    kernel: &KernelSpec,
    sigma: f64,
    degree: Option<usize>,
    center: f64,
) -> Result<ProfiledFit> {
    let ts = data.ts();
    let n = ts.len();
    let q = degree.map_or(0, |d| d + 1);
    if n < q.max(1) {
        return Err(Error::InvalidData(format!(
            "{n} observations cannot identify {q} mean coefficients"
        )));
    }
    let factor = factor_for(ts, kernel, sigma)?;
    let l = factor.l_dirty();
    // scaled design keeps the normal equations well conditioned
    let scale = ts.iter().map(|t| (t - center).abs()).fold(0.0, f64::max);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut z = DVector::from_column_slice(data.ys());
    l.solve_lower_triangular_mut(&mut z);
    let mut beta = Vec::new();
    if q > 0 {
        let mut h = DMatrix::from_fn(n, q, |i, k| ((ts[i] - center) / scale).powi(k as i32));
        l.solve_lower_triangular_mut(&mut h);
        let a = h.transpose() * &h;
        let b = h.transpose() * &z;
        let gamma = Cholesky::new(a)
            .map(|ch| ch.solve(&b))
            .ok_or_else(|| Error::Factorization("mean design is rank deficient".into()))?;
        z -= &h * &gamma;
        beta = gamma
            .iter()
            .enumerate()
            .map(|(k, g)| g / scale.powi(k as i32))
            .collect();
    }
    let loglik = -0.5 * log_det(&factor) - 0.5 * z.norm_squared() - 0.5 * n as f64 * (2.0 * PI).ln();
    if !loglik.is_finite() {
        return Err(Error::Factorization(format!("non-finite log-likelihood {loglik}")));
    }
    Ok(ProfiledFit { loglik, beta })
}
