//! Hyper-parameter estimation: marginal maximum likelihood and a fully
//! Bayesian treatment by adaptive random-walk Metropolis.

mod diagnostics;
mod likelihood;
mod mcmc;
mod optimize;
mod priors;
mod summary;

pub use diagnostics::{ess, rhat, rhat_chains};
pub use likelihood::{marginal_loglik, profiled_loglik, ProfiledFit};
pub use mcmc::{fit_bayes, sample_prior, BayesOptions, McmcSamples};
pub use optimize::{fit_ml, FitOptions, FitResult};
pub use priors::{default_priors, Prior, PriorSpec};
pub use summary::{
    index_posterior, latent_bands, param_summary, Band, IndexPosterior, IndexPosteriorOptions,
    LatentBands, ParamSummary, QuantileCurve,
};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec, MeanSpec};
use crate::posterior::Hyperparams;

/// A candidate model: polynomial mean degree (`None` for the zero mean) and
/// kernel family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub degree: Option<usize>,
    pub family: KernelFamily,
}

impl ModelSpec {
    pub fn new(degree: Option<usize>, family: KernelFamily) -> Result<Self> {
        if degree.is_some_and(|d| d > 2) {
            return Err(Error::InvalidParameter(format!(
                "mean degree must be at most 2, got {}",
                degree.unwrap_or_default()
            )));
        }
        Ok(ModelSpec { degree, family })
    }

    pub fn n_beta(&self) -> usize {
        self.degree.map_or(0, |d| d + 1)
    }

    /// Total number of free hyper-parameters.
    pub fn n_params(&self) -> usize {
        self.n_beta() + self.family.n_params() + 1
    }

    /// Parameter names in storage order: `beta0.., alpha, rho, [nu], sigma`.
    pub fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.n_beta()).map(|k| format!("beta{k}")).collect();
        names.push("alpha".into());
        names.push("rho".into());
        if self.family == KernelFamily::RationalQuadratic {
            names.push("nu".into());
        }
        names.push("sigma".into());
        names
    }

    /// Builds hyper-parameters from a natural-scale vector in
    /// [`param_names`](Self::param_names) order.
    pub fn hyperparams(&self, values: &[f64], center: f64) -> Result<Hyperparams> {
        let p = self.n_params();
        if values.len() != p {
            return Err(Error::LengthMismatch {
                expected: p,
                got: values.len(),
            });
        }
        let nb = self.n_beta();
        let mean = MeanSpec::centered(values[..nb].to_vec(), center)?;
        let nu = (self.family == KernelFamily::RationalQuadratic).then(|| values[nb + 2]);
        let kernel = KernelSpec::new(self.family, values[nb], values[nb + 1], nu)?;
        Hyperparams::new(mean, kernel, values[p - 1])
    }

    /// Inverse of [`hyperparams`](Self::hyperparams). Mean coefficients are
    /// padded with zeros when `theta` has a lower degree.
    pub fn values(&self, theta: &Hyperparams) -> Vec<f64> {
        let mut out: Vec<f64> = (0..self.n_beta())
            .map(|k| theta.mean.coefficients().get(k).copied().unwrap_or(0.0))
            .collect();
        out.push(theta.kernel.alpha());
        out.push(theta.kernel.rho());
        if self.family == KernelFamily::RationalQuadratic {
            out.push(theta.kernel.nu().unwrap_or(1.0));
        }
        out.push(theta.sigma);
        out
    }

    /// Parses `mean:kernel`, e.g. `constant:rq` or `1:se`.
    pub fn parse(s: &str) -> Option<Self> {
        let (mean, kernel) = s.split_once(':')?;
        let degree = match mean.trim() {
            "zero" | "none" => None,
            "constant" | "0" => Some(0),
            "linear" | "1" => Some(1),
            "quadratic" | "2" => Some(2),
            _ => return None,
        };
        Some(ModelSpec {
            degree,
            family: KernelFamily::parse(kernel.trim())?,
        })
    }

    pub fn mean_name(&self) -> &'static str {
        match self.degree {
            None => "zero",
            Some(0) => "constant",
            Some(1) => "linear",
            _ => "quadratic",
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.mean_name(), self.family.short_name())
    }
}

/// Expansion point of the mean polynomial: the midpoint of the observed span.
pub fn mean_center(data: &Dataset) -> f64 {
    data.span().map_or(0.0, |(a, b)| 0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_and_round_trip() {
        let m = ModelSpec::new(Some(1), KernelFamily::RationalQuadratic).unwrap();
        assert_eq!(m.param_names(), ["beta0", "beta1", "alpha", "rho", "nu", "sigma"]);
        assert_eq!(m.n_params(), 6);
        let v = [1.0, -0.5, 2.0, 0.3, 4.0, 0.1];
        let theta = m.hyperparams(&v, 3.0).unwrap();
        assert_eq!(theta.mean.center(), 3.0);
        assert_eq!(m.values(&theta), v);
        assert!(m.hyperparams(&v[..5], 0.0).is_err());
        assert!(m.hyperparams(&[1.0, -0.5, -2.0, 0.3, 4.0, 0.1], 0.0).is_err());
        assert!(ModelSpec::new(Some(3), KernelFamily::SquaredExponential).is_err());
    }

    #[test]
    fn parse_and_display() {
        let m = ModelSpec::parse("constant:rq").unwrap();
        assert_eq!(m.degree, Some(0));
        assert_eq!(m.to_string(), "constant:rq");
        assert_eq!(ModelSpec::parse("zero:se").unwrap().n_params(), 3);
        assert!(ModelSpec::parse("cubic:se").is_none());
        assert!(ModelSpec::parse("se").is_none());
    }
}
