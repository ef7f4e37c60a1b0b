//! Monotone outcome transforms. The model is fitted to `g(Y)` with the latent
//! function on the same transformed scale; trend statements map back because
//! `g` is strictly increasing.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::posterior::{GaussianSampler, GpPosterior, Hyperparams, JointPosterior};
use crate::stats::quantiles;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformSpec {
    #[default]
    Identity,
    Log,
    Logit,
    ArcsineSqrt,
}

impl TransformSpec {
    pub fn name(self) -> &'static str {
        match self {
            TransformSpec::Identity => "identity",
            TransformSpec::Log => "log",
            TransformSpec::Logit => "logit",
            TransformSpec::ArcsineSqrt => "arcsine_sqrt",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "identity" | "none" => Some(TransformSpec::Identity),
            "log" => Some(TransformSpec::Log),
            "logit" => Some(TransformSpec::Logit),
            "arcsine_sqrt" | "arcsine-sqrt" | "asin_sqrt" => Some(TransformSpec::ArcsineSqrt),
            _ => None,
        }
    }

    /// Whether `y` lies in the open domain of `g`.
    pub fn in_domain(self, y: f64) -> bool {
        match self {
            TransformSpec::Identity => y.is_finite(),
            TransformSpec::Log => y > 0.0 && y.is_finite(),
            TransformSpec::Logit | TransformSpec::ArcsineSqrt => y > 0.0 && y < 1.0,
        }
    }

    pub fn forward(self, y: f64) -> f64 {
        match self {
            TransformSpec::Identity => y,
            TransformSpec::Log => y.ln(),
            TransformSpec::Logit => (y / (1.0 - y)).ln(),
            TransformSpec::ArcsineSqrt => y.sqrt().asin(),
        }
    }

    pub fn inverse(self, z: f64) -> f64 {
        match self {
            TransformSpec::Identity => z,
            TransformSpec::Log => z.exp(),
            TransformSpec::Logit => 1.0 / (1.0 + (-z).exp()),
            TransformSpec::ArcsineSqrt => z.sin().powi(2),
        }
    }

    /// `g'(y)`.
    pub fn derivative(self, y: f64) -> f64 {
        match self {
            TransformSpec::Identity => 1.0,
            TransformSpec::Log => 1.0 / y,
            TransformSpec::Logit => 1.0 / (y * (1.0 - y)),
            TransformSpec::ArcsineSqrt => 0.5 / (y * (1.0 - y)).sqrt(),
        }
    }

    /// `(g^-1)'(z)`.
    pub fn inverse_derivative(self, z: f64) -> f64 {
        match self {
            TransformSpec::Identity => 1.0,
            TransformSpec::Log => z.exp(),
            TransformSpec::Logit => {
                let p = 1.0 / (1.0 + (-z).exp());
                p * (1.0 - p)
            }
            TransformSpec::ArcsineSqrt => (2.0 * z).sin(),
        }
    }
}

/// Replaces every outcome by `g(y)`. Values on or outside the domain boundary
/// are rejected, never clipped.
pub fn transform_dataset(spec: TransformSpec, data: &Dataset) -> Result<Dataset> {
    if let Some((index, &value)) = data.ys().iter().enumerate().find(|(_, &y)| !spec.in_domain(y)) {
        return Err(Error::Domain {
            index,
            value,
            transform: spec.name(),
        });
    }
    Ok(data.map_ys(|y| spec.forward(y)))
}

/// TDI of the latent function on the original scale. The original-scale
/// trend is `df * (g^-1)'(f)` with a positive second factor, so it has the
/// sign of the transformed-scale trend and the index equals the
/// transformed-scale TDI.
pub fn tdi_original_scale(
    data: &Dataset,
    spec: TransformSpec,
    theta: &Hyperparams,
    t: f64,
    delta: f64,
) -> Result<f64> {
    let transformed = transform_dataset(spec, data)?;
    Ok(GpPosterior::new(&transformed, theta)?.tdi_values(&[t + delta])?[0])
}

/// Monte-Carlo route to the original-scale TDI: samples `(f, df)` on the
/// transformed scale at `t + delta` and evaluates the sign of
/// `df * (g^-1)'(f)`. Returns the estimate and its binomial standard error.
pub fn tdi_original_scale_mc(
    data: &Dataset,
    spec: TransformSpec,
    theta: &Hyperparams,
    t: f64,
    delta: f64,
    k: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(Error::InvalidParameter("need at least one draw".into()));
    }
    let transformed = transform_dataset(spec, data)?;
    let jp = GpPosterior::new(&transformed, theta)?.joint(&[t + delta], 2)?;
    let draws = GaussianSampler::from_joint(&jp)?.sample(k, seed);
    let positive = draws
        .row_iter()
        .filter(|row| row[1] * spec.inverse_derivative(row[0]) > 0.0)
        .count();
    let p = positive as f64 / k as f64;
    Ok((p, (p * (1.0 - p) / k as f64).sqrt()))
}

/// Per-grid-point `[2.5%, 50%, 97.5%]` quantiles of `g^-1(f)` from `k`
/// posterior draws of the transformed-scale latent function.
pub fn back_transform_summary(
    spec: TransformSpec,
    jp: &JointPosterior,
    k: usize,
    seed: u64,
) -> Result<Vec<[f64; 3]>> {
    if k == 0 {
        return Err(Error::InvalidParameter("need at least one draw".into()));
    }
    let f_only = jp.select_blocks(&[0]);
    let draws = GaussianSampler::from_joint(&f_only)?.sample(k, seed);
    Ok(draws
        .column_iter()
        .map(|col| {
            let vals: Vec<f64> = col.iter().map(|&z| spec.inverse(z)).collect();
            let q = quantiles(&vals, &[0.025, 0.5, 0.975]);
            [q[0], q[1], q[2]]
        })
        .collect())
}
