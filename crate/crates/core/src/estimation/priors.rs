use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal, StudentsT};

use super::{FitResult, ModelSpec};
use crate::error::{Error, Result};

/// One-dimensional prior. Half-distributions are the location-scale law
/// truncated to `[0, inf)` and renormalized; parameters are given in the
/// order (location, scale, df).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prior {
    StudentT { location: f64, scale: f64, df: f64 },
    HalfStudentT { location: f64, scale: f64, df: f64 },
    HalfNormal { location: f64, scale: f64 },
    /// Point mass; the parameter is held constant.
    Fixed { value: f64 },
}

enum Base {
    T(StudentsT),
    N(Normal),
}

impl Base {
    fn ln_pdf(&self, x: f64) -> f64 {
        match self {
            Base::T(d) => d.ln_pdf(x),
            Base::N(d) => d.ln_pdf(x),
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        match self {
            Base::T(d) => d.cdf(x),
            Base::N(d) => d.cdf(x),
        }
    }

    fn inverse_cdf(&self, p: f64) -> f64 {
        match self {
            Base::T(d) => d.inverse_cdf(p),
            Base::N(d) => d.inverse_cdf(p),
        }
    }
}

impl Prior {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Prior::StudentT { location, scale, df } | Prior::HalfStudentT { location, scale, df } => {
                location.is_finite() && scale > 0.0 && scale.is_finite() && df > 0.0 && df.is_finite()
            }
            Prior::HalfNormal { location, scale } => location.is_finite() && scale > 0.0 && scale.is_finite(),
            Prior::Fixed { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid prior {self:?}")))
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, Prior::Fixed { .. })
    }

    fn base(&self) -> Option<Base> {
        match *self {
            Prior::StudentT { location, scale, df } | Prior::HalfStudentT { location, scale, df } => {
                StudentsT::new(location, scale, df).ok().map(Base::T)
            }
            Prior::HalfNormal { location, scale } => Normal::new(location, scale).ok().map(Base::N),
            Prior::Fixed { .. } => None,
        }
    }

    fn truncated(&self) -> bool {
        matches!(self, Prior::HalfStudentT { .. } | Prior::HalfNormal { .. })
    }

    /// Log-density at `x`; `-inf` below zero for half-distributions and away
    /// from the atom for `Fixed`.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if let Prior::Fixed { value } = *self {
            return if x == value { 0.0 } else { f64::NEG_INFINITY };
        }
        let Some(base) = self.base() else {
            return f64::NEG_INFINITY;
        };
        if !self.truncated() {
            return base.ln_pdf(x);
        }
        if x < 0.0 {
            return f64::NEG_INFINITY;
        }
        let mass = 1.0 - base.cdf(0.0);
        if mass > 0.0 {
            base.ln_pdf(x) - mass.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Quantile function.
    pub fn quantile(&self, p: f64) -> f64 {
        if let Prior::Fixed { value } = *self {
            return value;
        }
        let Some(base) = self.base() else {
            return f64::NAN;
        };
        if !self.truncated() {
            return base.inverse_cdf(p);
        }
        let f0 = base.cdf(0.0);
        base.inverse_cdf(f0 + p * (1.0 - f0)).max(0.0)
    }
}

/// Independent priors for every hyper-parameter of a [`ModelSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub beta: Vec<Prior>,
    pub alpha: Prior,
    pub rho: Prior,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<Prior>,
    pub sigma: Prior,
}

impl PriorSpec {
    /// Priors in [`ModelSpec::param_names`] order.
    pub fn ordered(&self, model: &ModelSpec) -> Result<Vec<Prior>> {
        if self.beta.len() != model.n_beta() {
            return Err(Error::LengthMismatch {
                expected: model.n_beta(),
                got: self.beta.len(),
            });
        }
        let mut out = self.beta.clone();
        out.push(self.alpha);
        out.push(self.rho);
        match (model.family == crate::kernels::KernelFamily::RationalQuadratic, self.nu) {
            (true, Some(p)) => out.push(p),
            (true, None) => return Err(Error::InvalidParameter("RQ model needs a prior for nu".into())),
            (false, Some(_)) => {
                return Err(Error::InvalidParameter(format!(
                    "prior for nu given but the {} kernel has no nu",
                    model.family
                )))
            }
            (false, None) => {}
        }
        out.push(self.sigma);
        for p in &out {
            p.validate()?;
        }
        // positive parameters must not be pinned at or below zero
        let nb = model.n_beta();
        for p in &out[nb..] {
            if let Prior::Fixed { value } = p {
                if *value <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "fixed value {value} for a positive parameter"
                    )));
                }
            }
        }
        Ok(out)
    }
}

/// Heavy-tailed priors centred at a maximum likelihood fit: `T(beta, 3, 3)`
/// for mean coefficients, half-`T(., 3, 3)` for `alpha`, `nu` and `sigma`,
/// and half-`N(rho, 1)` for `rho`. The unit scale of the last one is in the
/// time units of the data.
pub fn default_priors(fit: &FitResult) -> PriorSpec {
    let theta = &fit.theta;
    let half_t = |location| Prior::HalfStudentT {
        location,
        scale: 3.0,
        df: 3.0,
    };
    PriorSpec {
        beta: (0..fit.model.n_beta())
            .map(|k| Prior::StudentT {
                location: theta.mean.coefficients().get(k).copied().unwrap_or(0.0),
                scale: 3.0,
                df: 3.0,
            })
            .collect(),
        alpha: half_t(theta.kernel.alpha()),
        rho: Prior::HalfNormal {
            location: theta.kernel.rho(),
            scale: 1.0,
        },
        nu: theta.kernel.nu().map(half_t),
        sigma: half_t(theta.sigma),
    }
}
