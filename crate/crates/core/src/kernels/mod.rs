//! Stationary covariance functions and their mixed partial derivatives.
//!
//! Every supported kernel depends on `(s, t)` only through `r = s - t`, so a
//! mixed partial `d^a/ds^a d^b/dt^b C(s, t)` equals `(-1)^b k^(a+b)(r)` where
//! `k` is the radial profile. The radial derivatives up to fourth order are
//! hard-coded per family.

mod mean;

pub use mean::{mean_eval, MeanSpec};

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Assumption, Error, Result};

/// Maximum derivative order of the joint `(f, df, d2f)` process.
pub const MAX_ORDER: usize = 2;

/// Relative diagonal jitter, in units of `alpha^2`, used when a factorization
/// needs strict positive definiteness.
pub const JITTER: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KernelFamily {
    #[serde(rename = "se")]
    SquaredExponential,
    #[serde(rename = "rq")]
    RationalQuadratic,
    #[serde(rename = "m52")]
    Matern52,
    #[serde(rename = "m32")]
    Matern32,
    #[serde(rename = "ou")]
    OrnsteinUhlenbeck,
}

impl KernelFamily {
    /// The families usable for trend analysis.
    pub const ALL: [KernelFamily; 4] = [
        KernelFamily::SquaredExponential,
        KernelFamily::RationalQuadratic,
        KernelFamily::Matern32,
        KernelFamily::Matern52,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            KernelFamily::SquaredExponential => "se",
            KernelFamily::RationalQuadratic => "rq",
            KernelFamily::Matern52 => "m52",
            KernelFamily::Matern32 => "m32",
            KernelFamily::OrnsteinUhlenbeck => "ou",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "se" | "squared-exponential" => Some(KernelFamily::SquaredExponential),
            "rq" | "rational-quadratic" => Some(KernelFamily::RationalQuadratic),
            "m52" | "matern52" => Some(KernelFamily::Matern52),
            "m32" | "matern32" => Some(KernelFamily::Matern32),
            "ou" | "ornstein-uhlenbeck" => Some(KernelFamily::OrnsteinUhlenbeck),
            _ => None,
        }
    }

    /// Number of kernel parameters (alpha, rho and, for RQ, nu).
    pub fn n_params(self) -> usize {
        match self {
            KernelFamily::RationalQuadratic => 3,
            _ => 2,
        }
    }

    /// Tie-breaking order used by model selection: SE < M52 < M32 < RQ.
    pub fn complexity_rank(self) -> u8 {
        match self {
            KernelFamily::SquaredExponential => 0,
            KernelFamily::Matern52 => 1,
            KernelFamily::Matern32 => 2,
            KernelFamily::RationalQuadratic => 3,
            KernelFamily::OrnsteinUhlenbeck => 4,
        }
    }

    /// Highest per-argument derivative order for which the mixed partial exists.
    pub fn max_order(self) -> usize {
        match self {
            KernelFamily::SquaredExponential
            | KernelFamily::RationalQuadratic
            | KernelFamily::Matern52 => 2,
            KernelFamily::Matern32 => 1,
            KernelFamily::OrnsteinUhlenbeck => 0,
        }
    }

    pub fn admits(self, order_s: usize, order_t: usize) -> bool {
        let m = self.max_order();
        order_s <= m && order_t <= m
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            KernelFamily::SquaredExponential => "SE",
            KernelFamily::RationalQuadratic => "RQ",
            KernelFamily::Matern52 => "M52",
            KernelFamily::Matern32 => "M32",
            KernelFamily::OrnsteinUhlenbeck => "OU",
        };
        f.write_str(name)
    }
}

/// Covariance family with its parameters `alpha` (output scale), `rho`
/// (length-scale, in time units) and `nu` (RQ shape).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    family: KernelFamily,
    alpha: f64,
    rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nu: Option<f64>,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

impl KernelSpec {
    pub fn new(family: KernelFamily, alpha: f64, rho: f64, nu: Option<f64>) -> Result<Self> {
        check_positive("alpha", alpha)?;
        check_positive("rho", rho)?;
        match (family, nu) {
            (KernelFamily::RationalQuadratic, Some(nu)) => check_positive("nu", nu)?,
            (KernelFamily::RationalQuadratic, None) => {
                return Err(Error::InvalidParameter("RQ kernel requires nu".into()))
            }
            (_, Some(_)) => {
                return Err(Error::InvalidParameter(format!(
                    "nu is only defined for the RQ kernel, not {family}"
                )))
            }
            (_, None) => {}
        }
        Ok(KernelSpec {
            family,
            alpha,
            rho,
            nu,
        })
    }

    pub fn se(alpha: f64, rho: f64) -> Result<Self> {
        Self::new(KernelFamily::SquaredExponential, alpha, rho, None)
    }

    pub fn rq(alpha: f64, rho: f64, nu: f64) -> Result<Self> {
        Self::new(KernelFamily::RationalQuadratic, alpha, rho, Some(nu))
    }

    pub fn m52(alpha: f64, rho: f64) -> Result<Self> {
        Self::new(KernelFamily::Matern52, alpha, rho, None)
    }

    pub fn m32(alpha: f64, rho: f64) -> Result<Self> {
        Self::new(KernelFamily::Matern32, alpha, rho, None)
    }

    pub fn ou(alpha: f64, rho: f64) -> Result<Self> {
        Self::new(KernelFamily::OrnsteinUhlenbeck, alpha, rho, None)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn nu(&self) -> Option<f64> {
        self.nu
    }

    /// Prior variance of `f(t)`.
    pub fn variance(&self) -> f64 {
        self.alpha * self.alpha
    }

    /// Same family and shape with a rescaled time axis (`t -> c t`).
    pub fn rescale_time(&self, c: f64) -> Result<Self> {
        Self::new(self.family, self.alpha, self.rho * c, self.nu)
    }

    /// `k^(m)(r)`: the m-th derivative of the radial profile. Callers guarantee
    /// `m <= 2 * max_order`.
    pub(crate) fn radial(&self, m: usize, r: f64) -> f64 {
        let a2 = self.alpha * self.alpha;
        let rho = self.rho;
        match self.family {
            KernelFamily::SquaredExponential => {
                let x = r / rho;
                let e = a2 * (-0.5 * x * x).exp();
                // d^m/dr^m exp(-x^2/2) = (-1)^m rho^-m He_m(x) exp(-x^2/2)
                let x2 = x * x;
                match m {
                    0 => e,
                    1 => -x / rho * e,
                    2 => (x2 - 1.0) / (rho * rho) * e,
                    3 => -(x2 * x - 3.0 * x) / (rho * rho * rho) * e,
                    4 => (x2 * x2 - 6.0 * x2 + 3.0) / (rho * rho * rho * rho) * e,
                    _ => unreachable!("radial order {m}"),
                }
            }
            KernelFamily::RationalQuadratic => {
                let nu = self.nu.expect("RQ kernel carries nu");
                let a = 1.0 / (2.0 * rho * rho * nu);
                let u = 1.0 + a * r * r;
                // g(u) = u^-nu and its derivatives, chained through u(r) = 1 + a r^2
                let g = |k: usize| -> f64 {
                    let mut c = 1.0;
                    for i in 0..k {
                        c *= -nu - i as f64;
                    }
                    c * u.powf(-nu - k as f64)
                };
                let du = 2.0 * a * r;
                let d2u = 2.0 * a;
                let v = match m {
                    0 => g(0),
                    1 => g(1) * du,
                    2 => g(2) * du * du + g(1) * d2u,
                    3 => g(3) * du.powi(3) + 3.0 * g(2) * du * d2u,
                    4 => g(4) * du.powi(4) + 6.0 * g(3) * du * du * d2u + 3.0 * g(2) * d2u * d2u,
                    _ => unreachable!("radial order {m}"),
                };
                a2 * v
            }
            KernelFamily::Matern52 => {
                let c = 5f64.sqrt() / rho;
                let d = r.abs();
                let cd = c * d;
                let e = a2 * (-cd).exp();
                let sgn = r.signum();
                let c2 = c * c;
                match m {
                    0 => (1.0 + cd + cd * cd / 3.0) * e,
                    1 => -sgn * c2 / 3.0 * d * (1.0 + cd) * e,
                    2 => -c2 / 3.0 * (1.0 + cd - cd * cd) * e,
                    3 => sgn * c2 * c2 / 3.0 * d * (3.0 - cd) * e,
                    4 => c2 * c2 / 3.0 * (3.0 - 5.0 * cd + cd * cd) * e,
                    _ => unreachable!("radial order {m}"),
                }
            }
            KernelFamily::Matern32 => {
                let c = 3f64.sqrt() / rho;
                let d = r.abs();
                let cd = c * d;
                let e = a2 * (-cd).exp();
                match m {
                    0 => (1.0 + cd) * e,
                    1 => -r.signum() * c * c * d * e,
                    // continuous extension at r = 0: -3 alpha^2 / rho^2
                    2 => -c * c * (1.0 - cd) * e,
                    _ => unreachable!("radial order {m}"),
                }
            }
            KernelFamily::OrnsteinUhlenbeck => match m {
                0 => a2 * (-r.abs() / rho).exp(),
                _ => unreachable!("radial order {m}"),
            },
        }
    }

    /// Unchecked mixed partial; the order must be admissible.
    #[inline]
    pub(crate) fn partial_unchecked(&self, order_s: usize, order_t: usize, s: f64, t: f64) -> f64 {
        let v = self.radial(order_s + order_t, s - t);
        if order_t % 2 == 1 {
            -v
        } else {
            v
        }
    }

    pub(crate) fn check_order(&self, order_s: usize, order_t: usize) -> Result<()> {
        if self.family.admits(order_s, order_t) {
            Ok(())
        } else {
            Err(Error::InadmissibleOrder {
                family: self.family,
                order_s,
                order_t,
            })
        }
    }
}

/// `C(s, t)`.
pub fn kernel_eval(spec: &KernelSpec, s: f64, t: f64) -> f64 {
    spec.partial_unchecked(0, 0, s, t)
}

/// `d^order_s/ds d^order_t/dt C(s, t)`.
pub fn kernel_partial(
    spec: &KernelSpec,
    order_s: usize,
    order_t: usize,
    s: f64,
    t: f64,
) -> Result<f64> {
    spec.check_order(order_s, order_t)?;
    Ok(spec.partial_unchecked(order_s, order_t, s, t))
}

/// Matrix with entry `(i, j) = kernel_partial(spec, order_s, order_t, ts[i], us[j])`.
pub fn kernel_gram(
    spec: &KernelSpec,
    ts: &[f64],
    us: &[f64],
    order_s: usize,
    order_t: usize,
) -> Result<DMatrix<f64>> {
    spec.check_order(order_s, order_t)?;
    Ok(DMatrix::from_fn(ts.len(), us.len(), |i, j| {
        spec.partial_unchecked(order_s, order_t, ts[i], us[j])
    }))
}

/// Checks that `spec` supports the requested trend indices. TDI needs the
/// `(1,1)` partial; ETI additionally needs `(2,2)`. Non-degeneracy is probed
/// at the prior: `Var[df] > 0`, `Var[d2f] > 0` and `|Cor[df, d2f]| < 1`.
pub fn validate_assumptions(spec: &KernelSpec, require_eti: bool) -> Result<()> {
    match spec.family {
        KernelFamily::OrnsteinUhlenbeck => {
            return Err(Error::assumption(
                Assumption::A3,
                "the OU kernel is not mean-square differentiable",
            ))
        }
        KernelFamily::Matern32 if require_eti => {
            return Err(Error::assumption(
                Assumption::A3,
                "the M32 kernel has no second mean-square derivative; ETI requires one",
            ))
        }
        _ => {}
    }
    let probe = 0.0;
    let var_df = spec.partial_unchecked(1, 1, probe, probe);
    if !(var_df > 0.0 && var_df.is_finite()) {
        return Err(Error::assumption(
            Assumption::A4,
            format!("prior Var[df] = {var_df} is degenerate"),
        ));
    }
    if require_eti {
        let var_d2f = spec.partial_unchecked(2, 2, probe, probe);
        let cov = spec.partial_unchecked(1, 2, probe, probe);
        let cor = cov / (var_df * var_d2f).sqrt();
        if !(var_d2f > 0.0 && var_d2f.is_finite()) || !(cor.abs() < 1.0) {
            return Err(Error::assumption(
                Assumption::A4,
                format!("prior (df, d2f) is degenerate: Var[d2f] = {var_d2f}, Cor = {cor}"),
            ));
        }
    }
    Ok(())
}
