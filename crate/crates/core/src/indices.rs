//! Trend Direction Index and Expected Trend Instability.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Assumption, Error, Result};
use crate::kernels::validate_assumptions;
use crate::posterior::{GpPosterior, GaussianSampler, Hyperparams, LocalMoments};
use crate::stats::{erf, linspace, norm_pdf, simpson};

/// Default number of Simpson sub-intervals for integrated ETI.
pub const DEFAULT_QUADRATURE: usize = 512;

/// TDI values on a grid. The value at grid point `u` is `TDI(anchor, u - anchor)`,
/// i.e. the posterior probability that the trend is positive at `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdiCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub anchor: f64,
}

impl TdiCurve {
    /// Offset `u - anchor` of each grid point.
    pub fn deltas(&self) -> Vec<f64> {
        self.grid.iter().map(|u| u - self.anchor).collect()
    }

    /// Linear interpolation of the curve at `t` (clamped to the grid span).
    pub fn value_at(&self, t: f64) -> f64 {
        interpolate(&self.grid, &self.values, t)
    }
}

/// The three auxiliary functions of the crossing-intensity formula at one
/// time point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalEtiTerms {
    pub lambda: f64,
    pub omega: f64,
    pub zeta: f64,
}

/// Cumulative count of sign changes along a grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossingProcess {
    pub counts: Vec<u32>,
}

impl CrossingProcess {
    pub fn total(&self) -> u32 {
        self.counts.last().copied().unwrap_or(0)
    }
}

fn check_trend_variance(var_df: f64) -> Result<()> {
    if var_df > 0.0 && var_df.is_finite() {
        Ok(())
    } else {
        Err(Error::assumption(
            Assumption::A4,
            format!("posterior Var[df] = {var_df:e} is not positive"),
        ))
    }
}

/// `P(df > threshold)` for `df ~ N(mu_df, var_df)`.
pub fn tdi_from_moments(mu_df: f64, var_df: f64, threshold: f64) -> Result<f64> {
    check_trend_variance(var_df)?;
    let z = (mu_df - threshold) / (SQRT_2 * var_df.sqrt());
    Ok(0.5 + 0.5 * erf(z))
}

/// Local crossing intensity of `df` from the posterior moments of `(df, d2f)`.
pub fn local_eti_from_moments(m: &LocalMoments) -> Result<(f64, LocalEtiTerms)> {
    check_trend_variance(m.var_df)?;
    if !(m.var_d2f > 0.0 && m.var_d2f.is_finite()) {
        return Err(Error::assumption(
            Assumption::A4,
            format!("posterior Var[d2f] = {:e} is not positive", m.var_d2f),
        ));
    }
    let sd1 = m.var_df.sqrt();
    let sd2 = m.var_d2f.sqrt();
    let omega = m.cov_df_d2f / (sd1 * sd2);
    if !(omega.abs() < 1.0) {
        return Err(Error::assumption(
            Assumption::A4,
            format!("trend and curvature are perfectly correlated (omega = {omega})"),
        ));
    }
    let root = (1.0 - omega * omega).sqrt();
    let lambda = sd2 / sd1 * root;
    let zeta = (m.mu_df * sd2 * omega / sd1 - m.mu_d2f) / (sd2 * root);
    let rate =
        lambda * norm_pdf(m.mu_df / sd1) * (2.0 * norm_pdf(zeta) + zeta * erf(zeta / SQRT_2));
    Ok((rate.max(0.0), LocalEtiTerms { lambda, omega, zeta }))
}

impl GpPosterior {
    /// `P(df(t) > 0)` at every grid point.
    pub fn tdi_values(&self, grid: &[f64]) -> Result<Vec<f64>> {
        self.tdi_values_above(grid, 0.0)
    }

    /// `P(df(t) > threshold)` at every grid point.
    pub fn tdi_values_above(&self, grid: &[f64], threshold: f64) -> Result<Vec<f64>> {
        let (mu, var) = self.df_marginals(grid)?;
        mu.iter()
            .zip(&var)
            .map(|(&m, &v)| tdi_from_moments(m, v, threshold))
            .collect()
    }

    pub fn tdi_curve(&self, grid: &[f64], anchor: f64) -> Result<TdiCurve> {
        Ok(TdiCurve {
            grid: grid.to_vec(),
            values: self.tdi_values(grid)?,
            anchor,
        })
    }

    /// Local ETI rate and auxiliary terms at each grid point.
    pub fn local_eti(&self, grid: &[f64]) -> Result<Vec<(f64, LocalEtiTerms)>> {
        validate_assumptions(&self.theta().kernel, true)?;
        self.local_moments(grid)?
            .iter()
            .map(local_eti_from_moments)
            .collect()
    }

    pub fn local_eti_rates(&self, grid: &[f64]) -> Result<Vec<f64>> {
        Ok(self.local_eti(grid)?.into_iter().map(|(r, _)| r).collect())
    }

    /// ETI on `[a, b]` by composite Simpson over `n_quad` sub-intervals
    /// (rounded up to an even count).
    pub fn eti(&self, a: f64, b: f64, n_quad: usize) -> Result<f64> {
        if !(a <= b) {
            return Err(Error::InvalidParameter(format!("ETI interval [{a}, {b}] is reversed")));
        }
        validate_assumptions(&self.theta().kernel, true)?;
        if a == b {
            return Ok(0.0);
        }
        let n = n_quad.max(2).next_multiple_of(2);
        let nodes = linspace(a, b, n + 1);
        let rates = self.local_eti_rates(&nodes)?;
        Ok(simpson(&rates, (b - a) / n as f64))
    }

    /// Fraction of `k` sampled trend paths on `grid_density` equidistant points
    /// of `[a, b]` that change sign at least once.
    pub fn crossing_prob_mc(&self, a: f64, b: f64, k: usize, grid_density: usize, seed: u64) -> Result<f64> {
        if !(a <= b) {
            return Err(Error::InvalidParameter(format!("interval [{a}, {b}] is reversed")));
        }
        if a == b || k == 0 {
            return Ok(0.0);
        }
        let grid = linspace(a, b, grid_density.max(2));
        let jp = self.joint(&grid, 2)?.select_blocks(&[1]);
        let draws = GaussianSampler::from_joint(&jp)?.sample(k, seed);
        let hits = draws
            .row_iter()
            .filter(|row| {
                let path: Vec<f64> = row.iter().copied().collect();
                count_crossings(&path).total() > 0
            })
            .count();
        Ok(hits as f64 / k as f64)
    }
}

/// `TDI(t, delta) = P(df(t + delta) > 0 | data, theta)`.
pub fn tdi(data: &Dataset, theta: &Hyperparams, t: f64, delta: f64) -> Result<f64> {
    Ok(GpPosterior::new(data, theta)?.tdi_values(&[t + delta])?[0])
}

/// TDI with a shifted threshold: `P(df(t + delta) > threshold)`.
pub fn tdi_threshold(data: &Dataset, theta: &Hyperparams, t: f64, delta: f64, threshold: f64) -> Result<f64> {
    Ok(GpPosterior::new(data, theta)?.tdi_values_above(&[t + delta], threshold)?[0])
}

pub fn tdi_curve(data: &Dataset, theta: &Hyperparams, grid: &[f64], anchor: f64) -> Result<TdiCurve> {
    GpPosterior::new(data, theta)?.tdi_curve(grid, anchor)
}

/// Local Expected Trend Instability at `t`.
pub fn local_eti(data: &Dataset, theta: &Hyperparams, t: f64) -> Result<(f64, LocalEtiTerms)> {
    Ok(GpPosterior::new(data, theta)?.local_eti(&[t])?[0])
}

/// Expected number of trend sign changes on `[a, b]`.
pub fn eti(data: &Dataset, theta: &Hyperparams, interval: (f64, f64), n_quad: usize) -> Result<f64> {
    GpPosterior::new(data, theta)?.eti(interval.0, interval.1, n_quad)
}

/// Monte-Carlo estimate of `P(at least one trend sign change on [a, b])`.
pub fn crossing_prob_mc(
    data: &Dataset,
    theta: &Hyperparams,
    interval: (f64, f64),
    k: usize,
    grid_density: usize,
    seed: u64,
) -> Result<f64> {
    validate_assumptions(&theta.kernel, true)?;
    GpPosterior::new(data, theta)?.crossing_prob_mc(interval.0, interval.1, k, grid_density, seed)
}

/// Counts strict sign changes between consecutive values. Exact zeros are
/// skipped, so a zero between opposite signs counts once and a zero between
/// equal signs (a touch) does not count.
pub fn count_crossings(path: &[f64]) -> CrossingProcess {
    let mut counts = Vec::with_capacity(path.len());
    let mut last = 0.0f64;
    let mut total = 0u32;
    for &v in path {
        if v != 0.0 {
            let s = v.signum();
            if last != 0.0 && s != last {
                total += 1;
            }
            last = s;
        }
        counts.push(total);
    }
    CrossingProcess { counts }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if n == 1 || x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let i = xs.partition_point(|&g| g <= x);
    let (x0, x1) = (xs[i - 1], xs[i]);
    let w = (x - x0) / (x1 - x0);
    ys[i - 1] + w * (ys[i] - ys[i - 1])
}

/// Earliest time in `window` where the curve reaches `threshold`, refined by
/// linear interpolation between bracketing grid points.
pub fn crosspoint(curve: &TdiCurve, window: (f64, f64), threshold: f64) -> Option<f64> {
    if curve.grid.is_empty() {
        return None;
    }
    let (a, b) = window;
    let mut pts = vec![(a, curve.value_at(a))];
    pts.extend(
        curve
            .grid
            .iter()
            .zip(&curve.values)
            .filter(|(&t, _)| t > a && t < b)
            .map(|(&t, &v)| (t, v)),
    );
    if b > a {
        pts.push((b, curve.value_at(b)));
    }
    if pts[0].1 >= threshold {
        return Some(a);
    }
    pts.windows(2).find(|w| w[1].1 >= threshold).map(|w| {
        let ((t0, v0), (t1, v1)) = (w[0], w[1]);
        t0 + (threshold - v0) / (v1 - v0) * (t1 - t0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{KernelSpec, MeanSpec};
    use std::f64::consts::PI;

    fn prior(kernel: KernelSpec) -> Hyperparams {
        Hyperparams::new(MeanSpec::zero(), kernel, 0.1).unwrap()
    }

    #[test]
    fn tdi_moment_formula() {
        assert_eq!(tdi_from_moments(0.0, 2.0, 0.0).unwrap(), 0.5);
        let v = tdi_from_moments(1.959963984540054, 1.0, 0.0).unwrap();
        assert!((v - 0.975).abs() < 1e-6);
        assert!(tdi_from_moments(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn prior_tdi_is_one_half() {
        let theta = prior(KernelSpec::se(1.0, 1.0).unwrap());
        let curve = tdi_curve(&Dataset::empty(), &theta, &[0.0, 1.0, 5.0], 5.0).unwrap();
        assert!(curve.values.iter().all(|&v| v == 0.5));
        assert_eq!(curve.deltas(), vec![-5.0, -4.0, 0.0]);
    }

    #[test]
    fn prior_crossing_rates() {
        let theta = prior(KernelSpec::se(1.7, 0.6).unwrap());
        let (rate, terms) = local_eti(&Dataset::empty(), &theta, 0.3).unwrap();
        assert!((rate - 3f64.sqrt() / (PI * 0.6)).abs() < 1e-12);
        assert_eq!(terms.omega, 0.0);
        let nu = 1.7;
        let theta = prior(KernelSpec::rq(0.9, 0.6, nu).unwrap());
        let (rate, _) = local_eti(&Dataset::empty(), &theta, 0.3).unwrap();
        let expect = 3f64.sqrt() * (1.0 + 1.0 / nu).sqrt() / (PI * 0.6);
        assert!((rate - expect).abs() < 1e-12);
    }

    #[test]
    fn prior_eti_is_length_times_rate() {
        let theta = prior(KernelSpec::se(1.0, 0.5).unwrap());
        let v = eti(&Dataset::empty(), &theta, (1.0, 4.0), 64).unwrap();
        assert!((v - 3.0 * 3f64.sqrt() / (PI * 0.5)).abs() < 1e-10);
        assert_eq!(eti(&Dataset::empty(), &theta, (2.0, 2.0), 64).unwrap(), 0.0);
        assert!(eti(&Dataset::empty(), &theta, (2.0, 1.0), 64).is_err());
    }

    #[test]
    fn m32_rejects_eti_but_allows_tdi() {
        let theta = prior(KernelSpec::m32(1.0, 1.0).unwrap());
        let err = eti(&Dataset::empty(), &theta, (0.0, 1.0), 8).unwrap_err();
        assert_eq!(err.violated_assumption(), Some(Assumption::A3));
        assert_eq!(tdi(&Dataset::empty(), &theta, 0.0, 0.0).unwrap(), 0.5);
    }

    #[test]
    fn crossing_counts() {
        assert_eq!(count_crossings(&[1.0, 2.0, 3.0]).total(), 0);
        assert_eq!(count_crossings(&[1.0, -1.0, 1.0]).total(), 2);
        assert_eq!(count_crossings(&[1.0, 0.0, -1.0]).total(), 1);
        assert_eq!(count_crossings(&[1.0, 0.0, 1.0]).total(), 0);
        assert_eq!(count_crossings(&[0.0, 0.0, -1.0, 0.0, 0.0, 2.0]).counts, vec![0, 0, 0, 0, 0, 1]);
    }

    #[test]
    fn crosspoint_semantics() {
        let grid: Vec<f64> = (0..=20).map(|i| 2008.0 + 0.5 * i as f64).collect();
        let values: Vec<f64> = grid.iter().map(|t| 0.5 + 0.1 * (t - 2015.48)).collect();
        let curve = TdiCurve { grid, values, anchor: 2018.0 };
        let cp = crosspoint(&curve, (2008.0, 2018.0), 0.5).unwrap();
        assert!((cp - 2015.48).abs() < 1e-9);
        assert_eq!(crosspoint(&curve, (2016.0, 2018.0), 0.5), Some(2016.0));
        let low = TdiCurve {
            values: vec![0.2; curve.grid.len()],
            ..curve.clone()
        };
        assert_eq!(crosspoint(&low, (2008.0, 2018.0), 0.5), None);
    }

    #[test]
    fn crossing_probability_edge_cases() {
        let theta = prior(KernelSpec::se(1.0, 0.5).unwrap());
        let p = crossing_prob_mc(&Dataset::empty(), &theta, (1.0, 1.0), 100, 10, 1).unwrap();
        assert_eq!(p, 0.0);
        // steep positive trend: strongly informative linear data
        let ts: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 50.0 * t).collect();
        let data = Dataset::new(ts, ys).unwrap();
        let theta = Hyperparams::new(MeanSpec::zero(), KernelSpec::se(20.0, 2.0).unwrap(), 0.01).unwrap();
        let p = crossing_prob_mc(&data, &theta, (0.2, 0.8), 2000, 50, 3).unwrap();
        assert!(p < 0.01, "{p}");
    }
}
