//! Posterior summaries of the trend indices under hyper-parameter uncertainty.

use rayon::prelude::*;
use serde::Serialize;

use super::diagnostics::{ess, rhat_chains};
use super::McmcSamples;
use crate::data::Dataset;
use crate::error::{Assumption, Error, Result};
use crate::indices::{crosspoint, DEFAULT_QUADRATURE};
use crate::posterior::GpPosterior;
use crate::stats::{mean, norm_cdf, quantiles};

/// Per-grid-point empirical quantiles; `values[j][i]` is the `taus[j]`
/// quantile at `grid[i]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileCurve {
    pub grid: Vec<f64>,
    pub taus: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl QuantileCurve {
    /// `draws[k][i]` is the value of draw `k` at `grid[i]`.
    pub fn from_draws(grid: &[f64], taus: &[f64], draws: &[Vec<f64>]) -> Self {
        let mut values = vec![vec![f64::NAN; grid.len()]; taus.len()];
        let mut column = Vec::with_capacity(draws.len());
        for i in 0..grid.len() {
            column.clear();
            column.extend(draws.iter().map(|d| d[i]));
            for (j, q) in quantiles(&column, taus).into_iter().enumerate() {
                values[j][i] = q;
            }
        }
        QuantileCurve {
            grid: grid.to_vec(),
            taus: taus.to_vec(),
            values,
        }
    }

    pub fn at_tau(&self, tau: f64) -> Option<&[f64]> {
        self.taus
            .iter()
            .position(|t| (t - tau).abs() < 1e-12)
            .map(|j| self.values[j].as_slice())
    }
}

#[derive(Debug, Clone)]
pub struct IndexPosteriorOptions {
    /// Quantile levels, sorted on use.
    pub taus: Vec<f64>,
    pub intervals: Vec<(f64, f64)>,
    /// Draws are thinned evenly to at most this many.
    pub max_draws: usize,
    pub n_quad: usize,
    pub local_eti: bool,
    /// Window and threshold for per-draw crosspoints.
    pub crosspoint: Option<((f64, f64), f64)>,
}

impl Default for IndexPosteriorOptions {
    fn default() -> Self {
        IndexPosteriorOptions {
            taus: vec![0.025, 0.5, 0.975],
            intervals: Vec::new(),
            max_draws: 1000,
            n_quad: DEFAULT_QUADRATURE,
            local_eti: true,
            crosspoint: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IndexPosterior {
    pub tdi: QuantileCurve,
    pub local_eti: Option<QuantileCurve>,
    /// `eti_draws[j]` holds one ETI value per used draw for interval `j`.
    pub eti_draws: Vec<Vec<f64>>,
    pub crosspoints: Vec<Option<f64>>,
    pub used: usize,
    /// Draws dropped because the posterior was degenerate (A4) there.
    pub skipped: usize,
}

struct DrawIndices {
    tdi: Vec<f64>,
    local_eti: Option<Vec<f64>>,
    eti: Vec<f64>,
    crosspoint: Option<f64>,
}

/// Evenly spaced subset of `0..total` with at most `max` elements.
pub(crate) fn thinned(total: usize, max: usize) -> Vec<usize> {
    if max == 0 || total <= max {
        return (0..total).collect();
    }
    (0..max).map(|i| i * total / max).collect()
}

fn skippable(e: &Error) -> bool {
    matches!(e, Error::Factorization(_)) || e.violated_assumption() == Some(Assumption::A4)
}

/// Trend indices evaluated at every retained posterior draw of the
/// hyper-parameters, summarized by per-point quantiles.
pub fn index_posterior(
    data: &Dataset,
    samples: &McmcSamples,
    grid: &[f64],
    anchor: f64,
    opts: &IndexPosteriorOptions,
) -> Result<IndexPosterior> {
    let mut taus = opts.taus.clone();
    if taus.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::InvalidParameter(format!("quantile levels must lie in [0, 1]: {taus:?}")));
    }
    taus.sort_by(f64::total_cmp);
    let picks = thinned(samples.n_draws(), opts.max_draws);
    let results: Vec<Result<Option<DrawIndices>>> = picks
        .par_iter()
        .map(|&i| {
            let eval = || -> Result<DrawIndices> {
                let post = GpPosterior::new(data, &samples.hyperparams(i)?)?;
                let curve = post.tdi_curve(grid, anchor)?;
                let local_eti = if opts.local_eti {
                    Some(post.local_eti_rates(grid)?)
                } else {
                    None
                };
                let eti = opts
                    .intervals
                    .iter()
                    .map(|&(a, b)| post.eti(a, b, opts.n_quad))
                    .collect::<Result<Vec<_>>>()?;
                let cp = opts.crosspoint.and_then(|(w, thr)| crosspoint(&curve, w, thr));
                Ok(DrawIndices {
                    tdi: curve.values,
                    local_eti,
                    eti,
                    crosspoint: cp,
                })
            };
            match eval() {
                Ok(d) => Ok(Some(d)),
                Err(e) if skippable(&e) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut kept = Vec::with_capacity(results.len());
    let mut skipped = 0;
    for r in results {
        match r? {
            Some(d) => kept.push(d),
            None => skipped += 1,
        }
    }
    if kept.is_empty() {
        return Err(Error::InsufficientDraws(format!(
            "all {skipped} posterior draws were degenerate"
        )));
    }
    let tdi_draws: Vec<Vec<f64>> = kept.iter().map(|d| d.tdi.clone()).collect();
    let local_eti = if opts.local_eti {
        let draws: Vec<Vec<f64>> = kept.iter().filter_map(|d| d.local_eti.clone()).collect();
        Some(QuantileCurve::from_draws(grid, &taus, &draws))
    } else {
        None
    };
    Ok(IndexPosterior {
        tdi: QuantileCurve::from_draws(grid, &taus, &tdi_draws),
        local_eti,
        eti_draws: (0..opts.intervals.len())
            .map(|j| kept.iter().map(|d| d.eti[j]).collect())
            .collect(),
        crosspoints: kept.iter().map(|d| d.crosspoint).collect(),
        used: kept.len(),
        skipped,
    })
}

/// Pointwise mean and `[2.5%, 50%, 97.5%]` quantiles of a curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Band {
    pub mean: Vec<f64>,
    pub lo: Vec<f64>,
    pub median: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Quantile of an equally weighted normal mixture by bisection on its cdf.
fn mixture_quantile(means: &[f64], sds: &[f64], p: f64) -> f64 {
    let cdf = |x: f64| -> f64 {
        means
            .iter()
            .zip(sds)
            .map(|(&m, &s)| {
                if s > 0.0 {
                    norm_cdf((x - m) / s)
                } else if x >= m {
                    1.0
                } else {
                    0.0
                }
            })
            .sum::<f64>()
            / means.len() as f64
    };
    let mut lo = means.iter().zip(sds).map(|(m, s)| m - 10.0 * s).fold(f64::INFINITY, f64::min);
    let mut hi = means.iter().zip(sds).map(|(m, s)| m + 10.0 * s).fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn band_from(means: &[Vec<f64>], vars: &[Vec<f64>]) -> Band {
    let m = means[0].len();
    let mut band = Band {
        mean: Vec::with_capacity(m),
        lo: Vec::with_capacity(m),
        median: Vec::with_capacity(m),
        hi: Vec::with_capacity(m),
    };
    for i in 0..m {
        let mu: Vec<f64> = means.iter().map(|v| v[i]).collect();
        let sd: Vec<f64> = vars.iter().map(|v| v[i].max(0.0).sqrt()).collect();
        band.mean.push(mean(&mu));
        band.lo.push(mixture_quantile(&mu, &sd, 0.025));
        band.median.push(mixture_quantile(&mu, &sd, 0.5));
        band.hi.push(mixture_quantile(&mu, &sd, 0.975));
    }
    band
}

/// Pointwise bands with the hyper-parameters integrated out.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatentBands {
    pub f: Band,
    pub df: Band,
    /// A new observation: `f` plus noise.
    pub predictive: Band,
}

/// Pointwise posterior bands for `f`, `df` and a new observation. At each
/// grid point the law is the equally weighted mixture of the per-draw
/// Gaussian marginals.
pub fn latent_bands(data: &Dataset, samples: &McmcSamples, grid: &[f64], max_draws: usize) -> Result<LatentBands> {
    let picks = thinned(samples.n_draws(), max_draws);
    if grid.is_empty() {
        let empty = Band {
            mean: vec![],
            lo: vec![],
            median: vec![],
            hi: vec![],
        };
        return Ok(LatentBands {
            f: empty.clone(),
            df: empty.clone(),
            predictive: empty,
        });
    }
    struct DrawMoments {
        f: (Vec<f64>, Vec<f64>),
        df: (Vec<f64>, Vec<f64>),
        noise_var: f64,
    }
    let per_draw: Vec<DrawMoments> = picks
        .par_iter()
        .map(|&i| {
            let theta = samples.hyperparams(i)?;
            let post = GpPosterior::new(data, &theta)?;
            Ok(DrawMoments {
                f: post.f_marginals(grid),
                df: post.df_marginals(grid)?,
                noise_var: theta.sigma * theta.sigma,
            })
        })
        .collect::<Result<_>>()?;
    let f_mean: Vec<Vec<f64>> = per_draw.iter().map(|d| d.f.0.clone()).collect();
    let f_var: Vec<Vec<f64>> = per_draw.iter().map(|d| d.f.1.clone()).collect();
    let y_var: Vec<Vec<f64>> = per_draw
        .iter()
        .map(|d| d.f.1.iter().map(|v| v + d.noise_var).collect())
        .collect();
    let df_mean: Vec<Vec<f64>> = per_draw.iter().map(|d| d.df.0.clone()).collect();
    let df_var: Vec<Vec<f64>> = per_draw.iter().map(|d| d.df.1.clone()).collect();
    Ok(LatentBands {
        f: band_from(&f_mean, &f_var),
        df: band_from(&df_mean, &df_var),
        predictive: band_from(&f_mean, &y_var),
    })
}

/// Posterior summary of one hyper-parameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub q025: f64,
    pub median: f64,
    pub q975: f64,
    /// `None` with a single chain or too few draws.
    pub rhat: Option<f64>,
    pub ess: f64,
}

pub fn param_summary(samples: &McmcSamples) -> Vec<ParamSummary> {
    samples
        .names()
        .iter()
        .map(|name| {
            let chains = samples.param_chains(name).unwrap_or_default();
            let all: Vec<f64> = chains.iter().flatten().copied().collect();
            let q = quantiles(&all, &[0.025, 0.5, 0.975]);
            ParamSummary {
                name: name.clone(),
                mean: mean(&all),
                q025: q[0],
                median: q[1],
                q975: q[2],
                rhat: rhat_chains(&chains).ok(),
                ess: ess(&chains),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::ModelSpec;
    use crate::indices::tdi_curve;
    use crate::kernels::KernelFamily;

    fn data() -> Dataset {
        Dataset::new(vec![0.0, 0.25, 0.5, 0.75, 1.0], vec![0.1, 0.5, 0.4, 0.9, 1.2]).unwrap()
    }

    #[test]
    fn single_draw_collapses_onto_plug_in() {
        let model = ModelSpec::new(Some(0), KernelFamily::SquaredExponential).unwrap();
        let draw = vec![0.5, 0.8, 0.3, 0.1];
        let s = McmcSamples::from_draws(model, 0.5, vec![vec![draw]], 0, 1, vec![0.0]).unwrap();
        let grid = [0.1, 0.4, 0.9];
        let opts = IndexPosteriorOptions {
            intervals: vec![(0.0, 1.0)],
            crosspoint: Some(((0.0, 1.0), 0.5)),
            ..IndexPosteriorOptions::default()
        };
        let ip = index_posterior(&data(), &s, &grid, 0.5, &opts).unwrap();
        let theta = s.hyperparams(0).unwrap();
        let plug = tdi_curve(&data(), &theta, &grid, 0.5).unwrap();
        for row in &ip.tdi.values {
            assert_eq!(row, &plug.values);
        }
        let eti = GpPosterior::new(&data(), &theta).unwrap().eti(0.0, 1.0, DEFAULT_QUADRATURE).unwrap();
        assert_eq!(ip.eti_draws, vec![vec![eti]]);
        assert_eq!((ip.used, ip.skipped), (1, 0));

        let bands = latent_bands(&data(), &s, &grid, 10).unwrap();
        let (f, df) = (&bands.f, &bands.df);
        let post = GpPosterior::new(&data(), &theta).unwrap();
        let (fm, fv) = post.f_marginals(&grid);
        for i in 0..grid.len() {
            assert!((f.median[i] - fm[i]).abs() < 1e-9);
            let want = fm[i] + 1.959_963_984_540_054 * fv[i].sqrt();
            assert!((f.hi[i] - want).abs() < 1e-7);
            assert!(df.lo[i] <= df.median[i] && df.median[i] <= df.hi[i]);
            assert!(bands.predictive.hi[i] > f.hi[i]);
        }
    }

    #[test]
    fn quantiles_are_monotone_in_tau() {
        let model = ModelSpec::new(None, KernelFamily::Matern52).unwrap();
        let draws: Vec<Vec<f64>> = (0..40)
            .map(|k| vec![0.5 + 0.02 * k as f64, 0.2 + 0.01 * (k % 7) as f64, 0.05 + 0.002 * k as f64])
            .collect();
        let s = McmcSamples::from_draws(model, 0.5, vec![draws], 0, 1, vec![0.3]).unwrap();
        let grid: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let opts = IndexPosteriorOptions {
            taus: vec![0.9, 0.1, 0.5],
            ..IndexPosteriorOptions::default()
        };
        let ip = index_posterior(&data(), &s, &grid, 0.0, &opts).unwrap();
        assert_eq!(ip.tdi.taus, vec![0.1, 0.5, 0.9]);
        for curve in [&ip.tdi, ip.local_eti.as_ref().unwrap()] {
            for i in 0..grid.len() {
                assert!(curve.values[0][i] <= curve.values[1][i]);
                assert!(curve.values[1][i] <= curve.values[2][i]);
            }
        }
    }

    #[test]
    fn m32_rejects_local_eti() {
        let model = ModelSpec::new(None, KernelFamily::Matern32).unwrap();
        let s = McmcSamples::from_draws(model, 0.5, vec![vec![vec![1.0, 0.3, 0.1]]], 0, 1, vec![0.0]).unwrap();
        let err = index_posterior(&data(), &s, &[0.5], 0.0, &IndexPosteriorOptions::default()).unwrap_err();
        assert_eq!(err.violated_assumption(), Some(Assumption::A3));
        let opts = IndexPosteriorOptions {
            local_eti: false,
            ..IndexPosteriorOptions::default()
        };
        assert!(index_posterior(&data(), &s, &[0.5], 0.0, &opts).is_ok());
    }

    #[test]
    fn thinning_is_even() {
        assert_eq!(thinned(5, 10), vec![0, 1, 2, 3, 4]);
        assert_eq!(thinned(10, 4), vec![0, 2, 5, 7]);
    }
}
