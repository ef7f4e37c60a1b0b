//! The fit report: JSON document plus one CSV per curve.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use trendgp::estimation::{index_posterior, latent_bands, param_summary, IndexPosteriorOptions, ParamSummary};
use trendgp::indices::{crosspoint, DEFAULT_QUADRATURE};
use trendgp::stats::{linspace, norm_quantile, quantiles};
use trendgp::transforms::TransformSpec;
use trendgp::GpPosterior;

use crate::analysis::{Estimate, Input};
use crate::args::Estimator;
use crate::config::AnalysisConfig;
use crate::error::CliResult;

pub const FORMAT_VERSION: u32 = 1;
const TAUS: [f64; 3] = [0.025, 0.5, 0.975];

#[derive(Debug, Clone, Serialize)]
pub struct Band {
    pub mean: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuantileBand {
    pub median: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// A probability or rate curve: a point value (the median under the
/// Bayesian estimator) and, for Bayes only, a 95% band.
#[derive(Debug, Clone, Serialize)]
pub struct IndexCurve {
    pub value: Vec<f64>,
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Curves {
    pub t: Vec<f64>,
    pub f: Band,
    pub df: Band,
    pub predictive: Band,
    /// `g^-1` of the `f` quantiles when a transform is in use.
    pub f_original: Option<QuantileBand>,
    /// Offsets `t - anchor`.
    pub delta: Vec<f64>,
    pub tdi: IndexCurve,
    /// `None` when the kernel has no second derivative.
    pub local_eti: Option<IndexCurve>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelInfo {
    pub label: String,
    pub mean: String,
    pub kernel: String,
    pub requested: String,
    pub substituted: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DataInfo {
    pub n: usize,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionRow {
    pub model: String,
    pub requested: Vec<String>,
    pub n_params: usize,
    pub mspe: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionInfo {
    pub scheme: String,
    pub min_train: Option<usize>,
    pub winner: String,
    pub rows: Vec<SelectionRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitInfo {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub center: f64,
    pub loglik: f64,
    pub converged: bool,
    pub at_boundary: bool,
    pub failed_starts: usize,
    pub fixed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PosteriorInfo {
    pub chains: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub draws: usize,
    pub acceptance: Vec<f64>,
    pub params: Vec<ParamSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EtiEntry {
    pub a: f64,
    pub b: f64,
    pub estimate: f64,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrosspointInfo {
    pub window: [f64; 2],
    pub threshold: f64,
    pub estimate: Option<f64>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    /// Share of posterior draws whose TDI reaches the threshold in the window.
    pub defined_fraction: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    /// Diagonal jitter added at the point estimate.
    pub jitter: f64,
    pub used_draws: Option<usize>,
    pub skipped_draws: usize,
    pub max_rhat: Option<f64>,
    pub min_ess: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub config_hash: String,
    pub data_digest: String,
    pub config: AnalysisConfig,
}

impl Provenance {
    pub fn new(cfg: &AnalysisConfig, data_digest: &str) -> Self {
        Provenance {
            tool: "trendgp",
            version: env!("CARGO_PKG_VERSION"),
            seed: cfg.seed,
            config_hash: cfg.hash(),
            data_digest: data_digest.to_string(),
            config: cfg.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrendReport {
    pub format: u32,
    pub estimator: Estimator,
    pub transform: TransformSpec,
    pub model: ModelInfo,
    pub data: DataInfo,
    pub selection: Option<SelectionInfo>,
    pub fit: FitInfo,
    pub posterior: Option<PosteriorInfo>,
    pub anchor: f64,
    pub curves: Curves,
    pub eti: Vec<EtiEntry>,
    pub crosspoint: Option<CrosspointInfo>,
    pub diagnostics: Diagnostics,
    pub files: Vec<String>,
    pub provenance: Provenance,
}

fn selection_info(est: &Estimate) -> Option<SelectionInfo> {
    let sel = est.selection.as_ref()?;
    let (scheme, min_train) = match sel.scheme {
        trendgp::selection::CvScheme::Loo => ("loo".to_string(), None),
        trendgp::selection::CvScheme::Osa { min_train } => ("osa".to_string(), Some(min_train)),
    };
    Some(SelectionInfo {
        scheme,
        min_train,
        winner: sel.winning_model().to_string(),
        rows: sel
            .rows
            .iter()
            .map(|r| SelectionRow {
                model: r.model.to_string(),
                requested: r.requested.iter().map(|m| m.to_string()).collect(),
                n_params: r.n_params,
                mspe: r.mspe,
                error: r.error.clone(),
            })
            .collect(),
    })
}

fn map_all(v: &[f64], g: impl Fn(f64) -> f64) -> Vec<f64> {
    v.iter().map(|&x| g(x)).collect()
}

/// The report and, under the Bayesian estimator, the per-draw ETI values of
/// every interval.
pub fn build_report(cfg: &AnalysisConfig, input: &Input, est: &Estimate) -> CliResult<(TrendReport, Vec<Vec<f64>>)> {
    let data = &input.data;
    let (start, end) = data.span().expect("validated non-empty");
    let [g0, g1] = cfg.grid_range.unwrap_or([start, end]);
    let grid = linspace(g0, g1, cfg.grid_points);
    let anchor = cfg.anchor.unwrap_or(end);
    let intervals: Vec<(f64, f64)> = cfg.intervals.iter().map(|&[a, b]| (a, b)).collect();
    let model = est.model();
    let has_eti = model.family.admits(2, 2);
    let ml_post = GpPosterior::new(data, &est.ml.theta)?;
    let delta = map_all(&grid, |t| t - anchor);
    let window = cfg.crosspoint.as_ref().map(|c| ((c.window[0], c.window[1]), c.threshold));
    let mut eti_draws = Vec::new();

    let (f, df, predictive, f_quant, tdi, local_eti, eti, cp, posterior, used, skipped) = match &est.samples {
        None => {
            let z = norm_quantile(0.975);
            let band = |(m, v): (Vec<f64>, Vec<f64>), extra: f64| {
                let sd: Vec<f64> = v.iter().map(|x| (x + extra).max(0.0).sqrt()).collect();
                Band {
                    lo: m.iter().zip(&sd).map(|(m, s)| m - z * s).collect(),
                    hi: m.iter().zip(&sd).map(|(m, s)| m + z * s).collect(),
                    mean: m,
                }
            };
            let fm = ml_post.f_marginals(&grid);
            let f = band(fm.clone(), 0.0);
            let predictive = band(fm, est.ml.theta.sigma.powi(2));
            let df = band(ml_post.df_marginals(&grid)?, 0.0);
            let f_quant = QuantileBand {
                median: f.mean.clone(),
                lo: f.lo.clone(),
                hi: f.hi.clone(),
            };
            let curve = ml_post.tdi_curve(&grid, anchor)?;
            let local_eti = if has_eti {
                Some(IndexCurve {
                    value: ml_post.local_eti_rates(&grid)?,
                    lo: None,
                    hi: None,
                })
            } else {
                None
            };
            let eti = intervals
                .iter()
                .map(|&(a, b)| {
                    Ok(EtiEntry {
                        a,
                        b,
                        estimate: ml_post.eti(a, b, DEFAULT_QUADRATURE)?,
                        lo: None,
                        hi: None,
                    })
                })
                .collect::<CliResult<Vec<_>>>()?;
            let cp = cfg.crosspoint.as_ref().map(|c| CrosspointInfo {
                window: c.window,
                threshold: c.threshold,
                estimate: crosspoint(&curve, (c.window[0], c.window[1]), c.threshold),
                lo: None,
                hi: None,
                defined_fraction: None,
            });
            let tdi = IndexCurve {
                value: curve.values,
                lo: None,
                hi: None,
            };
            (f, df, predictive, f_quant, tdi, local_eti, eti, cp, None, None, 0)
        }
        Some(samples) => {
            let mc = cfg.mcmc.as_ref().expect("bayes config");
            let bands = latent_bands(data, samples, &grid, mc.max_draws)?;
            let idx = index_posterior(
                data,
                samples,
                &grid,
                anchor,
                &IndexPosteriorOptions {
                    taus: TAUS.to_vec(),
                    intervals: intervals.clone(),
                    max_draws: mc.max_draws,
                    local_eti: has_eti,
                    crosspoint: window,
                    ..IndexPosteriorOptions::default()
                },
            )?;
            let to_band = |b: &trendgp::estimation::Band| Band {
                mean: b.mean.clone(),
                lo: b.lo.clone(),
                hi: b.hi.clone(),
            };
            let curve_of = |q: &trendgp::estimation::QuantileCurve| IndexCurve {
                value: q.values[1].clone(),
                lo: Some(q.values[0].clone()),
                hi: Some(q.values[2].clone()),
            };
            let eti = intervals
                .iter()
                .zip(&idx.eti_draws)
                .map(|(&(a, b), draws)| {
                    let q = quantiles(draws, &TAUS);
                    EtiEntry {
                        a,
                        b,
                        estimate: q[1],
                        lo: Some(q[0]),
                        hi: Some(q[2]),
                    }
                })
                .collect();
            let cp = cfg.crosspoint.as_ref().map(|c| {
                let defined: Vec<f64> = idx.crosspoints.iter().flatten().copied().collect();
                let q = (!defined.is_empty()).then(|| quantiles(&defined, &TAUS));
                CrosspointInfo {
                    window: c.window,
                    threshold: c.threshold,
                    estimate: q.as_ref().map(|q| q[1]),
                    lo: q.as_ref().map(|q| q[0]),
                    hi: q.as_ref().map(|q| q[2]),
                    defined_fraction: Some(defined.len() as f64 / idx.crosspoints.len().max(1) as f64),
                }
            });
            eti_draws = idx.eti_draws.clone();
            let posterior = PosteriorInfo {
                chains: samples.n_chains(),
                iterations: mc.iterations,
                warmup: samples.warmup(),
                draws: samples.n_draws(),
                acceptance: samples.acceptance().to_vec(),
                params: param_summary(samples),
            };
            let f_quant = QuantileBand {
                median: bands.f.median.clone(),
                lo: bands.f.lo.clone(),
                hi: bands.f.hi.clone(),
            };
            (
                to_band(&bands.f),
                to_band(&bands.df),
                to_band(&bands.predictive),
                f_quant,
                curve_of(&idx.tdi),
                idx.local_eti.as_ref().map(curve_of),
                eti,
                cp,
                Some(posterior),
                Some(idx.used),
                idx.skipped,
            )
        }
    };

    let f_original = (cfg.transform != TransformSpec::Identity).then(|| {
        let g = |z| cfg.transform.inverse(z);
        QuantileBand {
            median: map_all(&f_quant.median, g),
            lo: map_all(&f_quant.lo, g),
            hi: map_all(&f_quant.hi, g),
        }
    });
    let rhats: Vec<f64> = posterior
        .iter()
        .flat_map(|p| p.params.iter().filter_map(|s| s.rhat))
        .collect();
    let esses: Vec<f64> = posterior.iter().flat_map(|p| p.params.iter().map(|s| s.ess)).collect();
    let diagnostics = Diagnostics {
        jitter: ml_post.jitter(),
        used_draws: used,
        skipped_draws: skipped,
        max_rhat: rhats.iter().copied().reduce(f64::max),
        min_ess: esses.iter().copied().reduce(f64::min),
    };
    let curves = Curves {
        t: grid,
        f,
        df,
        predictive,
        f_original,
        delta,
        tdi,
        local_eti,
    };
    let files = curve_files(&curves, posterior.is_some() && !eti.is_empty());
    let report = TrendReport {
        format: FORMAT_VERSION,
        estimator: cfg.estimator,
        transform: cfg.transform,
        model: ModelInfo {
            label: model.to_string(),
            mean: model.mean_name().to_string(),
            kernel: model.family.short_name().to_string(),
            requested: est.ml.requested.to_string(),
            substituted: est.ml.substituted(),
        },
        data: DataInfo {
            n: data.len(),
            start,
            end,
        },
        selection: selection_info(est),
        fit: FitInfo {
            names: model.param_names(),
            values: model.values(&est.ml.theta),
            center: est.ml.theta.mean.center(),
            loglik: est.ml.loglik,
            converged: est.ml.converged,
            at_boundary: est.ml.at_boundary,
            failed_starts: est.ml.failed_starts,
            fixed: est.fixed,
        },
        posterior,
        anchor,
        curves,
        eti,
        crosspoint: cp,
        diagnostics,
        files,
        provenance: Provenance::new(cfg, &input.digest),
    };
    Ok((report, eti_draws))
}

fn curve_files(c: &Curves, eti_draws: bool) -> Vec<String> {
    let mut names = vec!["f", "df", "predictive", "tdi"];
    if c.f_original.is_some() {
        names.push("f_original");
    }
    if c.local_eti.is_some() {
        names.push("local_eti");
    }
    if eti_draws {
        names.push("eti_draws");
    }
    let mut files = vec!["data.csv".to_string()];
    files.extend(names.into_iter().map(|n| format!("curves/{n}.csv")));
    files
}

fn band_csv(t: &[f64], b: &Band) -> String {
    let mut s = String::from("t,mean,lo2.5,hi97.5\n");
    for i in 0..t.len() {
        let _ = writeln!(s, "{},{},{},{}", t[i], b.mean[i], b.lo[i], b.hi[i]);
    }
    s
}

fn index_csv(t: &[f64], delta: Option<&[f64]>, name: &str, c: &IndexCurve) -> String {
    let mut s = String::from("t");
    if delta.is_some() {
        s.push_str(",delta");
    }
    let _ = write!(s, ",{name}");
    if c.lo.is_some() {
        s.push_str(",lo2.5,hi97.5");
    }
    s.push('\n');
    for i in 0..t.len() {
        let _ = write!(s, "{}", t[i]);
        if let Some(d) = delta {
            let _ = write!(s, ",{}", d[i]);
        }
        let _ = write!(s, ",{}", c.value[i]);
        if let (Some(lo), Some(hi)) = (&c.lo, &c.hi) {
            let _ = write!(s, ",{},{}", lo[i], hi[i]);
        }
        s.push('\n');
    }
    s
}

/// Writes report.json, provenance.json and the curve CSVs into `dir`.
pub fn write_report(dir: &Path, report: &TrendReport, eti_draws: &[Vec<f64>]) -> CliResult<()> {
    let curves_dir = dir.join("curves");
    fs::create_dir_all(&curves_dir)?;
    let c = &report.curves;
    fs::write(curves_dir.join("f.csv"), band_csv(&c.t, &c.f))?;
    fs::write(curves_dir.join("df.csv"), band_csv(&c.t, &c.df))?;
    fs::write(curves_dir.join("predictive.csv"), band_csv(&c.t, &c.predictive))?;
    fs::write(curves_dir.join("tdi.csv"), index_csv(&c.t, Some(&c.delta), "tdi", &c.tdi))?;
    if let Some(fo) = &c.f_original {
        let mut s = String::from("t,median,lo2.5,hi97.5\n");
        for i in 0..c.t.len() {
            let _ = writeln!(s, "{},{},{},{}", c.t[i], fo.median[i], fo.lo[i], fo.hi[i]);
        }
        fs::write(curves_dir.join("f_original.csv"), s)?;
    }
    if let Some(le) = &c.local_eti {
        fs::write(curves_dir.join("local_eti.csv"), index_csv(&c.t, None, "rate", le))?;
    }
    if !eti_draws.is_empty() {
        let draws = eti_draws;
        let mut s = String::from("draw");
        for e in &report.eti {
            let _ = write!(s, ",eti[{}:{}]", e.a, e.b);
        }
        s.push('\n');
        for k in 0..draws[0].len() {
            let _ = write!(s, "{k}");
            for d in draws {
                let _ = write!(s, ",{}", d[k]);
            }
            s.push('\n');
        }
        fs::write(curves_dir.join("eti_draws.csv"), s)?;
    }
    let mut json = serde_json::to_string_pretty(report).expect("report serializes");
    json.push('\n');
    fs::write(dir.join("report.json"), json)?;
    let mut prov = serde_json::to_string_pretty(&report.provenance).expect("provenance serializes");
    prov.push('\n');
    fs::write(dir.join("provenance.json"), prov)?;
    Ok(())
}
