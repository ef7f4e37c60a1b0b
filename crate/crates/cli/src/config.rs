//! Validated analysis settings. The serialized form is hashed into the
//! report provenance, so field order and content are part of the output.

use std::collections::BTreeMap;
use std::fs;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use trendgp::estimation::{ModelSpec, Prior, PriorSpec};
use trendgp::transforms::TransformSpec;
use trendgp::Dataset;

use crate::args::{CvKind, Estimator, FitArgs, ModelArgs};
use crate::error::{CliError, CliResult};
use crate::input::{parse_interval, parse_time};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelChoice {
    Auto {
        cv: CvKind,
        min_train: usize,
        restarts: usize,
    },
    Given {
        label: String,
        #[serde(skip)]
        spec: ModelSpec,
    },
}

/// Replacement priors; absent fields keep the defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<Prior>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Prior>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Prior>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<Prior>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Prior>,
}

impl PriorOverrides {
    /// Applies the overrides. A `nu` override is ignored when the model has no `nu`.
    pub fn apply(&self, mut spec: PriorSpec) -> PriorSpec {
        if let Some(b) = &self.beta {
            spec.beta = b.clone();
        }
        if let Some(p) = self.alpha {
            spec.alpha = p;
        }
        if let Some(p) = self.rho {
            spec.rho = p;
        }
        if let (Some(p), Some(_)) = (self.nu, spec.nu) {
            spec.nu = Some(p);
        }
        if let Some(p) = self.sigma {
            spec.sigma = p;
        }
        spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McmcConfig {
    pub chains: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub max_draws: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub priors: Option<PriorOverrides>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrosspointConfig {
    pub window: [f64; 2],
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisConfig {
    pub model: ModelChoice,
    pub estimator: Estimator,
    pub transform: TransformSpec,
    pub seed: u64,
    pub restarts: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed: Option<BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mcmc: Option<McmcConfig>,
    pub forecast: bool,
    pub grid_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_range: Option<[f64; 2]>,
    pub intervals: Vec<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anchor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crosspoint: Option<CrosspointConfig>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub query_times: Vec<f64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

fn parse_fixed(s: &str) -> CliResult<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| CliError::parse(format!("`{part}` is not name=value")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::parse(format!("bad value in `{part}`")))?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}

impl AnalysisConfig {
    /// Settings shared by every analysis command.
    pub fn from_model_args(args: &ModelArgs) -> CliResult<Self> {
        let model = if args.model.eq_ignore_ascii_case("auto") {
            ModelChoice::Auto {
                cv: args.cv,
                min_train: args.min_train,
                restarts: args.cv_restarts.max(1),
            }
        } else {
            let spec = ModelSpec::parse(&args.model)
                .ok_or_else(|| CliError::parse(format!("unknown model `{}`", args.model)))?;
            ModelChoice::Given {
                label: spec.to_string(),
                spec,
            }
        };
        let transform = TransformSpec::parse(&args.transform)
            .ok_or_else(|| CliError::parse(format!("unknown transform `{}`", args.transform)))?;
        let fixed = args.fixed.as_deref().map(parse_fixed).transpose()?;
        if fixed.is_some() {
            if matches!(model, ModelChoice::Auto { .. }) {
                return Err(CliError::parse("--fixed needs an explicit --model"));
            }
            if args.estimator == Estimator::Bayes {
                return Err(CliError::parse("--fixed cannot be combined with --estimator bayes"));
            }
        }
        let mcmc = match args.estimator {
            Estimator::Ml => None,
            Estimator::Bayes => {
                let priors = match &args.priors {
                    Some(path) => {
                        let text = fs::read_to_string(path)
                            .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
                        Some(
                            serde_json::from_str::<PriorOverrides>(&text)
                                .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?,
                        )
                    }
                    None => None,
                };
                let warmup = args.warmup.unwrap_or(args.iters / 2);
                if args.chains == 0 || warmup >= args.iters {
                    return Err(CliError::parse(format!(
                        "need at least one chain and more iterations than warmup (chains {}, iters {}, warmup {warmup})",
                        args.chains, args.iters
                    )));
                }
                Some(McmcConfig {
                    chains: args.chains,
                    iterations: args.iters,
                    warmup,
                    max_draws: args.max_draws,
                    priors,
                })
            }
        };
        if args.restarts == 0 {
            return Err(CliError::parse("--restarts must be at least 1"));
        }
        Ok(AnalysisConfig {
            model,
            estimator: args.estimator,
            transform,
            seed: args.seed,
            restarts: args.restarts,
            fixed,
            mcmc,
            forecast: args.forecast,
            grid_points: 0,
            grid_range: None,
            intervals: Vec::new(),
            anchor: None,
            crosspoint: None,
            query_times: Vec::new(),
        })
    }

    pub fn from_fit_args(args: &FitArgs) -> CliResult<Self> {
        let mut cfg = AnalysisConfig::from_model_args(&args.model)?;
        if args.grid < 2 {
            return Err(CliError::parse(format!("--grid must be at least 2, got {}", args.grid)));
        }
        cfg.grid_points = args.grid;
        cfg.grid_range = args
            .grid_range
            .as_deref()
            .map(parse_interval)
            .transpose()?
            .map(|(a, b)| [a, b]);
        cfg.intervals = parse_intervals(&args.interval)?;
        cfg.anchor = args
            .anchor
            .as_deref()
            .map(|s| parse_time(s).ok_or_else(|| CliError::parse(format!("bad anchor `{s}`"))))
            .transpose()?;
        cfg.crosspoint = match &args.crosspoint {
            Some(w) => {
                let (a, b) = parse_interval(w)?;
                if !(0.0..=1.0).contains(&args.threshold) {
                    return Err(CliError::parse("--threshold must lie in [0, 1]"));
                }
                Some(CrosspointConfig {
                    window: [a, b],
                    threshold: args.threshold,
                })
            }
            None => None,
        };
        Ok(cfg)
    }

    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    /// Checks every requested time against the data span.
    pub fn check_span(&self, data: &Dataset) -> CliResult<()> {
        let (lo, hi) = data.span().ok_or_else(|| CliError::parse("input has no observations"))?;
        let inside = |t: f64| self.forecast || (lo..=hi).contains(&t);
        let mut times: Vec<(String, f64)> = Vec::new();
        for [a, b] in &self.intervals {
            times.push(("interval".into(), *a));
            times.push(("interval".into(), *b));
        }
        if let Some([a, b]) = self.grid_range {
            if !(a < b) {
                return Err(CliError::parse(format!("grid range {a}:{b} is empty")));
            }
            times.push(("grid range".into(), a));
            times.push(("grid range".into(), b));
        }
        for t in &self.query_times {
            times.push(("query time".into(), *t));
        }
        for (what, t) in times {
            if !inside(t) {
                return Err(CliError::parse(format!(
                    "{what} {t} lies outside the data span [{lo}, {hi}]; pass --forecast to allow it"
                )));
            }
        }
        Ok(())
    }
}

pub fn parse_intervals(raw: &[String]) -> CliResult<Vec<[f64; 2]>> {
    raw.iter()
        .map(|s| {
            let (a, b) = parse_interval(s)?;
            if a > b {
                return Err(CliError::parse(format!("interval `{s}` is reversed")));
            }
            Ok([a, b])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    fn fit_config(extra: &[&str]) -> CliResult<AnalysisConfig> {
        let mut argv = vec!["trendgp", "fit", "--input", "x.csv", "--out", "o"];
        argv.extend_from_slice(extra);
        match crate::args::Cli::try_parse_from(argv).unwrap().command {
            crate::args::Command::Fit(f) => AnalysisConfig::from_fit_args(&f),
            _ => unreachable!(),
        }
    }

    #[test]
    fn defaults_and_hash_stability() {
        let a = fit_config(&[]).unwrap();
        assert_eq!(a.grid_points, 500);
        assert_eq!(a.hash(), fit_config(&[]).unwrap().hash());
        assert_ne!(a.hash(), fit_config(&["--seed", "1"]).unwrap().hash());
    }

    #[test]
    fn invalid_settings() {
        assert!(fit_config(&["--grid", "1"]).is_err());
        assert!(fit_config(&["--model", "cubic:se"]).is_err());
        assert!(fit_config(&["--interval", "2:1"]).is_err());
        assert!(fit_config(&["--model", "auto", "--fixed", "alpha=1"]).is_err());
        assert!(fit_config(&["--transform", "sqrt"]).is_err());
    }

    #[test]
    fn span_check() {
        let d = Dataset::new(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert!(fit_config(&["--interval", "0:1"]).unwrap().check_span(&d).is_ok());
        assert!(fit_config(&["--interval", "0:2"]).unwrap().check_span(&d).is_err());
        assert!(fit_config(&["--interval", "0:2", "--forecast"]).unwrap().check_span(&d).is_ok());
    }

    #[test]
    fn overrides_keep_unset_defaults() {
        let o: PriorOverrides = serde_json::from_str(r#"{"rho": {"kind": "fixed", "value": 0.5}}"#).unwrap();
        let base = PriorSpec {
            beta: vec![],
            alpha: Prior::Fixed { value: 1.0 },
            rho: Prior::Fixed { value: 1.0 },
            nu: None,
            sigma: Prior::Fixed { value: 0.1 },
        };
        let merged = o.apply(base.clone());
        assert_eq!(merged.rho, Prior::Fixed { value: 0.5 });
        assert_eq!(merged.alpha, base.alpha);
        assert!(serde_json::from_str::<PriorOverrides>(r#"{"gamma": 1}"#).is_err());
    }
}
