//! Model choice and hyper-parameter estimation shared by the analysis commands.

use std::fs;
use std::path::Path;

use trendgp::estimation::{
    default_priors, fit_bayes, fit_ml, marginal_loglik, mean_center, BayesOptions, FitOptions, FitResult,
    McmcSamples, ModelSpec,
};
use trendgp::selection::{select_model, CandidateGrid, CvOptions, CvScheme, Selection};
use trendgp::transforms::transform_dataset;
use trendgp::{Dataset, KernelFamily};

use crate::args::CvKind;
use crate::config::{sha256_hex, AnalysisConfig, ModelChoice};
use crate::error::{CliError, CliResult};
use crate::input::parse_series;

pub struct Input {
    /// Observations on the original scale.
    pub raw: Dataset,
    /// Observations on the transformed (model) scale.
    pub data: Dataset,
    pub digest: String,
}

pub fn load_input(path: &Path, cfg: &AnalysisConfig) -> CliResult<Input> {
    let bytes = fs::read(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let raw = parse_series(&bytes)?;
    let data = transform_dataset(cfg.transform, &raw)?;
    cfg.check_span(&raw)?;
    Ok(Input {
        raw,
        data,
        digest: sha256_hex(&bytes),
    })
}

pub struct Estimate {
    pub selection: Option<Selection>,
    pub ml: FitResult,
    /// Hyper-parameters were supplied, not estimated.
    pub fixed: bool,
    pub samples: Option<McmcSamples>,
}

impl Estimate {
    pub fn model(&self) -> ModelSpec {
        self.ml.model
    }
}

fn fit_options(cfg: &AnalysisConfig) -> FitOptions {
    FitOptions {
        restarts: cfg.restarts,
        seed: cfg.seed,
        ..FitOptions::default()
    }
}

fn fixed_fit(data: &Dataset, model: ModelSpec, values: &std::collections::BTreeMap<String, f64>) -> CliResult<FitResult> {
    let names = model.param_names();
    if let Some(extra) = values.keys().find(|k| !names.contains(k)) {
        return Err(CliError::parse(format!("model {model} has no parameter `{extra}`")));
    }
    let ordered = names
        .iter()
        .map(|n| {
            values
                .get(n)
                .copied()
                .ok_or_else(|| CliError::parse(format!("--fixed is missing `{n}` for model {model}")))
        })
        .collect::<CliResult<Vec<f64>>>()?;
    let theta = model.hyperparams(&ordered, mean_center(data))?;
    Ok(FitResult {
        model,
        requested: model,
        loglik: marginal_loglik(data, &theta)?,
        theta,
        converged: true,
        start_logliks: Vec::new(),
        failed_starts: 0,
        at_boundary: false,
    })
}

/// Selects (if asked), fits by maximum likelihood and, for the Bayesian
/// estimator, samples the posterior starting from the ML fit. With
/// `needs_eti` the automatic search skips kernels without an ETI.
pub fn estimate(cfg: &AnalysisConfig, data: &Dataset, needs_eti: bool) -> CliResult<Estimate> {
    let opts = fit_options(cfg);
    let (model, selection) = match &cfg.model {
        ModelChoice::Given { spec, .. } => (*spec, None),
        ModelChoice::Auto { cv, min_train, restarts } => {
            let families: Vec<KernelFamily> = KernelFamily::ALL
                .into_iter()
                .filter(|f| !needs_eti || f.admits(2, 2))
                .collect();
            let grid = CandidateGrid::new(vec![0, 1, 2], families)?;
            let scheme = match cv {
                CvKind::Loo => CvScheme::Loo,
                CvKind::Osa => CvScheme::Osa { min_train: *min_train },
            };
            let cv_opts = CvOptions {
                fit: FitOptions {
                    restarts: *restarts,
                    ..opts.clone()
                },
                fixed: None,
            };
            let sel = select_model(data, &grid, scheme, &cv_opts)?;
            (sel.winning_model(), Some(sel))
        }
    };
    let (ml, fixed) = match &cfg.fixed {
        Some(values) => (fixed_fit(data, model, values)?, true),
        None => (fit_ml(data, model, &opts)?, false),
    };
    let samples = match &cfg.mcmc {
        None => None,
        Some(mc) => {
            let mut priors = default_priors(&ml);
            if let Some(o) = &mc.priors {
                priors = o.apply(priors);
            }
            let bopts = BayesOptions {
                chains: mc.chains,
                iterations: mc.iterations,
                warmup: Some(mc.warmup),
                seed: cfg.seed,
                init: Some(ml.theta.clone()),
                ..BayesOptions::default()
            };
            Some(fit_bayes(data, ml.model, &priors, &bopts)?)
        }
    };
    Ok(Estimate {
        selection,
        ml,
        fixed,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn fixed_values_must_match_the_model() {
        let d = Dataset::new(vec![0.0, 0.5, 1.0], vec![0.0, 1.0, 0.0]).unwrap();
        let m = ModelSpec::parse("zero:se").unwrap();
        let mut v: BTreeMap<String, f64> = [("alpha", 1.0), ("rho", 0.3)].map(|(k, v)| (k.to_string(), v)).into();
        assert_eq!(fixed_fit(&d, m, &v).unwrap_err().exit_code(), 2);
        v.insert("sigma".into(), 0.1);
        let fit = fixed_fit(&d, m, &v).unwrap();
        assert_eq!(fit.theta.sigma, 0.1);
        assert!(fit.loglik.is_finite());
        v.insert("nu".into(), 1.0);
        assert!(fixed_fit(&d, m, &v).is_err());
    }
}
