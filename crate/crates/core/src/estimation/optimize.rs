//! Multi-start Nelder-Mead maximization of the profiled marginal likelihood.

use argmin::core::{CostFunction, Executor, State, TerminationReason};
use argmin::solver::neldermead::NelderMead;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::likelihood::{profiled_loglik, ProfiledFit};
use super::{mean_center, ModelSpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec, MeanSpec};
use crate::posterior::Hyperparams;
use crate::stats::variance;

/// Cost assigned to points where the likelihood cannot be evaluated. Finite
/// so that simplex statistics stay finite.
const FAILED_COST: f64 = 1e100;
/// Quadratic penalty per squared log-unit outside the search box.
const BOX_PENALTY: f64 = 1e4;
/// Distance (in log units) to a bound below which a fit is flagged.
const BOUNDARY_MARGIN: f64 = 1e-2;

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Number of starting points, warm starts included.
    pub restarts: usize,
    /// Simplex stopping rule: standard deviation of the vertex objectives.
    pub tolerance: f64,
    pub max_iters: u64,
    pub seed: u64,
    /// Extra starting points tried before the random ones.
    pub warm_starts: Vec<Hyperparams>,
    /// RQ fits with `nu` above this are refitted as SE.
    pub nu_divergence: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            restarts: 16,
            tolerance: 1e-8,
            max_iters: 2000,
            seed: 0,
            warm_starts: Vec::new(),
            nu_divergence: 1e6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// The model actually returned; differs from `requested` after an RQ to
    /// SE substitution.
    pub model: ModelSpec,
    pub requested: ModelSpec,
    pub theta: Hyperparams,
    pub loglik: f64,
    pub converged: bool,
    /// Log-likelihood at each starting point of the returned model's search,
    /// `-inf` where it could not be evaluated.
    pub start_logliks: Vec<f64>,
    pub failed_starts: usize,
    /// Some kernel or noise parameter ended within 0.01 log units of its
    /// search bound (a degenerate fit).
    pub at_boundary: bool,
}

impl FitResult {
    pub fn substituted(&self) -> bool {
        self.model != self.requested
    }
}

/// Search box and random-start box in log coordinates
/// `[ln alpha, ln rho, (ln nu), ln sigma]`.
#[derive(Debug, Clone)]
struct Boxes {
    lo: Vec<f64>,
    hi: Vec<f64>,
    init_lo: Vec<f64>,
    init_hi: Vec<f64>,
}

impl Boxes {
    fn new(data: &Dataset, model: &ModelSpec) -> Self {
        let ys = data.ys();
        // zero-mean models must reach the raw level of the data
        let level = if model.degree.is_some() {
            variance(ys).sqrt()
        } else {
            (ys.iter().map(|y| y * y).sum::<f64>() / ys.len() as f64).sqrt()
        };
        let level = if level > 0.0 && level.is_finite() { level } else { 1.0 };
        let (a, b) = data.span().unwrap_or((0.0, 1.0));
        let span = if b > a { b - a } else { 1.0 };
        let ln = f64::ln;
        let mut lo = vec![ln(1e-4 * level), ln(1e-3 * span)];
        let mut hi = vec![ln(1e3 * level), ln(1e2 * span)];
        let mut init_lo = vec![ln(level / 3.0), ln(span / 50.0)];
        let mut init_hi = vec![ln(3.0 * level), ln(2.0 * span)];
        if model.family == KernelFamily::RationalQuadratic {
            lo.push(ln(1e-3));
            hi.push(ln(1e8));
            init_lo.push(ln(0.3));
            init_hi.push(ln(30.0));
        }
        lo.push(ln(1e-6 * level));
        hi.push(ln(1e2 * level));
        init_lo.push(ln(level / 100.0));
        init_hi.push(ln(level));
        Boxes {
            lo,
            hi,
            init_lo,
            init_hi,
        }
    }

    fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (l, h))| v.clamp(*l, *h))
            .collect()
    }

    fn near_bound(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .any(|(v, (l, h))| v - l < BOUNDARY_MARGIN || h - v < BOUNDARY_MARGIN)
    }
}

#[derive(Clone)]
struct Objective<'a> {
    data: &'a Dataset,
    model: ModelSpec,
    center: f64,
    boxes: Boxes,
}

impl Objective<'_> {
    fn kernel_sigma(&self, x: &[f64]) -> Result<(KernelSpec, f64)> {
        let nu = (self.model.family == KernelFamily::RationalQuadratic).then(|| x[2].exp());
        let kernel = KernelSpec::new(self.model.family, x[0].exp(), x[1].exp(), nu)?;
        Ok((kernel, x[x.len() - 1].exp()))
    }

    /// Profiled fit at a point inside the box.
    fn eval(&self, x: &[f64]) -> Result<ProfiledFit> {
        let (kernel, sigma) = self.kernel_sigma(x)?;
        profiled_loglik(self.data, &kernel, sigma, self.model.degree, self.center)
    }

    fn hyperparams(&self, x: &[f64], beta: Vec<f64>) -> Result<Hyperparams> {
        let (kernel, sigma) = self.kernel_sigma(x)?;
        let mean = match self.model.degree {
            None => MeanSpec::zero(),
            Some(_) => MeanSpec::centered(beta, self.center)?,
        };
        Hyperparams::new(mean, kernel, sigma)
    }

    fn log_coords(&self, theta: &Hyperparams) -> Option<Vec<f64>> {
        let k = &theta.kernel;
        let mut x = vec![k.alpha().ln(), k.rho().ln()];
        if self.model.family == KernelFamily::RationalQuadratic {
            x.push(k.nu().unwrap_or(10.0).ln());
        }
        if theta.sigma <= 0.0 {
            return None;
        }
        x.push(theta.sigma.ln());
        Some(self.boxes.clamp(&x))
    }
}

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let inside = self.boxes.clamp(x);
        let outside: f64 = x.iter().zip(&inside).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(match self.eval(&inside) {
            Ok(p) => -p.loglik + BOX_PENALTY * outside,
            Err(_) => FAILED_COST,
        })
    }
}

struct StartOutcome {
    start_loglik: f64,
    best: Vec<f64>,
    cost: f64,
    converged: bool,
}

fn simplex_search(obj: &Objective<'_>, x0: Vec<f64>, opts: &FitOptions) -> StartOutcome {
    let start_loglik = obj.eval(&x0).map_or(f64::NEG_INFINITY, |p| p.loglik);
    let mut vertices = vec![x0.clone()];
    for i in 0..x0.len() {
        let mut v = x0.clone();
        v[i] += if v[i] + 0.5 <= obj.boxes.hi[i] { 0.5 } else { -0.5 };
        vertices.push(v);
    }
    let fallback = StartOutcome {
        start_loglik,
        best: x0.clone(),
        cost: -start_loglik,
        converged: false,
    };
    let Ok(solver) = NelderMead::new(vertices).with_sd_tolerance(opts.tolerance) else {
        return fallback;
    };
    let run = Executor::new(obj.clone(), solver)
        .configure(|s| s.max_iters(opts.max_iters))
        .run();
    match run {
        Ok(res) => {
            let state = res.state();
            match state.get_best_param() {
                Some(p) => StartOutcome {
                    start_loglik,
                    best: obj.boxes.clamp(p),
                    cost: state.get_best_cost(),
                    converged: state.get_termination_reason() == Some(&TerminationReason::SolverConverged),
                },
                None => fallback,
            }
        }
        Err(_) => fallback,
    }
}

fn fit_family(data: &Dataset, model: ModelSpec, opts: &FitOptions) -> Result<FitResult> {
    let obj = Objective {
        data,
        model,
        center: mean_center(data),
        boxes: Boxes::new(data, &model),
    };
    let mut starts: Vec<Vec<f64>> = opts.warm_starts.iter().filter_map(|w| obj.log_coords(w)).collect();
    let total = opts.restarts.max(starts.len()).max(1);
    for r in starts.len()..total {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(r as u64);
        let x = obj
            .boxes
            .init_lo
            .iter()
            .zip(&obj.boxes.init_hi)
            .map(|(l, h)| rng.random_range(*l..=*h))
            .collect();
        starts.push(x);
    }
    let outcomes: Vec<StartOutcome> = starts
        .into_par_iter()
        .map(|x0| simplex_search(&obj, x0, opts))
        .collect();
    let failed_starts = outcomes.iter().filter(|o| o.cost >= FAILED_COST).count();
    let best = outcomes
        .iter()
        .filter(|o| o.cost < FAILED_COST)
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .ok_or_else(|| Error::FitFailed(format!("{model}: no starting point could be evaluated")))?;
    let prof = obj.eval(&best.best)?;
    let theta = obj.hyperparams(&best.best, prof.beta)?;
    Ok(FitResult {
        model,
        requested: model,
        theta,
        loglik: prof.loglik,
        converged: best.converged,
        start_logliks: outcomes.iter().map(|o| o.start_loglik).collect(),
        failed_starts,
        at_boundary: obj.boxes.near_bound(&best.best),
    })
}

/// Marginal maximum likelihood estimate of the hyper-parameters.
///
/// Kernel and noise parameters are searched on the log scale by Nelder-Mead
/// from `opts.restarts` starting points; the mean coefficients are profiled
/// out by generalized least squares. RQ fits whose `nu` diverges are refitted
/// as SE and returned with `model != requested`.
pub fn fit_ml(data: &Dataset, model: ModelSpec, opts: &FitOptions) -> Result<FitResult> {
    if data.len() < 3 {
        return Err(Error::InvalidData(format!(
            "need at least 3 observations to fit, got {}",
            data.len()
        )));
    }
    if model.n_beta() >= data.len() {
        return Err(Error::InvalidData(format!(
            "{} observations cannot identify a degree {} mean",
            data.len(),
            model.degree.unwrap_or_default()
        )));
    }
    let fit = fit_family(data, model, opts)?;
    let diverged = fit.theta.kernel.nu().is_some_and(|nu| nu > opts.nu_divergence);
    if !diverged {
        return Ok(fit);
    }
    let se = ModelSpec {
        family: KernelFamily::SquaredExponential,
        ..model
    };
    let mut warm = vec![Hyperparams::new(
        fit.theta.mean.clone(),
        KernelSpec::se(fit.theta.kernel.alpha(), fit.theta.kernel.rho())?,
        fit.theta.sigma,
    )?];
    for w in &opts.warm_starts {
        if let Ok(k) = KernelSpec::se(w.kernel.alpha(), w.kernel.rho()) {
            warm.push(Hyperparams::new(w.mean.clone(), k, w.sigma)?);
        }
    }
    let se_opts = FitOptions {
        warm_starts: warm,
        ..opts.clone()
    };
    let mut refit = fit_family(data, se, &se_opts)?;
    refit.requested = model;
    Ok(refit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::marginal_loglik;

    fn wavy(n: usize, offset: f64) -> Dataset {
        let ts: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let ys = ts
            .iter()
            .enumerate()
            .map(|(i, t)| offset + (6.0 * t).sin() + 0.05 * ((i * 7919 % 13) as f64 / 13.0 - 0.5))
            .collect();
        Dataset::new(ts, ys).unwrap()
    }

    #[test]
    fn returned_value_dominates_start_points() {
        let d = wavy(25, 0.0);
        let model = ModelSpec::new(Some(0), KernelFamily::SquaredExponential).unwrap();
        let fit = fit_ml(&d, model, &FitOptions::default()).unwrap();
        assert_eq!(fit.start_logliks.len(), 16);
        for s in &fit.start_logliks {
            assert!(fit.loglik >= *s);
        }
        assert!((marginal_loglik(&d, &fit.theta).unwrap() - fit.loglik).abs() < 1e-9);
        assert!(fit.theta.kernel.rho() > 0.1 && fit.theta.kernel.rho() < 1.0);
        assert!(!fit.substituted());
    }

    #[test]
    fn shift_moves_only_the_intercept() {
        let model = ModelSpec::new(Some(0), KernelFamily::Matern52).unwrap();
        let opts = FitOptions {
            restarts: 6,
            ..FitOptions::default()
        };
        let a = fit_ml(&wavy(20, 0.0), model, &opts).unwrap();
        let b = fit_ml(&wavy(20, 5.0), model, &opts).unwrap();
        let (ka, kb) = (a.theta.kernel, b.theta.kernel);
        assert!((ka.rho().ln() - kb.rho().ln()).abs() < 1e-3);
        assert!((ka.alpha().ln() - kb.alpha().ln()).abs() < 1e-3);
        let shift = b.theta.mean.coefficients()[0] - a.theta.mean.coefficients()[0];
        assert!((shift - 5.0).abs() < 1e-3, "{shift}");
    }

    #[test]
    fn too_few_points() {
        let d = Dataset::new(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        let model = ModelSpec::new(None, KernelFamily::SquaredExponential).unwrap();
        assert!(matches!(fit_ml(&d, model, &FitOptions::default()), Err(Error::InvalidData(_))));
    }

    #[test]
    fn smooth_data_sends_rq_to_se() {
        // a draw-free, infinitely smooth signal with tiny noise
        let ts: Vec<f64> = (0..30).map(|i| i as f64 / 29.0).collect();
        let ys: Vec<f64> = ts.iter().map(|t| (-(t - 0.4f64).powi(2) / 0.08).exp()).collect();
        let d = Dataset::new(ts, ys).unwrap();
        let model = ModelSpec::new(Some(0), KernelFamily::RationalQuadratic).unwrap();
        let fit = fit_ml(&d, model, &FitOptions::default()).unwrap();
        if fit.substituted() {
            assert_eq!(fit.model.family, KernelFamily::SquaredExponential);
            assert_eq!(fit.requested, model);
            assert!(fit.theta.kernel.nu().is_none());
        } else {
            assert!(fit.theta.kernel.nu().unwrap() <= 1e6);
        }
    }

    #[test]
    fn mean_of_constant_data() {
        let d = Dataset::new(vec![0.0, 1.0, 2.0, 3.0], vec![4.0; 4]).unwrap();
        let model = ModelSpec::new(Some(0), KernelFamily::SquaredExponential).unwrap();
        let fit = fit_ml(&d, model, &FitOptions::default()).unwrap();
        assert!((fit.theta.mean.coefficients()[0] - 4.0).abs() < 1e-9);
        assert!(fit.at_boundary);
    }
}
