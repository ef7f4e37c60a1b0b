//! Adaptive random-walk Metropolis over the hyper-parameters.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::likelihood::marginal_loglik;
use super::priors::{Prior, PriorSpec};
use super::{mean_center, ModelSpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::posterior::Hyperparams;

const TARGET_ACCEPTANCE: f64 = 0.3;
const ADAPT_EVERY: usize = 100;
const INIT_ATTEMPTS: usize = 50;

#[derive(Debug, Clone)]
pub struct BayesOptions {
    pub chains: usize,
    pub iterations: usize,
    /// Defaults to half of `iterations`.
    pub warmup: Option<usize>,
    pub seed: u64,
    /// Starting point, typically the ML fit. Chains start at independent
    /// perturbations of it.
    pub init: Option<Hyperparams>,
    /// Standard deviation of the start perturbation in unconstrained units.
    pub init_spread: f64,
}

impl Default for BayesOptions {
    fn default() -> Self {
        BayesOptions {
            chains: 4,
            iterations: 25_000,
            warmup: None,
            seed: 0,
            init: None,
            init_spread: 0.1,
        }
    }
}

/// Post-warmup draws on the natural scale, `draws[chain][iteration][param]`
/// in [`ModelSpec::param_names`] order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McmcSamples {
    model: ModelSpec,
    center: f64,
    names: Vec<String>,
    draws: Vec<Vec<Vec<f64>>>,
    warmup: usize,
    seed: u64,
    acceptance: Vec<f64>,
}

impl McmcSamples {
    /// Wraps externally produced draws. Every chain must have the same length
    /// and positive parameters must be positive.
    pub fn from_draws(
        model: ModelSpec,
        center: f64,
        draws: Vec<Vec<Vec<f64>>>,
        warmup: usize,
        seed: u64,
        acceptance: Vec<f64>,
    ) -> Result<Self> {
        let p = model.n_params();
        let len = draws.first().map_or(0, Vec::len);
        if draws.is_empty() || len == 0 {
            return Err(Error::InsufficientDraws("no draws".into()));
        }
        for chain in &draws {
            if chain.len() != len {
                return Err(Error::LengthMismatch {
                    expected: len,
                    got: chain.len(),
                });
            }
            for d in chain {
                if d.len() != p {
                    return Err(Error::LengthMismatch { expected: p, got: d.len() });
                }
                if d[model.n_beta()..].iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(Error::InvalidParameter(format!("non-positive draw {d:?}")));
                }
            }
        }
        Ok(McmcSamples {
            model,
            center,
            names: model.param_names(),
            draws,
            warmup,
            seed,
            acceptance,
        })
    }

    pub fn model(&self) -> ModelSpec {
        self.model
    }

    /// Expansion point of the mean polynomial in every draw.
    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_chains(&self) -> usize {
        self.draws.len()
    }

    pub fn draws_per_chain(&self) -> usize {
        self.draws[0].len()
    }

    pub fn n_draws(&self) -> usize {
        self.n_chains() * self.draws_per_chain()
    }

    pub fn warmup(&self) -> usize {
        self.warmup
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Post-warmup acceptance rate per chain.
    pub fn acceptance(&self) -> &[f64] {
        &self.acceptance
    }

    pub fn chain(&self, c: usize) -> &[Vec<f64>] {
        &self.draws[c]
    }

    /// Draw `i` counting chain by chain.
    pub fn draw(&self, i: usize) -> &[f64] {
        let per = self.draws_per_chain();
        &self.draws[i / per][i % per]
    }

    /// Trace of one parameter for every chain.
    pub fn param_chains(&self, name: &str) -> Result<Vec<Vec<f64>>> {
        let j = self
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown parameter {name}")))?;
        Ok(self
            .draws
            .iter()
            .map(|chain| chain.iter().map(|d| d[j]).collect())
            .collect())
    }

    pub fn hyperparams(&self, i: usize) -> Result<Hyperparams> {
        self.model.hyperparams(self.draw(i), self.center)
    }
}

/// Map between the free unconstrained coordinates and the full natural-scale
/// parameter vector. Positive parameters are log-transformed.
struct Layout {
    priors: Vec<Prior>,
    free: Vec<usize>,
    positive_from: usize,
}

impl Layout {
    fn natural(&self, u: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = self
            .priors
            .iter()
            .map(|p| match p {
                Prior::Fixed { value } => *value,
                _ => 0.0,
            })
            .collect();
        for (k, &j) in self.free.iter().enumerate() {
            x[j] = if j >= self.positive_from { u[k].exp() } else { u[k] };
        }
        x
    }

    fn unconstrained(&self, x: &[f64]) -> Vec<f64> {
        self.free
            .iter()
            .map(|&j| if j >= self.positive_from { x[j].ln() } else { x[j] })
            .collect()
    }

    /// Log prior plus the log-Jacobian of the exp transforms.
    fn log_prior(&self, u: &[f64], x: &[f64]) -> f64 {
        self.free
            .iter()
            .enumerate()
            .map(|(k, &j)| {
                let jac = if j >= self.positive_from { u[k] } else { 0.0 };
                self.priors[j].ln_pdf(x[j]) + jac
            })
            .sum()
    }
}

struct Target<'a> {
    data: &'a Dataset,
    model: ModelSpec,
    center: f64,
    layout: Layout,
}

impl Target<'_> {
    fn log_density(&self, u: &[f64]) -> f64 {
        if u.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let x = self.layout.natural(u);
        let lp = self.layout.log_prior(u, &x);
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        let ll = self
            .model
            .hyperparams(&x, self.center)
            .and_then(|theta| marginal_loglik(self.data, &theta));
        match ll {
            Ok(v) if v.is_finite() => lp + v,
            _ => f64::NEG_INFINITY,
        }
    }
}

struct ChainOutput {
    draws: Vec<Vec<f64>>,
    acceptance: f64,
}

/// Running mean and scatter matrix (Welford).
struct Moments {
    n: usize,
    mean: DVector<f64>,
    scatter: DMatrix<f64>,
}

impl Moments {
    fn new(d: usize) -> Self {
        Moments {
            n: 0,
            mean: DVector::zeros(d),
            scatter: DMatrix::zeros(d, d),
        }
    }

    fn push(&mut self, u: &DVector<f64>) {
        self.n += 1;
        let delta = u - &self.mean;
        self.mean += &delta / self.n as f64;
        let delta2 = u - &self.mean;
        self.scatter += &delta * delta2.transpose();
    }

    fn covariance(&self) -> DMatrix<f64> {
        &self.scatter / (self.n - 1) as f64
    }
}

fn run_chain(target: &Target<'_>, start: Vec<f64>, chain: usize, opts: &BayesOptions, warmup: usize) -> Result<ChainOutput> {
    let d = start.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(chain as u64);
    let jitter_start = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        start
            .iter()
            .map(|v| {
                let z: f64 = StandardNormal.sample(rng);
                v + opts.init_spread * z
            })
            .collect()
    };
    let mut u = start.clone();
    let mut lp = f64::NEG_INFINITY;
    for _ in 0..INIT_ATTEMPTS {
        let cand = jitter_start(&mut rng);
        let v = target.log_density(&cand);
        if v.is_finite() {
            u = cand;
            lp = v;
            break;
        }
    }
    if !lp.is_finite() {
        lp = target.log_density(&u);
    }
    if !lp.is_finite() {
        return Err(Error::Sampler(format!(
            "non-finite posterior density at the initial value of chain {chain}"
        )));
    }

    let mut u = DVector::from_vec(u);
    let mut root = DMatrix::from_diagonal_element(d, d, 0.1);
    let optimal = (2.38 / (d as f64).sqrt()).ln();
    let mut log_scale = optimal;
    let mut have_cov = false;
    let mut moments = Moments::new(d);
    let mut draws = Vec::with_capacity(opts.iterations - warmup);
    let mut accepted = 0usize;
    for it in 0..opts.iterations {
        let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let proposal = &u + log_scale.exp() * (&root * z);
        let lp_new = target.log_density(proposal.as_slice());
        let log_ratio = lp_new - lp;
        let accept = log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio;
        if accept {
            u = proposal;
            lp = lp_new;
        }
        if it < warmup {
            let prob = if log_ratio.is_nan() { 0.0 } else { log_ratio.min(0.0).exp() };
            log_scale += (prob - TARGET_ACCEPTANCE) / ((it + 1) as f64).powf(0.6);
            log_scale = log_scale.clamp(optimal - 10.0, optimal + 5.0);
            if it >= warmup / 10 {
                moments.push(&u);
            }
            if (it + 1) % ADAPT_EVERY == 0 && moments.n > 10 * d {
                let cov = moments.covariance() + DMatrix::from_diagonal_element(d, d, 1e-10);
                if let Some(ch) = Cholesky::new(cov) {
                    root = ch.unpack();
                    // the scale learned against the initial diagonal proposal
                    // does not carry over to the empirical covariance
                    if !have_cov {
                        log_scale = optimal;
                        have_cov = true;
                    }
                }
            }
        } else {
            if accept {
                accepted += 1;
            }
            draws.push(target.layout.natural(u.as_slice()));
        }
    }
    let kept = opts.iterations - warmup;
    Ok(ChainOutput {
        draws,
        acceptance: if kept > 0 { accepted as f64 / kept as f64 } else { 0.0 },
    })
}

/// Samples the posterior of the hyper-parameters given the data under
/// `priors` with `opts.chains` independent adaptive Metropolis chains.
///
/// The proposal covariance tracks the empirical covariance of the chain and
/// its global scale is tuned towards 30% acceptance during warmup; both are
/// frozen afterwards. Parameters with a `Fixed` prior are held constant.
pub fn fit_bayes(data: &Dataset, model: ModelSpec, priors: &PriorSpec, opts: &BayesOptions) -> Result<McmcSamples> {
    if data.len() < 3 {
        return Err(Error::InvalidData(format!(
            "need at least 3 observations, got {}",
            data.len()
        )));
    }
    run_sampler(data, model, priors, opts)
}

/// Runs the same sampler without data, so the draws follow the prior. Useful
/// for checking the sampler and for prior predictive work.
pub fn sample_prior(model: ModelSpec, priors: &PriorSpec, opts: &BayesOptions) -> Result<McmcSamples> {
    run_sampler(&Dataset::empty(), model, priors, opts)
}

fn run_sampler(data: &Dataset, model: ModelSpec, priors: &PriorSpec, opts: &BayesOptions) -> Result<McmcSamples> {
    let warmup = opts.warmup.unwrap_or(opts.iterations / 2);
    if opts.chains == 0 || warmup >= opts.iterations {
        return Err(Error::InvalidParameter(format!(
            "need at least one chain and post-warmup draws (chains {}, iterations {}, warmup {warmup})",
            opts.chains, opts.iterations
        )));
    }
    let ordered = priors.ordered(&model)?;
    let free: Vec<usize> = (0..ordered.len()).filter(|&j| !ordered[j].is_fixed()).collect();
    let center = mean_center(data);
    let layout = Layout {
        priors: ordered.clone(),
        free,
        positive_from: model.n_beta(),
    };
    let init_natural: Vec<f64> = match &opts.init {
        Some(theta) => {
            let mut x = model.values(theta);
            for (j, p) in ordered.iter().enumerate() {
                if let Prior::Fixed { value } = p {
                    x[j] = *value;
                }
            }
            x
        }
        None => ordered.iter().map(|p| p.quantile(0.5)).collect(),
    };
    let start = layout.unconstrained(&init_natural);
    let target = Target {
        data,
        model,
        center,
        layout,
    };
    if start.is_empty() {
        // everything fixed: the posterior is a point mass
        let x = target.layout.natural(&[]);
        let kept = opts.iterations - warmup;
        return McmcSamples::from_draws(model, center, vec![vec![x; kept]; opts.chains], warmup, opts.seed, vec![0.0; opts.chains]);
    }
    let outputs: Vec<Result<ChainOutput>> = (0..opts.chains)
        .into_par_iter()
        .map(|c| run_chain(&target, start.clone(), c, opts, warmup))
        .collect();
    let outputs: Vec<ChainOutput> = outputs.into_iter().collect::<Result<_>>()?;
    if outputs.iter().all(|o| o.acceptance < 0.01) {
        return Err(Error::Sampler(format!(
            "all chains diverged (acceptance {:?})",
            outputs.iter().map(|o| o.acceptance).collect::<Vec<_>>()
        )));
    }
    let acceptance = outputs.iter().map(|o| o.acceptance).collect();
    let draws = outputs.into_iter().map(|o| o.draws).collect();
    McmcSamples::from_draws(model, center, draws, warmup, opts.seed, acceptance)
}
