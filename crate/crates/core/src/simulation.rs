//! Simulation study: random latent functions with known derivatives, model
//! fits on noisy observations of them, and residual summaries of the fitted
//! curves and trend indices.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimation::{fit_ml, FitOptions, ModelSpec};
use crate::indices::count_crossings;
use crate::kernels::{KernelFamily, KernelSpec, MeanSpec};
use crate::posterior::{prior_joint, GaussianSampler, GpPosterior, Hyperparams};
use crate::stats::{cumulative_trapezoid, linspace, mean, median, trapezoid};

/// Observation design on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// `n` equidistant points including both endpoints.
    Equidistant,
    /// `n` sorted uniform draws, redrawn per replicate.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub n: usize,
    pub sigma: f64,
    /// Generating kernel; the truth has zero mean.
    pub kernel: KernelSpec,
    /// Evaluation grid for the residual integrals.
    pub grid: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    pub design: Design,
    /// Mean degree of the fitted model (SE kernel).
    pub fit_degree: Option<usize>,
    pub restarts: usize,
}

impl Scenario {
    /// SE truth with `alpha = 1`, `rho = sqrt(3) / (2 pi)`, a 201-point grid,
    /// equidistant design and a constant-mean SE fit.
    pub fn standard(n: usize, sigma: f64, reps: usize, seed: u64) -> Result<Self> {
        let s = Scenario {
            n,
            sigma,
            kernel: KernelSpec::se(1.0, 3f64.sqrt() / (2.0 * PI))?,
            grid: linspace(0.0, 1.0, 201),
            reps,
            seed,
            design: Design::Equidistant,
            fit_degree: Some(0),
            restarts: 4,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::InvalidParameter(format!("need n >= 3, got {}", self.n)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise sd must be non-negative, got {}",
                self.sigma
            )));
        }
        if self.grid.len() < 2 || self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("grid needs at least 2 increasing points".into()));
        }
        if !self.kernel.family().admits(2, 2) {
            return Err(Error::InvalidParameter(format!(
                "the generating kernel must be twice differentiable, got {}",
                self.kernel.family()
            )));
        }
        Ok(())
    }
}

/// One joint draw of `(f, df)` on `grid` from the prior of `theta`.
pub fn simulate_gp(theta: &Hyperparams, grid: &[f64], seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !theta.kernel.family().admits(1, 1) {
        return Err(Error::InvalidParameter(format!(
            "the {} kernel has no derivative process",
            theta.kernel.family()
        )));
    }
    let jp = prior_joint(theta, grid)?.select_blocks(&[0, 1]);
    let draw = GaussianSampler::from_joint(&jp)?.sample(1, seed);
    let m = grid.len();
    let row = draw.row(0);
    Ok((row.columns(0, m).iter().copied().collect(), row.columns(m, m).iter().copied().collect()))
}

fn check_lengths(truth: &[f64], estimate: &[f64], grid: &[f64]) -> Result<()> {
    for v in [truth, estimate] {
        if v.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: v.len(),
            });
        }
    }
    Ok(())
}

/// Trapezoid integral of `truth - estimate` over the grid.
pub fn integrated_residual(truth: &[f64], estimate: &[f64], grid: &[f64]) -> Result<f64> {
    check_lengths(truth, estimate, grid)?;
    let d: Vec<f64> = truth.iter().zip(estimate).map(|(a, b)| a - b).collect();
    Ok(trapezoid(grid, &d))
}

/// Trapezoid integral of `(truth - estimate)^2` over the grid.
pub fn squared_l2(truth: &[f64], estimate: &[f64], grid: &[f64]) -> Result<f64> {
    check_lengths(truth, estimate, grid)?;
    let d: Vec<f64> = truth.iter().zip(estimate).map(|(a, b)| (a - b).powi(2)).collect();
    Ok(trapezoid(grid, &d))
}

/// Sign changes of consecutive first differences of the outcomes.
pub fn naive_sign_changes(data: &Dataset) -> Result<usize> {
    if data.len() < 3 {
        return Err(Error::InvalidData(format!(
            "need at least 3 observations, got {}",
            data.len()
        )));
    }
    let diffs: Vec<f64> = data.ys().windows(2).map(|w| w[1] - w[0]).collect();
    Ok(count_crossings(&diffs).total() as usize)
}

/// Residuals of one replicate. The ETI entries compare the counting process
/// of true trend sign changes with the cumulative ETI from 0 to `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicateMetrics {
    pub f_resid: f64,
    pub df_resid: f64,
    pub tdi_resid: f64,
    pub eti_resid: f64,
    pub f_l2: f64,
    pub df_l2: f64,
    pub tdi_l2: f64,
    pub eti_l2: f64,
    /// `ETI(0, 1)` minus the number of true sign changes on the grid.
    pub eti_total_error: f64,
    pub degenerate: bool,
}

/// Aggregate over a set of replicates: means, plus medians for ETI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub count: usize,
    pub f_resid: f64,
    pub df_resid: f64,
    pub tdi_resid: f64,
    pub eti_resid_median: f64,
    pub f_l2: f64,
    pub df_l2: f64,
    pub tdi_l2: f64,
    pub eti_l2_median: f64,
    pub eti_resid_mean: f64,
    pub eti_total_error: f64,
}

impl Aggregate {
    fn from_reps(reps: &[&ReplicateMetrics]) -> Self {
        let col = |f: fn(&ReplicateMetrics) -> f64| -> Vec<f64> { reps.iter().map(|r| f(r)).collect() };
        let avg = |f: fn(&ReplicateMetrics) -> f64| if reps.is_empty() { f64::NAN } else { mean(&col(f)) };
        let med = |f: fn(&ReplicateMetrics) -> f64| if reps.is_empty() { f64::NAN } else { median(&col(f)) };
        Aggregate {
            count: reps.len(),
            f_resid: avg(|r| r.f_resid),
            df_resid: avg(|r| r.df_resid),
            tdi_resid: avg(|r| r.tdi_resid),
            eti_resid_median: med(|r| r.eti_resid),
            f_l2: avg(|r| r.f_l2),
            df_l2: avg(|r| r.df_l2),
            tdi_l2: avg(|r| r.tdi_l2),
            eti_l2_median: med(|r| r.eti_l2),
            eti_resid_mean: avg(|r| r.eti_resid),
            eti_total_error: avg(|r| r.eti_total_error),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub n: usize,
    pub sigma: f64,
    pub reps: usize,
    /// Replicates whose fit or index evaluation failed (excluded everywhere).
    pub failed: usize,
    /// Replicates with a hyper-parameter on its search bound.
    pub degenerate: usize,
    /// All successful replicates.
    pub inclusive: Aggregate,
    /// Successful replicates that are not degenerate.
    pub exclusive: Aggregate,
    pub replicates: Vec<Option<ReplicateMetrics>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyResult {
    pub scenarios: Vec<ScenarioResult>,
}

const CSV_HEADER: &str = "n,sigma,reps,failed,degenerate,subset,count,\
resid_f,resid_df,resid_tdi,resid_eti_median,l2_f,l2_df,l2_tdi,l2_eti_median,resid_eti_mean,eti_total_error";

impl StudyResult {
    /// One row per scenario and subset (`inclusive`, `exclusive`), columns in
    /// the order of the published summary table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for s in &self.scenarios {
            for (name, a) in [("inclusive", &s.inclusive), ("exclusive", &s.exclusive)] {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                    s.n,
                    s.sigma,
                    s.reps,
                    s.failed,
                    s.degenerate,
                    name,
                    a.count,
                    a.f_resid,
                    a.df_resid,
                    a.tdi_resid,
                    a.eti_resid_median,
                    a.f_l2,
                    a.df_l2,
                    a.tdi_l2,
                    a.eti_l2_median,
                    a.eti_resid_mean,
                    a.eti_total_error
                );
            }
        }
        out
    }
}

/// SplitMix64 finalizer, used to derive independent replicate seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn replicate_seed(seed: u64, scenario: usize, rep: usize) -> u64 {
    mix(mix(seed ^ mix(scenario as u64)) ^ rep as u64)
}

fn sorted_union(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut all: Vec<f64> = a.iter().chain(b).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    all
}

/// Builds the truth sampler for a fixed set of observation times: joint
/// `(f, df)` on the union of the observation times and the grid.
struct Truth {
    union: Vec<f64>,
    sampler: GaussianSampler,
}

impl Truth {
    fn new(kernel: &KernelSpec, obs: &[f64], grid: &[f64]) -> Result<Self> {
        let union = sorted_union(obs, grid);
        let theta = Hyperparams::new(MeanSpec::zero(), *kernel, 0.0)?;
        let jp = prior_joint(&theta, &union)?.select_blocks(&[0, 1]);
        Ok(Truth {
            sampler: GaussianSampler::from_joint(&jp)?,
            union,
        })
    }

    /// `(f at obs, f on grid, df on grid)`.
    fn draw(&self, obs: &[f64], grid: &[f64], seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let x = self.sampler.sample(1, seed);
        let m = self.union.len();
        let pick = |ts: &[f64], block: usize| -> Vec<f64> {
            ts.iter()
                .map(|t| {
                    let i = self.union.partition_point(|u| u < t);
                    x[(0, block * m + i)]
                })
                .collect()
        };
        (pick(obs, 0), pick(grid, 0), pick(grid, 1))
    }
}

fn evaluate_replicate(
    scenario: &Scenario,
    obs: &[f64],
    truth: &Truth,
    seed: u64,
) -> Result<ReplicateMetrics> {
    let grid = &scenario.grid;
    let (f_obs, f_true, df_true) = truth.draw(obs, grid, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 << 32);
    let ys = f_obs
        .iter()
        .map(|f| {
            let z: f64 = StandardNormal.sample(&mut rng);
            f + scenario.sigma * z
        })
        .collect();
    let data = Dataset::new(obs.to_vec(), ys)?;
    let model = ModelSpec::new(scenario.fit_degree, KernelFamily::SquaredExponential)?;
    let fit = fit_ml(
        &data,
        model,
        &FitOptions {
            restarts: scenario.restarts,
            seed,
            ..FitOptions::default()
        },
    )?;
    let post = GpPosterior::new(&data, &fit.theta)?;
    let (f_hat, _) = post.f_marginals(grid);
    let (df_hat, _) = post.df_marginals(grid)?;
    let tdi = post.tdi_values(grid)?;
    let rates = post.local_eti_rates(grid)?;
    let eti_cum = cumulative_trapezoid(grid, &rates);
    let indicator: Vec<f64> = df_true.iter().map(|d| if *d > 0.0 { 1.0 } else { 0.0 }).collect();
    let crossings: Vec<f64> = count_crossings(&df_true).counts.iter().map(|&c| c as f64).collect();
    Ok(ReplicateMetrics {
        f_resid: integrated_residual(&f_true, &f_hat, grid)?,
        df_resid: integrated_residual(&df_true, &df_hat, grid)?,
        tdi_resid: integrated_residual(&indicator, &tdi, grid)?,
        eti_resid: integrated_residual(&crossings, &eti_cum, grid)?,
        f_l2: squared_l2(&f_true, &f_hat, grid)?,
        df_l2: squared_l2(&df_true, &df_hat, grid)?,
        tdi_l2: squared_l2(&indicator, &tdi, grid)?,
        eti_l2: squared_l2(&crossings, &eti_cum, grid)?,
        eti_total_error: eti_cum.last().copied().unwrap_or(0.0) - crossings.last().copied().unwrap_or(0.0),
        degenerate: fit.at_boundary,
    })
}

fn run_scenario(index: usize, scenario: &Scenario) -> Result<ScenarioResult> {
    scenario.validate()?;
    let equidistant = linspace(0.0, 1.0, scenario.n);
    let shared = match scenario.design {
        Design::Equidistant => Some(Truth::new(&scenario.kernel, &equidistant, &scenario.grid)?),
        Design::Uniform => None,
    };
    let replicates: Vec<Option<ReplicateMetrics>> = (0..scenario.reps)
        .into_par_iter()
        .map(|r| {
            let seed = replicate_seed(scenario.seed, index, r);
            let outcome = match &shared {
                Some(truth) => evaluate_replicate(scenario, &equidistant, truth, seed),
                None => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(2 << 32);
                    let mut obs: Vec<f64> = (0..scenario.n).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
                    obs.sort_by(f64::total_cmp);
                    Truth::new(&scenario.kernel, &obs, &scenario.grid)
                        .and_then(|truth| evaluate_replicate(scenario, &obs, &truth, seed))
                }
            };
            outcome.ok()
        })
        .collect();
    let ok: Vec<&ReplicateMetrics> = replicates.iter().flatten().collect();
    let clean: Vec<&ReplicateMetrics> = ok.iter().copied().filter(|r| !r.degenerate).collect();
    Ok(ScenarioResult {
        n: scenario.n,
        sigma: scenario.sigma,
        reps: scenario.reps,
        failed: scenario.reps - ok.len(),
        degenerate: ok.len() - clean.len(),
        inclusive: Aggregate::from_reps(&ok),
        exclusive: Aggregate::from_reps(&clean),
        replicates,
    })
}

/// Runs every scenario. Replicate `r` of scenario `s` uses a seed derived
/// from `(scenario.seed, s, r)` only, so results do not depend on thread
/// scheduling.
pub fn run_study(scenarios: &[Scenario]) -> Result<StudyResult> {
    if scenarios.is_empty() {
        return Err(Error::InvalidParameter("no scenarios".into()));
    }
    Ok(StudyResult {
        scenarios: scenarios
            .iter()
            .enumerate()
            .map(|(i, s)| run_scenario(i, s))
            .collect::<Result<_>>()?,
    })
}
