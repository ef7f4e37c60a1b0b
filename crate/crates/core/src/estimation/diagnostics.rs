use super::McmcSamples;
use crate::error::{Error, Result};
use crate::stats::{mean, variance};

const MIN_DRAWS: usize = 100;

/// Split potential scale reduction factor of one parameter.
pub fn rhat(samples: &McmcSamples, param: &str) -> Result<f64> {
    rhat_chains(&samples.param_chains(param)?)
}

/// Split-R-hat of raw chains: every chain is cut into two halves and the
/// between/within variance ratio is taken over the halves. Chains that are
/// all the same constant give 1.
pub fn rhat_chains(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::InsufficientDraws(format!(
            "split R-hat needs at least 2 chains, got {}",
            chains.len()
        )));
    }
    let n_min = chains.iter().map(Vec::len).min().unwrap_or(0);
    if n_min < MIN_DRAWS {
        return Err(Error::InsufficientDraws(format!(
            "split R-hat needs at least {MIN_DRAWS} draws per chain, got {n_min}"
        )));
    }
    let half = n_min / 2;
    let mut pieces: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let c = &c[..n_min];
        pieces.push(&c[..half]);
        pieces.push(&c[n_min - half..]);
    }
    let m = pieces.len() as f64;
    let n = half as f64;
    let means: Vec<f64> = pieces.iter().map(|p| mean(p)).collect();
    let w = pieces.iter().map(|p| variance(p)).sum::<f64>() / m;
    let b = n * variance(&means);
    if w == 0.0 {
        return Ok(if b == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    Ok((var_plus / w).sqrt())
}

/// Effective sample size over all chains from the combined autocorrelation,
/// truncated by Geyer's initial positive sequence.
pub fn ess(chains: &[Vec<f64>]) -> f64 {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    let m = chains.len();
    if m == 0 || n < 4 {
        return (m * n) as f64;
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let autocov = |c: &[f64], mu: f64, lag: usize| -> f64 {
        c.iter()
            .zip(&c[lag..])
            .map(|(a, b)| (a - mu) * (b - mu))
            .sum::<f64>()
            / n as f64
    };
    let w = chains.iter().map(|c| variance(c)).sum::<f64>() / m as f64;
    let b_over_n = if m > 1 { variance(&means) } else { 0.0 };
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b_over_n;
    if var_plus <= 0.0 {
        return (m * n) as f64;
    }
    let rho = |lag: usize| -> f64 {
        let acov = chains
            .iter()
            .zip(&means)
            .map(|(c, mu)| autocov(c, *mu, lag))
            .sum::<f64>()
            / m as f64;
        1.0 - (w - acov) / var_plus
    };
    let mut tau = -1.0;
    let mut lag = 0;
    let mut prev_pair = f64::INFINITY;
    while lag + 1 < n {
        let pair = rho(lag) + rho(lag + 1);
        if pair <= 0.0 {
            break;
        }
        // monotone sequence estimator
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        lag += 2;
    }
    let total = (m * n) as f64;
    // antithetic chains can push tau below 1; cap as Stan does
    total / tau.max(1.0 / total.log10())
}
