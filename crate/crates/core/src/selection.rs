//! Cross-validated choice of mean degree and kernel family.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimation::{fit_ml, FitOptions, ModelSpec};
use crate::kernels::KernelFamily;
use crate::posterior::{GpPosterior, Hyperparams};

/// Candidate models: every mean degree combined with every kernel family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateGrid {
    degrees: Vec<usize>,
    families: Vec<KernelFamily>,
}

impl CandidateGrid {
    pub fn new(degrees: Vec<usize>, families: Vec<KernelFamily>) -> Result<Self> {
        if degrees.is_empty() || families.is_empty() {
            return Err(Error::InvalidParameter("candidate grid is empty".into()));
        }
        if let Some(d) = degrees.iter().find(|&&d| d > 2) {
            return Err(Error::InvalidParameter(format!("mean degree {d} is above 2")));
        }
        if families.contains(&KernelFamily::OrnsteinUhlenbeck) {
            return Err(Error::InvalidParameter(
                "the OU kernel has no trend process and cannot be a candidate".into(),
            ));
        }
        Ok(CandidateGrid { degrees, families })
    }

    pub fn candidates(&self) -> Vec<ModelSpec> {
        self.degrees
            .iter()
            .flat_map(|&d| {
                self.families.iter().map(move |&family| ModelSpec {
                    degree: Some(d),
                    family,
                })
            })
            .collect()
    }
}

impl Default for CandidateGrid {
    /// Degrees 0 to 2 with SE, RQ, M52 and M32: twelve candidates.
    fn default() -> Self {
        CandidateGrid {
            degrees: vec![0, 1, 2],
            families: KernelFamily::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "scheme")]
pub enum CvScheme {
    Loo,
    /// One-step-ahead prediction after at least `min_train` points.
    Osa { min_train: usize },
}

#[derive(Debug, Clone, Default)]
pub struct CvOptions {
    pub fit: FitOptions,
    /// Use these hyper-parameters in every fold instead of refitting.
    pub fixed: Option<Hyperparams>,
}

fn fold_prediction(train: &Dataset, candidate: ModelSpec, t: f64, opts: &CvOptions) -> Result<f64> {
    let theta = match &opts.fixed {
        Some(theta) => theta.clone(),
        None => fit_ml(train, candidate, &opts.fit)?.theta,
    };
    let post = GpPosterior::new(train, &theta)?;
    Ok(post.f_marginals(&[t]).0[0])
}

/// Leave-one-out prediction residuals `y_i - E[f(t_i) | data without i]`.
pub fn loo_residuals(data: &Dataset, candidate: ModelSpec, opts: &CvOptions) -> Result<Vec<f64>> {
    let n = data.len();
    if n < 4 {
        return Err(Error::InvalidData(format!("leave-one-out needs n >= 4, got {n}")));
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let pred = fold_prediction(&data.without(i), candidate, data.ts()[i], opts)?;
            Ok(data.ys()[i] - pred)
        })
        .collect()
}

/// One-step-ahead residuals: for `k = min_train .. n-1`, fit on the first
/// `k` points and predict point `k + 1`.
pub fn osa_residuals(data: &Dataset, candidate: ModelSpec, min_train: usize, opts: &CvOptions) -> Result<Vec<f64>> {
    let n = data.len();
    if min_train < 3 || n <= min_train {
        return Err(Error::InvalidData(format!(
            "one-step-ahead needs n > min_train >= 3 (n = {n}, min_train = {min_train})"
        )));
    }
    (min_train..n)
        .into_par_iter()
        .map(|k| {
            let pred = fold_prediction(&data.head(k), candidate, data.ts()[k], opts)?;
            Ok(data.ys()[k] - pred)
        })
        .collect()
}

fn mean_square(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64
}

/// Leave-one-out mean squared error of prediction.
pub fn loo_mspe(data: &Dataset, candidate: ModelSpec, opts: &CvOptions) -> Result<f64> {
    Ok(mean_square(&loo_residuals(data, candidate, opts)?))
}

/// One-step-ahead mean squared error of prediction.
pub fn osa_mspe(data: &Dataset, candidate: ModelSpec, min_train: usize, opts: &CvOptions) -> Result<f64> {
    Ok(mean_square(&osa_residuals(data, candidate, min_train, opts)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreRow {
    /// Model that was scored; SE when RQ collapsed onto it.
    pub model: ModelSpec,
    /// Candidates represented by this row. More than one entry (or an entry
    /// differing from `model`) marks an RQ to SE substitution.
    pub requested: Vec<ModelSpec>,
    pub n_params: usize,
    pub mspe: Option<f64>,
    pub error: Option<String>,
}

impl ScoreRow {
    pub fn substituted(&self) -> bool {
        self.requested.iter().any(|m| *m != self.model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub scheme: CvScheme,
    pub rows: Vec<ScoreRow>,
    /// Index into `rows`.
    pub winner: usize,
}

impl Selection {
    pub fn winning_model(&self) -> ModelSpec {
        self.rows[self.winner].model
    }
}

fn better(a: &ScoreRow, b: &ScoreRow) -> bool {
    let (sa, sb) = (a.mspe.unwrap_or(f64::INFINITY), b.mspe.unwrap_or(f64::INFINITY));
    let tol = 1e-12 * sa.abs().max(sb.abs());
    if (sa - sb).abs() > tol {
        return sa < sb;
    }
    let key = |r: &ScoreRow| (r.n_params, r.model.family.complexity_rank(), r.model.degree);
    key(a) < key(b)
}

/// Scores every candidate by cross-validation and picks the smallest MSPE,
/// breaking ties towards fewer parameters and then simpler kernels
/// (SE < M52 < M32 < RQ).
///
/// Each candidate is first fitted to the full data. RQ candidates whose `nu`
/// diverges are scored as SE and merged with the matching SE row. Fold fits
/// start from the full-data optimum in addition to `opts.fit.restarts - 1`
/// random points.
pub fn select_model(data: &Dataset, grid: &CandidateGrid, scheme: CvScheme, opts: &CvOptions) -> Result<Selection> {
    let mut rows: Vec<ScoreRow> = Vec::new();
    let mut warm: Vec<Option<Hyperparams>> = Vec::new();
    for candidate in grid.candidates() {
        let full = fit_ml(data, candidate, &opts.fit);
        let (model, theta, error) = match full {
            Ok(f) => (f.model, Some(f.theta), None),
            Err(e) => (candidate, None, Some(e.to_string())),
        };
        match rows.iter_mut().find(|r| r.model == model && r.error.is_none() && error.is_none()) {
            Some(row) => row.requested.push(candidate),
            None => {
                rows.push(ScoreRow {
                    model,
                    requested: vec![candidate],
                    n_params: model.n_params(),
                    mspe: None,
                    error,
                });
                warm.push(theta);
            }
        }
    }
    let scores: Vec<Result<f64>> = rows
        .par_iter()
        .zip(&warm)
        .map(|(row, theta)| {
            if let Some(e) = &row.error {
                return Err(Error::FitFailed(e.clone()));
            }
            let fold_opts = CvOptions {
                fit: FitOptions {
                    warm_starts: theta.iter().cloned().collect(),
                    ..opts.fit.clone()
                },
                fixed: opts.fixed.clone(),
            };
            match scheme {
                CvScheme::Loo => loo_mspe(data, row.model, &fold_opts),
                CvScheme::Osa { min_train } => osa_mspe(data, row.model, min_train, &fold_opts),
            }
        })
        .collect();
    for (row, score) in rows.iter_mut().zip(scores) {
        match score {
            Ok(s) => row.mspe = Some(s),
            Err(e) => {
                if row.error.is_none() {
                    row.error = Some(e.to_string());
                }
            }
        }
    }
    let winner = (0..rows.len())
        .filter(|&i| rows[i].mspe.is_some())
        .reduce(|best, i| if better(&rows[i], &rows[best]) { i } else { best })
        .ok_or_else(|| Error::FitFailed("every candidate model failed".into()))?;
    Ok(Selection { scheme, rows, winner })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{KernelSpec, MeanSpec};
    use nalgebra::{DMatrix, DVector};

    fn opts() -> CvOptions {
        CvOptions {
            fit: FitOptions {
                restarts: 4,
                ..FitOptions::default()
            },
            fixed: None,
        }
    }

    #[test]
    fn grid_rules() {
        assert_eq!(CandidateGrid::default().candidates().len(), 12);
        assert!(CandidateGrid::new(vec![], vec![KernelFamily::SquaredExponential]).is_err());
        assert!(CandidateGrid::new(vec![0], vec![KernelFamily::OrnsteinUhlenbeck]).is_err());
        assert!(CandidateGrid::new(vec![3], vec![KernelFamily::SquaredExponential]).is_err());
    }

    #[test]
    fn fixed_theta_matches_hand_solve() {
        let d = Dataset::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.3, 1.1, 0.4, -0.2]).unwrap();
        let k = KernelSpec::se(1.0, 1.0).unwrap();
        let theta = Hyperparams::new(MeanSpec::constant(0.1), k, 0.2).unwrap();
        let cv = CvOptions {
            fit: FitOptions::default(),
            fixed: Some(theta),
        };
        let model = ModelSpec::new(Some(0), KernelFamily::SquaredExponential).unwrap();
        let r = loo_residuals(&d, model, &cv).unwrap();
        for i in 0..4 {
            let idx: Vec<usize> = (0..4).filter(|&j| j != i).collect();
            let c = |a: f64, b: f64| (-(a - b) * (a - b) / 2.0).exp();
            let kmat = DMatrix::from_fn(3, 3, |a, b| {
                c(d.ts()[idx[a]], d.ts()[idx[b]]) + if a == b { 0.04 } else { 0.0 }
            });
            let kvec = DVector::from_fn(3, |a, _| c(d.ts()[i], d.ts()[idx[a]]));
            let y = DVector::from_fn(3, |a, _| d.ys()[idx[a]] - 0.1);
            let pred = 0.1 + kvec.dot(&kmat.lu().solve(&y).unwrap());
            assert!((r[i] - (d.ys()[i] - pred)).abs() < 1e-12);
        }
    }

    #[test]
    fn osa_counts_and_last_fold() {
        let ts: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let ys: Vec<f64> = ts.iter().map(|t| (0.7 * t).sin()).collect();
        let d = Dataset::new(ts, ys).unwrap();
        let model = ModelSpec::new(Some(0), KernelFamily::Matern52).unwrap();
        assert_eq!(osa_residuals(&d, model, 4, &opts()).unwrap().len(), 4);
        let last = osa_mspe(&d, model, 7, &opts()).unwrap();
        let fit = fit_ml(&d.head(7), model, &opts().fit).unwrap();
        let pred = GpPosterior::new(&d.head(7), &fit.theta).unwrap().f_marginals(&[7.0]).0[0];
        assert!((last - (d.ys()[7] - pred).powi(2)).abs() < 1e-12);
        assert!(osa_residuals(&d, model, 8, &opts()).is_err());
        assert!(osa_residuals(&d, model, 2, &opts()).is_err());
    }

    #[test]
    fn constant_data_constant_mean() {
        let d = Dataset::new((0..6).map(|i| i as f64).collect(), vec![2.5; 6]).unwrap();
        let model = ModelSpec::new(Some(0), KernelFamily::SquaredExponential).unwrap();
        assert!(loo_mspe(&d, model, &opts()).unwrap() < 1e-12);
    }

    #[test]
    fn single_candidate_wins() {
        let d = Dataset::new((0..6).map(|i| i as f64).collect(), vec![0.1, 0.5, 0.2, 0.9, 0.7, 1.0]).unwrap();
        let grid = CandidateGrid::new(vec![1], vec![KernelFamily::Matern52]).unwrap();
        let s = select_model(&d, &grid, CvScheme::Loo, &opts()).unwrap();
        assert_eq!(s.rows.len(), 1);
        assert_eq!(s.winner, 0);
    }

    #[test]
    fn ties_prefer_simpler() {
        let row = |family, degree, mspe| ScoreRow {
            model: ModelSpec { degree, family },
            requested: vec![],
            n_params: ModelSpec { degree, family }.n_params(),
            mspe: Some(mspe),
            error: None,
        };
        let se = row(KernelFamily::SquaredExponential, Some(0), 1.0);
        let m52 = row(KernelFamily::Matern52, Some(0), 1.0);
        let rq = row(KernelFamily::RationalQuadratic, Some(0), 1.0);
        assert!(better(&se, &m52));
        assert!(better(&m52, &rq));
        assert!(better(&row(KernelFamily::RationalQuadratic, Some(0), 0.5), &se));
    }
}
