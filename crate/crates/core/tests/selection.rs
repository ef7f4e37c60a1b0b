use trendgp::estimation::{FitOptions, ModelSpec};
use trendgp::selection::{loo_mspe, osa_mspe, select_model, CandidateGrid, CvOptions, CvScheme};
use trendgp::simulation::simulate_gp;
use trendgp::stats::linspace;
use trendgp::{Dataset, Hyperparams, KernelFamily, KernelSpec, MeanSpec};

fn opts() -> CvOptions {
    CvOptions {
        fit: FitOptions { restarts: 4, ..FitOptions::default() },
        fixed: None,
    }
}

fn linear_data() -> Dataset {
    let ts: Vec<f64> = (0..15).map(|i| i as f64 / 14.0).collect();
    let ys = ts.iter().map(|t| 0.5 + 2.0 * t).collect();
    Dataset::new(ts, ys).unwrap()
}

#[test]
fn linear_mean_wins_on_noise_free_lines() {
    let data = linear_data();
    let linear = ModelSpec::new(Some(1), KernelFamily::SquaredExponential).unwrap();
    let mspe = osa_mspe(&data, linear, 5, &opts()).unwrap();
    assert!(mspe < 1e-8, "{mspe}");
    let grid = CandidateGrid::new(vec![0, 1, 2], vec![KernelFamily::SquaredExponential, KernelFamily::Matern52]).unwrap();
    let sel = select_model(&data, &grid, CvScheme::Osa { min_train: 5 }, &opts()).unwrap();
    assert_eq!(sel.winning_model().degree, Some(1), "{:?}", sel.rows);
}

#[test]
fn loo_ignores_row_order() {
    let ts: Vec<f64> = (0..10).map(|i| i as f64 / 9.0).collect();
    let ys: Vec<f64> = ts.iter().map(|t| (4.0 * t).sin() + 0.1 * (37.0 * t).cos()).collect();
    let data = Dataset::new(ts.clone(), ys.clone()).unwrap();
    let order = [7, 2, 9, 0, 4, 1, 8, 3, 6, 5];
    let shuffled = Dataset::from_unsorted(order.iter().map(|&i| (ts[i], ys[i])).collect()).unwrap();
    let model = ModelSpec::new(Some(0), KernelFamily::Matern52).unwrap();
    let a = loo_mspe(&data, model, &opts()).unwrap();
    let b = loo_mspe(&shuffled, model, &opts()).unwrap();
    assert!((a - b).abs() <= 1e-10 * a.max(1e-12), "{a} vs {b}");
}

#[test]
fn divergent_rq_is_reported_as_se() {
    // a squared-exponential draw: the RQ fit drives nu far past the threshold
    let truth = Hyperparams::new(MeanSpec::zero(), KernelSpec::se(1.0, 0.3).unwrap(), 0.0).unwrap();
    let ts = linspace(0.0, 1.0, 30);
    let (f, _) = simulate_gp(&truth, &ts, 3).unwrap();
    let data = Dataset::new(ts, f).unwrap();
    let mut o = opts();
    o.fit.nu_divergence = 100.0;
    let grid = CandidateGrid::new(vec![0], vec![KernelFamily::SquaredExponential, KernelFamily::RationalQuadratic]).unwrap();
    let sel = select_model(&data, &grid, CvScheme::Loo, &o).unwrap();
    assert_eq!(sel.rows.len(), 1);
    let merged = &sel.rows[0];
    assert!(merged.substituted());
    assert_eq!(merged.model.family, KernelFamily::SquaredExponential);
    assert_eq!(merged.requested.len(), 2);
}
