mod support;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{fd_partial, random_kernel, relative_error};
use trendgp::kernels::{kernel_gram, kernel_partial};
use trendgp::{Error, KernelFamily, KernelSpec};

fn check_family(family: KernelFamily, max_order: usize, cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let k = random_kernel(&mut rng, family);
        let s: f64 = rng.random_range(-2.0..2.0);
        let mut t: f64 = rng.random_range(-2.0..2.0);
        let h = 1e-3 * k.rho();
        // Matern kernels are only finitely smooth at s = t
        if family != KernelFamily::SquaredExponential && family != KernelFamily::RationalQuadratic {
            while (s - t).abs() < 10.0 * h {
                t = rng.random_range(-2.0..2.0);
            }
        }
        for a in 0..=max_order {
            for b in 0..=max_order {
                let scale = k.variance() / k.rho().powi((a + b) as i32);
                if a < max_order {
                    let exact = kernel_partial(&k, a + 1, b, s, t).unwrap();
                    worst = worst.max(relative_error(exact, fd_partial(&k, a, b, s, t, h, true), scale));
                }
                if b < max_order {
                    let exact = kernel_partial(&k, a, b + 1, s, t).unwrap();
                    worst = worst.max(relative_error(exact, fd_partial(&k, a, b, s, t, h, false), scale));
                }
            }
        }
    }
    worst
}

#[test]
fn partials_match_finite_differences() {
    for (family, order) in [
        (KernelFamily::SquaredExponential, 2),
        (KernelFamily::RationalQuadratic, 2),
        (KernelFamily::Matern52, 2),
        (KernelFamily::Matern32, 1),
    ] {
        let worst = check_family(family, order, 200, 11);
        assert!(worst < 1e-6, "{family}: worst relative error {worst:e}");
    }
}

#[test]
fn m32_has_no_second_derivative() {
    let k = KernelSpec::m32(1.0, 0.5).unwrap();
    assert!(matches!(kernel_partial(&k, 2, 2, 0.0, 0.3), Err(Error::InadmissibleOrder { .. })));
    assert!(kernel_partial(&k, 1, 1, 0.0, 0.3).is_ok());
    let ou = KernelSpec::ou(1.0, 0.5).unwrap();
    assert!(kernel_partial(&ou, 1, 0, 0.0, 0.3).is_err());
}

fn any_kernel() -> impl Strategy<Value = KernelSpec> {
    (0usize..3, 0.2f64..3.0, 0.05f64..2.0, 0.3f64..30.0).prop_map(|(f, a, r, nu)| match f {
        0 => KernelSpec::se(a, r).unwrap(),
        1 => KernelSpec::rq(a, r, nu).unwrap(),
        _ => KernelSpec::m52(a, r).unwrap(),
    })
}

proptest! {
    #[test]
    fn swapping_arguments_swaps_orders(k in any_kernel(), s in -3.0f64..3.0, t in -3.0f64..3.0, a in 0usize..3, b in 0usize..3) {
        let lhs = kernel_partial(&k, a, b, s, t).unwrap();
        let rhs = kernel_partial(&k, b, a, t, s).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * k.variance() / k.rho().powi((a + b) as i32));
    }

    #[test]
    fn stationary_in_the_lag(k in any_kernel(), s in -3.0f64..3.0, t in -3.0f64..3.0, c in -5.0f64..5.0) {
        let v = kernel_partial(&k, 1, 1, s, t).unwrap();
        let w = kernel_partial(&k, 1, 1, s + c, t + c).unwrap();
        prop_assert!((v - w).abs() <= 1e-9 * k.variance() / k.rho().powi(2));
    }

    #[test]
    fn joint_gram_is_positive_semidefinite(k in any_kernel(), ts in prop::collection::vec(-1.0f64..1.0, 1..6)) {
        // covariance of (f, df, d2f) at the points
        let m = ts.len();
        let mut full = nalgebra::DMatrix::zeros(3 * m, 3 * m);
        for a in 0..3 {
            for b in 0..3 {
                let g = kernel_gram(&k, &ts, &ts, a, b).unwrap();
                full.view_mut((a * m, b * m), (m, m)).copy_from(&g);
            }
        }
        let scale = full.diagonal().max();
        let eig = nalgebra::SymmetricEigen::new(full).eigenvalues;
        prop_assert!(eig.min() >= -1e-9 * scale, "min eigenvalue {}", eig.min());
    }
}
