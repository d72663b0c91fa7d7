use gaussbsde_core::measures::{gaussian_kl, gaussian_w2, wasserstein_1d};
use gaussbsde_core::poly::{hermite_to_monomial, hermite_values};
use gaussbsde_core::solver::Regressor;
use gaussbsde_core::theorem_lab::transport_constants;
use gaussbsde_core::wick::wick_product_first_chaos;
use gaussbsde_core::{build_clock, EmpiricalMeasure, GaussianDriverSpec, GaussianLaw1D, Polynomial};
use proptest::prelude::*;

fn atoms(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wasserstein_is_monotone_in_p(a in atoms(12), b in atoms(12)) {
        let (a, b) = (EmpiricalMeasure::new(a).unwrap(), EmpiricalMeasure::new(b).unwrap());
        let w1 = wasserstein_1d(&a, &b, 1.0).unwrap();
        let w2 = wasserstein_1d(&a, &b, 2.0).unwrap();
        let w3 = wasserstein_1d(&a, &b, 3.0).unwrap();
        prop_assert!(w1 <= w2 + 1e-9 && w2 <= w3 + 1e-9);
    }

    #[test]
    fn wasserstein_triangle_inequality(a in atoms(10), b in atoms(10), c in atoms(10), p in 1.0f64..3.0) {
        let (a, b, c) = (
            EmpiricalMeasure::new(a).unwrap(),
            EmpiricalMeasure::new(b).unwrap(),
            EmpiricalMeasure::new(c).unwrap(),
        );
        let ab = wasserstein_1d(&a, &b, p).unwrap();
        let bc = wasserstein_1d(&b, &c, p).unwrap();
        let ac = wasserstein_1d(&a, &c, p).unwrap();
        prop_assert!(ac <= ab + bc + 1e-9);
        prop_assert!((ab - wasserstein_1d(&b, &a, p).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn kl_is_nonnegative_and_vanishes_on_the_diagonal(
        m1 in -5.0f64..5.0, v1 in 0.01f64..10.0, m2 in -5.0f64..5.0, v2 in 0.01f64..10.0
    ) {
        let (a, b) = (GaussianLaw1D::new(m1, v1).unwrap(), GaussianLaw1D::new(m2, v2).unwrap());
        prop_assert!(gaussian_kl(&a, &b).unwrap() >= 0.0);
        prop_assert!(gaussian_kl(&a, &a).unwrap().abs() < 1e-12);
        prop_assert!((gaussian_w2(&a, &b) - gaussian_w2(&b, &a)).abs() < 1e-12);
    }

    #[test]
    fn inequality_constants_are_monotone(
        lg in 0.0f64..3.0, lf in 0.0f64..2.0, dlg in 0.0f64..1.0, dlf in 0.0f64..1.0,
        horizon in 0.2f64..2.0, dh in 0.0f64..1.0, frac in 0.0f64..1.0, p in 1.0f64..3.0
    ) {
        let clock = build_clock(&GaussianDriverSpec::brownian(horizon), 33).unwrap();
        let longer = build_clock(&GaussianDriverSpec::brownian(horizon + dh), 33).unwrap();
        let t = frac * horizon;
        let base = transport_constants(lg, lf, &clock, t, p).unwrap();
        let up_g = transport_constants(lg + dlg, lf, &clock, t, p).unwrap();
        let up_f = transport_constants(lg, lf + dlf, &clock, t, p).unwrap();
        let up_t = transport_constants(lg, lf, &longer, t, p).unwrap();
        for other in [up_g, up_f, up_t] {
            prop_assert!(other.c_tr_y >= base.c_tr_y * (1.0 - 1e-12));
            prop_assert!(other.c_ls_y >= base.c_ls_y * (1.0 - 1e-12));
            prop_assert!(other.c_tr_z_limit >= base.c_tr_z_limit * (1.0 - 1e-12));
        }
        prop_assert!(base.c_tr_y >= 0.0 && base.c_ls_y >= 0.0 && base.c_tr_z >= base.c_tr_z_limit);
        let at_end = transport_constants(lg, lf, &clock, horizon, p).unwrap();
        prop_assert!((at_end.c_tr_y - 2.0 * lg * lg).abs() <= 1e-12 * (1.0 + lg * lg));
    }

    #[test]
    fn clock_round_trip(hurst in 0.05f64..0.95, frac in 0.0f64..1.0) {
        let clock = build_clock(&GaussianDriverSpec::fbm(hurst, 1.0), 129).unwrap();
        let t = frac;
        let back = clock.invert(clock.value(t).unwrap()).unwrap();
        prop_assert!((back - t).abs() < 1e-9);
    }

    #[test]
    fn hermite_conversion_matches_direct_evaluation(
        coeffs in prop::collection::vec(-3.0f64..3.0, 1..6), scale in 0.2f64..3.0, x in -4.0f64..4.0
    ) {
        let poly = hermite_to_monomial(&coeffs, scale);
        let mut he = vec![0.0; coeffs.len()];
        hermite_values(x / scale, coeffs.len() - 1, &mut he);
        let direct: f64 = coeffs.iter().zip(&he).map(|(c, h)| c * h).sum();
        prop_assert!((poly.eval(x) - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
    }

    #[test]
    fn wick_product_with_constant_is_ordinary(c in -5.0f64..5.0, xs in atoms(6), dxs in atoms(6)) {
        prop_assume!(dxs.iter().any(|&d| d != dxs[0]));
        let out = wick_product_first_chaos(&Polynomial::constant(c), &xs, &dxs, 0.3, 0.1).unwrap();
        for (o, d) in out.iter().zip(&dxs) {
            prop_assert_eq!(*o, c * d);
        }
    }

    #[test]
    fn regression_reproduces_affine_targets(a in -5.0f64..5.0, b in -5.0f64..5.0, xs in prop::collection::vec(-3.0f64..3.0, 60..120)) {
        let spread = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - xs.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assume!(spread > 1.0);
        let ys: Vec<f64> = xs.iter().map(|x| a + b * x).collect();
        let fit = Regressor::new(1, 0.0).fit(&xs, &ys, 1.0).unwrap();
        prop_assert!((fit.coeff(0) - a).abs() < 1e-8 && (fit.coeff(1) - b).abs() < 1e-8);
    }
}
