use levyrate::ratesearch::{a_of, b_of};
use levyrate::waterfill::{f_of_alpha, solve_lambda_alpha, x_of, xi};
use levyrate::{
    ytilde_lst, Backend, Constants, Curve, Exponent, Jumps, Policy, Workload,
};
use proptest::prelude::*;

fn continuous_law() -> impl Strategy<Value = Workload> {
    prop_oneof![
        (0.3f64..4.0).prop_map(|rate| Workload::Exponential { rate }),
        (0.0f64..1.0, 0.1f64..2.0).prop_map(|(lo, w)| Workload::Uniform { lo, hi: lo + w }),
    ]
}

fn jump_law() -> impl Strategy<Value = Jumps> {
    prop_oneof![
        (0.5f64..4.0).prop_map(|rate| Jumps::Exponential { rate }),
        (0.0f64..1.0, 0.1f64..2.0).prop_map(|(lo, w)| Jumps::Uniform { lo, hi: lo + w }),
        (0.1f64..2.0).prop_map(|size| Jumps::Deterministic { size }),
    ]
}

fn constants() -> impl Strategy<Value = Constants> {
    (0.3f64..2.0, 0.3f64..2.0, 0.5f64..3.0, 0.0f64..3.0, 0.5f64..4.0, 0.1f64..6.0).prop_map(
        |(mu, rho, h, k2, k3, star)| Constants::direct(k2 * k3 + star * k3 * h, k2, k3, mu, rho, h, Some(rho + 1.0)).unwrap(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eta_is_concave_and_below_linear(drift in 0.0f64..1.0, rate in 0.1f64..3.0, jumps in jump_law(), a in 0.01f64..5.0, b in 0.01f64..5.0) {
        let e = Exponent::new(drift, Some(levyrate::CompoundPoisson { rate, dist: jumps })).unwrap();
        let mid = e.eta(0.5 * (a + b));
        prop_assert!(mid >= 0.5 * (e.eta(a) + e.eta(b)) - 1e-12);
        prop_assert!(e.eta(a) <= e.rho() * a + 1e-12);
        prop_assert!(e.eta(a) >= drift * a - 1e-12);
    }

    #[test]
    fn budget_round_trip(v in continuous_law(), lam_off in 0.01f64..3.0, mr in 0.2f64..2.0) {
        let lam = v.ess_inf() / 2.0 + lam_off;
        let alpha = xi(&v, lam, mr, None);
        let back = solve_lambda_alpha(&v, alpha, mr, None).unwrap();
        prop_assert!((back - lam).abs() <= 1e-7 * lam.max(1.0), "{lam} -> {alpha} -> {back}");
    }

    #[test]
    fn allocation_is_bounded(v in 0.0f64..10.0, lam in 0.0f64..5.0, mr in 0.05f64..3.0, alpha in 0.0f64..3.0) {
        let x = x_of(v, lam, mr);
        prop_assert!(x >= 0.0);
        prop_assert!(x <= lam * lam / (4.0 * mr) * (1.0 + 1e-15));
        prop_assert!(x <= lam * lam / mr);
        let u = Workload::Uniform { lo: 0.0, hi: 1.0 };
        prop_assert!(f_of_alpha(&u, alpha, mr, None).unwrap().f_value.is_finite());
    }

    #[test]
    fn phase1_value_is_convex(a1 in 0.0f64..1.0, a2 in 0.0f64..1.0) {
        let v = Workload::Uniform { lo: 0.0, hi: 1.0 };
        let f = |a: f64| f_of_alpha(&v, a, 0.5, None).unwrap().f_value;
        prop_assert!(f(0.5 * (a1 + a2)) <= 0.5 * (f(a1) + f(a2)) + 1e-10);
    }

    #[test]
    fn closed_forms_match_quadrature(v in continuous_law(), lam in 0.0f64..5.0) {
        let cf = Backend::natural(&v);
        for (x, y) in [
            (a_of(&v, lam, cf).unwrap(), a_of(&v, lam, Backend::Quadrature).unwrap()),
            (b_of(&v, lam, cf).unwrap(), b_of(&v, lam, Backend::Quadrature).unwrap()),
        ] {
            prop_assert!((x - y).abs() <= 1e-8 * y.abs().max(1e-12), "{x} vs {y}");
        }
    }

    #[test]
    fn g_is_unimodal_on_its_bracket(c in constants(), v in continuous_law()) {
        let curve = Curve::with_natural_backend(c, v).unwrap();
        let star = curve.lambda_star();
        let vals: Vec<f64> = (0..=400).map(|i| curve.value(star * i as f64 / 400.0)).collect();
        let scale = vals.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let tol = 1e-12 * scale;
        let mut rising = false;
        for w in vals.windows(2) {
            if w[1] > w[0] + tol {
                rising = true;
            } else if rising {
                prop_assert!(w[1] >= w[0] - tol, "G falls again after rising");
            }
        }
        let numer: Vec<f64> = (0..=100).map(|i| curve.density_numerator(star * i as f64 / 100.0)).collect();
        prop_assert!(numer.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0)));
    }

    #[test]
    fn minimizer_within_bracket(c in constants(), v in continuous_law()) {
        let curve = Curve::with_natural_backend(c, v).unwrap();
        let res = curve.minimize();
        prop_assert!(res.lambda_min >= 0.0 && res.lambda_min <= curve.lambda_star());
        prop_assert!(res.g_min <= curve.value(0.0) + 1e-12);
        prop_assert!(res.g_min <= curve.value(curve.lambda_star()) + 1e-12);
    }

    #[test]
    fn water_fill_rate_is_monotone(lambda in 0.0f64..5.0, mu_rho in 0.1f64..3.0, rho in 0.2f64..2.0, head in prop::option::of(0.1f64..3.0), floor in prop::option::of(0.01f64..1.0)) {
        let r = head.map(|x| rho + x);
        let r_min = match (floor, r) {
            (Some(f), Some(r)) => Some(rho + f * (r - rho)),
            (Some(f), None) => Some(rho + f),
            _ => None,
        };
        let p = Policy::WaterFill { lambda, mu_rho, r, r_min };
        let rates: Vec<f64> = (0..200).map(|i| p.rate(0.05 * i as f64, rho)).collect();
        prop_assert!(rates.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(rates.iter().all(|&x| x > rho));
        if let Some(r) = r {
            prop_assert!(rates.iter().all(|&x| x <= r * (1.0 + 1e-15)));
        }
        if let Some(m) = r_min {
            prop_assert!(rates.iter().all(|&x| x >= m * (1.0 - 1e-15)));
        }
    }

    #[test]
    fn on_period_transform_is_a_transform(v in continuous_law(), slope in 0.2f64..3.0, a in 0.01f64..4.0) {
        let e = Exponent::compound_poisson(1.0, Jumps::Exponential { rate: 2.0 }).unwrap();
        let p = Policy::Constant { rate: e.rho() + slope };
        let l1 = ytilde_lst(&e, &v, &p, a).unwrap();
        let l2 = ytilde_lst(&e, &v, &p, 2.0 * a).unwrap();
        prop_assert!(l1 > 0.0 && l1 <= 1.0);
        prop_assert!(l2 <= l1 + 1e-12);
        // log-convexity of a transform: L(a)^2 <= L(0) L(2a)
        prop_assert!(l1 * l1 <= l2 + 1e-12);
    }
}
