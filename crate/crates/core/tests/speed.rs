use gmcf_core::profile::IntegratorOptions;
use gmcf_core::speed::{
    admissibility, boundary_slope, bracket_speed, find_speed, find_speed_for_radius,
    translating_solution, Route, SpeedCase, SpeedOptions,
};
use gmcf_core::{Error, FlowParams, Slope};
use proptest::prelude::*;

fn p(n: u32, alpha: f64, b: f64, k: Slope) -> FlowParams {
    FlowParams::new(n, alpha, b).unwrap().with_k(k)
}

fn fin(k: f64) -> Slope {
    Slope::Finite(k)
}

#[test]
fn admissibility_examples() {
    assert_eq!(admissibility(&p(2, 1.0, 0.0, fin(1.0))), Ok(SpeedCase::A));
    assert_eq!(admissibility(&p(2, 1.0, -1.0, fin(1.0))), Ok(SpeedCase::B));
    assert!(admissibility(&p(2, 1.0, -8.0, fin(1.0))).is_err());
    assert_eq!(admissibility(&p(2, 1.0, 3.0, fin(2.0))), Ok(SpeedCase::C));
    let odd = FlowParams::odd(3, 1, 3, 1.0).unwrap().with_k(fin(-1.0));
    let why = admissibility(&odd).unwrap_err();
    assert!(why.reason.contains("b^(1/alpha)"), "{why}");
    let odd = FlowParams::odd(2, 1, 3, 3.0).unwrap().with_k(fin(-1.0));
    assert_eq!(admissibility(&odd), Ok(SpeedCase::D));
    // Negative slopes need an odd power.
    assert!(admissibility(&p(2, 1.0, 3.0, fin(-1.0))).is_err());
    assert_eq!(
        admissibility(&p(2, 1.0, 3.0, fin(0.0))),
        Ok(SpeedCase::Flat)
    );
    assert!(admissibility(&p(2, 2.0, 3.0, fin(0.0))).is_err());
}

#[test]
fn infinite_slope_needs_the_floor_below_one() {
    assert_eq!(
        admissibility(&p(2, 1.0, -1.0, Slope::PosInfinity)),
        Ok(SpeedCase::B)
    );
    assert_eq!(
        admissibility(&p(2, 1.0, -1.5, Slope::PosInfinity)),
        Ok(SpeedCase::B)
    );
    // (N-1)(-b)^(-1/alpha) = 2 > 1: R_inf = 1 is out of reach.
    let why = admissibility(&p(2, 1.0, -0.5, Slope::PosInfinity)).unwrap_err();
    assert!(why.reason.contains("N-1"), "{why}");
    assert!(admissibility(&p(2, 1.0, -2.0, Slope::PosInfinity)).is_err());
    assert!(matches!(
        find_speed(
            &p(2, 1.0, -0.5, Slope::PosInfinity),
            &SpeedOptions::default()
        ),
        Err(Error::Regime(_))
    ));
}

#[test]
fn bracket_examples() {
    let o = SpeedOptions::default();
    let (lo, hi) = bracket_speed(&p(2, 1.0, 0.0, fin(1.0)), &o).unwrap();
    assert_eq!(lo, 0.0);
    assert!((hi - 2.0 * 2f64.sqrt()).abs() < 1e-15);
    let (lo, hi) = bracket_speed(&p(2, 1.0, 3.0, fin(2.0)), &o).unwrap();
    assert_eq!(lo, 3.0);
    assert!((hi - 5.0 * 5f64.sqrt()).abs() < 1e-14);
}

#[test]
fn bracket_ends_have_opposite_signs() {
    let o = SpeedOptions::default();
    for params in [
        p(2, 1.0, 0.0, fin(1.0)),
        p(3, 2.0, -1.0, fin(2.0)),
        p(2, 1.0, 3.0, fin(1.0)),
        FlowParams::odd(2, 1, 3, 3.0).unwrap().with_k(fin(-1.0)),
    ] {
        let k = params.k.unwrap().finite().unwrap();
        let (lo, hi) = bracket_speed(&params, &o).unwrap();
        let at = |c: f64| boundary_slope(&params, c, Route::Zeta, &o.integrator).unwrap() - k;
        let lo_val = match (lo == 0.0, k > 0.0) {
            (true, true) => -k,
            (true, false) => f64::NEG_INFINITY,
            _ => at(lo),
        };
        assert!(lo_val < 0.0 && at(hi) > 0.0, "{params:?}");
    }
}

#[test]
fn small_slope_speeds_approach_zero_and_forcing() {
    let o = SpeedOptions::default();
    let c = find_speed(&p(2, 1.0, 0.0, fin(1e-3)), &o).unwrap().c_tilde;
    assert!(c > 0.0 && c < 1e-2, "{c}");
    let mut last = f64::INFINITY;
    for k in [1e-1, 1e-2, 1e-3] {
        let c = find_speed(&p(2, 1.0, 3.0, fin(k)), &o).unwrap().c_tilde;
        assert!(c > 3.0 && c - 3.0 < last, "k = {k}: {c}");
        last = c - 3.0;
    }
}

#[test]
fn result_invariants() {
    let o = SpeedOptions::default();
    let k = 1.0;
    let r = find_speed(&p(2, 1.0, 0.0, fin(k)), &o).unwrap();
    assert!(r.c_tilde > 0.0 && r.c_tilde < 2.0 * 2f64.sqrt());
    assert!(r.residual.abs() <= 1e-8);
    let widths: Vec<f64> = r.bracket_history.iter().map(|s| s.c_hi - s.c_lo).collect();
    assert!(widths.windows(2).all(|w| w[1] < w[0]), "{widths:?}");
    let r = find_speed(&p(2, 1.0, 3.0, fin(k)), &o).unwrap();
    assert_eq!(r.case, SpeedCase::C);
    assert!(r.c_tilde > 3.0 && r.c_tilde < 5.0 * 2f64.sqrt());
}

#[test]
fn speed_at_the_floor() {
    // b = -1, N = 2 puts the R_inf floor exactly at 1; c~ is where R_inf first reaches it.
    let r = find_speed(
        &p(2, 1.0, -1.0, Slope::PosInfinity),
        &SpeedOptions::default(),
    )
    .unwrap();
    assert!((r.c_tilde - 2.18229737).abs() < 1e-7, "{}", r.c_tilde);
    assert!(r.residual.abs() < 1e-8);
    let c =
        find_speed_for_radius(&p(2, 1.0, -1.0, fin(1.0)), 1.0, &SpeedOptions::default()).unwrap();
    assert!((c - r.c_tilde).abs() < 1e-7 * c);
}

#[test]
fn radius_examples() {
    let o = SpeedOptions::default();
    let b_neg = FlowParams::new(2, 1.0, -1.0).unwrap();
    let c = find_speed_for_radius(&b_neg, 1.999, &o).unwrap();
    assert!(c > 0.0 && c < 1e-2, "{c}");
    let c2 = find_speed_for_radius(&b_neg, 1.5, &o).unwrap();
    assert!(c2 > c);
    assert!(matches!(
        find_speed_for_radius(&b_neg, 0.9, &o),
        Err(Error::Domain(_))
    ));
    assert!(matches!(
        find_speed_for_radius(&b_neg, 2.0, &o),
        Err(Error::Domain(_))
    ));

    let odd = FlowParams::odd(2, 1, 3, 1.0).unwrap();
    let c = find_speed_for_radius(&odd, 2.001, &o).unwrap();
    assert!(c > 0.0 && c < 1e-2, "{c}");
    assert!(matches!(
        find_speed_for_radius(&odd, 1.9, &o),
        Err(Error::Domain(_))
    ));
    assert!(matches!(
        find_speed_for_radius(&FlowParams::new(2, 1.0, 0.0).unwrap(), 1.0, &o),
        Err(Error::Domain(_))
    ));
}

#[test]
fn translating_solution_examples() {
    let o = SpeedOptions::default();
    let (c, prof) = translating_solution(&p(2, 1.0, 3.0, fin(0.0)), &o).unwrap();
    assert_eq!(c, 3.0);
    assert!(prof.phi.iter().all(|v| *v == 0.0));

    let (c, prof) = translating_solution(&p(2, 1.0, 0.0, fin(1.0)), &o).unwrap();
    assert!(c > 0.0);
    assert_eq!(prof.phi[0], 0.0);
    assert_eq!(prof.psi[0], 0.0);
    assert_eq!(prof.r_last(), 1.0);
    assert!((prof.psi_last() - 1.0).abs() < 1e-8);
}

#[test]
fn epsilon_route_agrees() {
    let mut o = SpeedOptions::default();
    let params = p(3, 2.0, -1.0, fin(2.0));
    let a = find_speed(&params, &o).unwrap().c_tilde;
    o.route = Route::Epsilon(1e-9);
    let b = find_speed(&params, &o).unwrap().c_tilde;
    assert!((a - b).abs() < 1e-6 * a, "{a} vs {b}");
}

fn admissible_params() -> impl Strategy<Value = FlowParams> {
    let case_a = (
        2u32..=4,
        prop::sample::select(vec![0.5, 1.0, 2.0]),
        0.2f64..3.0,
    )
        .prop_map(|(n, a, k)| p(n, a, 0.0, fin(k)));
    let case_b = (
        2u32..=4,
        prop::sample::select(vec![0.5, 1.0, 2.0]),
        0.1f64..0.9,
        0.3f64..3.0,
    )
        .prop_map(|(n, a, frac, k)| {
            // (-b)^(1/alpha) = frac * k N / sqrt(1 + k^2)
            let bp = frac * k * n as f64 / (1.0 + k * k).sqrt();
            p(n, a, -bp.powf(a), fin(k))
        });
    let case_c = (
        2u32..=4,
        prop::sample::select(vec![0.5, 1.0, 2.0]),
        0.2f64..3.0,
        0.2f64..3.0,
    )
        .prop_map(|(n, a, b, k)| p(n, a, b, fin(k)));
    let case_d = (
        prop::sample::select(vec![1u32, 3]),
        0.3f64..2.0,
        0.2f64..3.0,
    )
        .prop_map(|(q, frac, k)| {
            // b^(1/alpha) = (1 + frac) k N / sqrt(1 + k^2)
            let n = 2u32;
            let alpha = q as f64 / 3.0;
            let bp = (1.0 + frac) * k * n as f64 / (1.0 + k * k).sqrt();
            FlowParams::odd(n, q, 3, bp.powf(alpha))
                .unwrap()
                .with_k(fin(-k))
        });
    prop_oneof![case_a, case_b, case_c, case_d]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn boundary_slope_is_monotone_across_the_bracket(params in admissible_params()) {
        prop_assume!(admissibility(&params).is_ok());
        let o = SpeedOptions::default();
        let (lo, hi) = bracket_speed(&params, &o).unwrap();
        let io = IntegratorOptions { cross_check: false, ..IntegratorOptions::default() };
        let mut prev = f64::NEG_INFINITY;
        for i in 1..=10 {
            let c = lo + (hi - lo) * i as f64 / 11.0;
            let v = boundary_slope(&params, c, Route::Zeta, &io).unwrap();
            prop_assert!(v > prev || (v.is_infinite() && v == prev), "c = {}: {} after {}", c, v, prev);
            prev = v;
        }
    }

    #[test]
    fn residual_within_tolerance(params in admissible_params()) {
        prop_assume!(admissibility(&params).is_ok());
        let r = find_speed(&params, &SpeedOptions::default()).unwrap();
        let k = params.k.unwrap().finite().unwrap();
        prop_assert!(r.residual.abs() <= 1e-8 * k.abs().max(1.0), "residual {}", r.residual);
    }
}
