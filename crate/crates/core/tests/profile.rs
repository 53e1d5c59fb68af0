use gmcf_core::flow::r_inf_bounds;
use gmcf_core::profile::{
    asymptotic_value, estimate_r_infinity, integrate_psi_epsilon, integrate_zeta,
    monotonicity_probe, solve_profile, v_shape_defect, Asymptote, IntegratorOptions,
};
use gmcf_core::{Error, FlowParams, RegimeTag};
use proptest::prelude::*;

fn quiet() -> IntegratorOptions {
    IntegratorOptions {
        cross_check: false,
        ..IntegratorOptions::default()
    }
}

fn p(n: u32, alpha: f64, b: f64) -> FlowParams {
    FlowParams::new(n, alpha, b).unwrap()
}

#[test]
fn zero_speed_is_a_sphere_cap() {
    let sol = integrate_zeta(&p(2, 1.0, -1.0), 0.0, &quiet()).unwrap();
    for i in 0..sol.len() {
        let r = sol.r_grid[i];
        if r > 1.9 {
            break;
        }
        assert!((sol.zeta[i] - r / 2.0).abs() < 1e-12);
        assert!((sol.phi[i] - (2.0 - (4.0 - r * r).sqrt())).abs() < 1e-8);
    }
    let ri = sol.r_inf.unwrap();
    assert!((ri.estimate - 2.0).abs() < 1e-6, "{ri:?}");
    assert!((sol.phi_end.unwrap() - 2.0).abs() < 1e-6);
}

#[test]
fn flat_profile_when_speed_equals_forcing() {
    for alpha in [0.5, 1.0, 2.0] {
        let sol = solve_profile(&p(3, alpha, 3.0), 3.0, &IntegratorOptions::default()).unwrap();
        assert_eq!(sol.regime, RegimeTag::CEqB);
        assert!(sol
            .zeta
            .iter()
            .chain(&sol.psi)
            .chain(&sol.phi)
            .all(|v| *v == 0.0));
        assert!(sol.r_inf.is_none());
    }
}

#[test]
fn blowup_radius_within_proven_bounds() {
    let sol = solve_profile(&p(2, 1.0, -1.0), 1.0, &IntegratorOptions::default()).unwrap();
    let ri = sol.r_inf.unwrap();
    assert!(ri.lo >= 1.0 && ri.hi <= 2.0, "{ri:?}");
    assert!(ri.lo <= ri.estimate && ri.estimate <= ri.hi);
    assert!(sol.cross_check.unwrap().passed);
}

#[test]
fn estimate_rejects_infinite_regimes() {
    let sol = integrate_zeta(&p(2, 1.0, 0.0), 1.0, &quiet()).unwrap();
    assert!(matches!(
        estimate_r_infinity(&sol),
        Err(Error::NotApplicable(_))
    ));
}

#[test]
fn blowup_radius_approaches_floor_for_large_speed() {
    // R_inf is bounded below by (N-1)(-b)^(-1/alpha) = 1 here.
    let mut last = f64::INFINITY;
    for c in [10.0, 100.0, 1000.0] {
        let sol = integrate_zeta(&p(2, 1.0, -1.0), c, &quiet()).unwrap();
        let r = sol.r_inf.unwrap().estimate;
        assert!(r <= last + 1e-9, "c = {c}: {r} after {last}");
        assert!((r - 1.0).abs() < 1e-6, "c = {c}: {r}");
        assert!(sol.phi_end.is_none());
        last = r;
    }
}

#[test]
fn blowup_radius_strictly_decreasing_below_the_floor_speed() {
    let mut last = f64::INFINITY;
    for c in [0.25, 0.5, 1.0, 1.5, 2.0] {
        let sol = integrate_zeta(&p(2, 1.0, -1.0), c, &quiet()).unwrap();
        let r = sol.r_inf.unwrap().estimate;
        assert!(r < last && r > 1.0, "c = {c}: {r}");
        assert!(sol.phi_end.unwrap().is_finite());
        last = r;
    }
}

#[test]
fn cap_radius_grows_as_speed_nears_forcing() {
    let params = FlowParams::odd(2, 1, 3, 1.0).unwrap();
    let mut last = 0.0;
    for c in [0.9, 0.99, 0.999] {
        let sol = integrate_zeta(&params, c, &quiet()).unwrap();
        assert_eq!(sol.regime, RegimeTag::BGtCPos);
        let r = sol.r_inf.unwrap().estimate;
        let (lo, hi) = r_inf_bounds(&params, c, sol.regime).unwrap();
        assert!(r > last && r >= lo && r <= hi, "c = {c}: {r}");
        last = r;
    }
    assert!(last > 1000.0, "{last}");
}

#[test]
fn regularized_slope_at_origin() {
    let mut o = quiet();
    o.dr_init = 1e-9;
    o.r_stop = Some(0.1);
    for eps in [1e-1, 1e-2, 1e-4] {
        let sol = integrate_psi_epsilon(&p(2, 2.0, -1.0), 3.0, eps, &o).unwrap();
        let d = sol.psi[1] / sol.r_grid[1];
        assert!((d - 2.0).abs() < 1e-3, "eps = {eps}: {d}");
    }
}

#[test]
fn regularized_radius_bracket() {
    for (alpha, b, c) in [(1.0, -1.0, 1.0), (2.0, -0.5, 2.0), (0.5, -2.0, 0.3)] {
        let n = 3.0;
        let sol = integrate_psi_epsilon(&p(3, alpha, b), c, 1e-2, &quiet()).unwrap();
        let r = sol.r_inf.unwrap();
        let lo = (c - b).powf(-1.0 / alpha);
        let hi = (-b).powf(-1.0 / alpha) * (n + 2f64.ln());
        assert!(r.lo >= lo && r.hi <= hi, "{r:?} not in [{lo}, {hi}]");
    }
}

#[test]
fn regularized_profiles_increase_with_eps() {
    let params = p(2, 1.0, -1.0);
    let mut o = quiet();
    o.r_stop = Some(1.0);
    let a = integrate_psi_epsilon(&params, 1.0, 1e-3, &o).unwrap();
    let b = integrate_psi_epsilon(&params, 1.0, 1e-2, &o).unwrap();
    for i in 1..a.len() {
        let r = a.r_grid[i];
        assert!(b.psi_at(r).unwrap() > a.psi[i], "r = {r}");
    }
}

#[test]
fn asymptote_examples() {
    let r = 7.0;
    match asymptotic_value(&p(3, 1.0, 0.0), 2.0, r).unwrap() {
        Asymptote::Height(h) => assert!((h - r * r / 2.0).abs() < 1e-12),
        other => panic!("{other:?}"),
    }
    assert_eq!(
        asymptotic_value(&p(2, 1.0, 3.0), 5.0, 1.0).unwrap(),
        Asymptote::Slope(4.0 / 3.0)
    );
    assert_eq!(
        asymptotic_value(&p(2, 1.0, 0.0), 0.0, r).unwrap(),
        Asymptote::Height(0.0)
    );
    assert!(asymptotic_value(&p(2, 1.0, -1.0), 1.0, r).is_err());
}

#[test]
fn defect_grows_for_cone_profiles() {
    let mut o = quiet();
    o.r_max = 81.0;
    let sol = integrate_zeta(&p(2, 1.0, 3.0), 5.0, &o).unwrap();
    assert_eq!(v_shape_defect(&sol, 0.0).unwrap(), 0.0);
    for r in [10.0, 20.0, 40.0] {
        let inc = v_shape_defect(&sol, 2.0 * r).unwrap() - v_shape_defect(&sol, r).unwrap();
        assert!(inc > 0.05, "r = {r}: {inc}");
    }
    let mut prev = 0.0;
    for i in 1..80 {
        let d = v_shape_defect(&sol, i as f64).unwrap();
        assert!(d > prev);
        prev = d;
    }
}

#[test]
fn ordering_probe_examples() {
    let samples: Vec<f64> = (1..20).map(|i| 0.05 * i as f64).collect();
    let rep = monotonicity_probe(&p(2, 1.0, -1.0), 1.0, 2.0, &samples, &quiet()).unwrap();
    assert!(rep.margins.iter().all(|m| m.1 > 0.0));
    let (r1, r2) = rep.r_inf.unwrap();
    assert!(r2 < r1);

    assert!(monotonicity_probe(&p(2, 1.0, 0.0), 1.0, 1.0, &samples, &quiet()).is_err());

    let odd = FlowParams::odd(2, 1, 3, 1.0).unwrap();
    let rep = monotonicity_probe(&odd, 0.3, 0.6, &samples, &quiet()).unwrap();
    assert!(rep.margins.iter().all(|m| m.1 > 0.0));
    let (r1, r2) = rep.r_inf.unwrap();
    assert!(r2 > r1);
}

#[test]
fn endpoint_gap_follows_linear_law() {
    // gap ~ 2a (R_inf - r) just before the cutoff, with 2a = (-b)^(1/alpha) - (N-1)/R_inf.
    for (n, alpha, b, c) in [
        (2, 1.0, -1.0, 1.0),
        (3, 2.0, -4.0, 1.0),
        (2, 0.5, -1.5, 0.5),
    ] {
        let sol = integrate_zeta(&p(n, alpha, b), c, &quiet()).unwrap();
        let r_inf = sol.r_inf.unwrap().estimate;
        let two_a = (-b).powf(1.0 / alpha) - (n as f64 - 1.0) / r_inf;
        assert!(two_a > 0.05, "{two_a}");
        let delta = sol.gap[sol.len() - 1];
        let mut seen = 0;
        for i in 0..sol.len() {
            let g = sol.gap[i];
            if g <= 10.0 * delta && g >= delta {
                let slope = g / (r_inf - sol.r_grid[i]);
                assert!(
                    (slope / two_a - 1.0).abs() < 0.1,
                    "slope {slope} vs {two_a}"
                );
                seen += 1;
            }
        }
        assert!(seen > 0);
    }
}

#[test]
fn ode_residual_is_pure_difference_error() {
    // The centred-difference residual of the slope equation must vanish once its
    // O(h^2) truncation is removed by step halving.
    let params = p(3, 2.0, -1.0);
    let c = 1.5;
    let sol = integrate_zeta(&params, c, &quiet()).unwrap();
    let n1 = 2.0;
    let residual = |r: f64, h: f64| {
        let psi = sol.psi_at(r).unwrap();
        let d = (sol.psi_at(r + h).unwrap() - sol.psi_at(r - h).unwrap()) / (2.0 * h);
        let s = (1.0 + psi * psi).sqrt();
        d / (1.0 + psi * psi) + n1 * psi / r - (c / s - params.b).sqrt() * s
    };
    let r_end = 0.9 * sol.r_inf.unwrap().lo;
    for i in 1..20 {
        let r = r_end * i as f64 / 20.0;
        let h = 1e-3 * r_end;
        let (r1, r2) = (residual(r, h), residual(r, h / 2.0));
        let extrapolated = r2 + (r2 - r1) / 3.0;
        assert!(
            extrapolated.abs() < 1e-6 * (1.0 + r1.abs()),
            "r = {r}: {r1:e} {r2:e}"
        );
    }
}

fn family() -> impl Strategy<Value = (u32, f64, f64, f64)> {
    (
        2u32..=4,
        prop::sample::select(vec![0.5, 1.0, 2.0]),
        -2.0f64..=0.0,
        0.1f64..=3.0,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn profile_invariants((n, alpha, b, c) in family()) {
        let params = p(n, alpha, b);
        let mut o = quiet();
        o.r_max = 5.0;
        let sol = integrate_zeta(&params, c, &o).unwrap();
        prop_assert_eq!(sol.r_grid[0], 0.0);
        prop_assert_eq!(sol.phi[0], 0.0);
        prop_assert_eq!(sol.psi[0], 0.0);
        prop_assert_eq!(sol.zeta[0], 0.0);
        let ia = 1.0 / alpha;
        let nf = n as f64;
        for i in 1..sol.len() {
            let (r, z, s) = (sol.r_grid[i], sol.zeta[i], sol.psi[i]);
            prop_assert!(r > sol.r_grid[i - 1]);
            prop_assert!(z > sol.zeta[i - 1] && z < 1.0);
            prop_assert!(s > sol.psi[i - 1] && s > 0.0);
            let exact = z / ((1.0 - z) * (1.0 + z)).sqrt();
            prop_assert!((s - exact).abs() <= 1e-6 * exact.max(1.0), "psi {} vs {}", s, exact);
            // Sandwich between the linear profiles of speeds c and 0.
            let slack = 1e-12 * r.max(1.0);
            prop_assert!(z <= (c - b).powf(ia) * r / nf + slack);
            prop_assert!(z >= (-b).powf(ia) * r / nf - slack);
        }
        if b < 0.0 {
            let ri = sol.r_inf.unwrap();
            let (lo, hi) = r_inf_bounds(&params, c, sol.regime).unwrap();
            prop_assert!(ri.lo >= lo && ri.hi <= hi);
            prop_assert!(ri.estimate >= (nf - 1.0) * (-b).powf(-ia) * (1.0 - 1e-9));
        }
    }

    #[test]
    fn cap_invariants(q in prop::sample::select(vec![1u32, 3]), b in 0.5f64..3.0, frac in 0.05f64..0.95) {
        let params = FlowParams::odd(2, q, 3, b).unwrap();
        let c = frac * b;
        let sol = integrate_zeta(&params, c, &quiet()).unwrap();
        prop_assert_eq!(sol.regime, RegimeTag::BGtCPos);
        for i in 1..sol.len() {
            prop_assert!(sol.zeta[i] < sol.zeta[i - 1] && sol.zeta[i] > -1.0);
            prop_assert!(sol.psi[i] < sol.psi[i - 1]);
        }
        let ri = sol.r_inf.unwrap();
        let (lo, hi) = r_inf_bounds(&params, c, sol.regime).unwrap();
        prop_assert!(ri.lo >= lo && ri.hi <= hi);
    }
}
