use gmcf_core::diagnostics::{
    assemble_report, count_sign_changes, intersection_monitor, oracle_equivalence,
    IntersectionMonitor, DEAD_BAND,
};
use gmcf_core::pde::{evolve, init_state, EvolveOptions, InitialData, TsReference};
use gmcf_core::profile::IntegratorOptions;
use gmcf_core::speed::{translating_solution, SpeedOptions};
use gmcf_core::{Error, FlowParams, Slope};
use proptest::prelude::*;

fn params(b: f64, k: f64) -> FlowParams {
    FlowParams::new(2, 1.0, b).unwrap().with_k(Slope::Finite(k))
}

#[test]
fn oracle_agrees_for_a_blowing_up_profile() {
    let p = FlowParams::new(2, 1.0, -1.0).unwrap();
    let rep = oracle_equivalence(&p, 1.0, None, &IntegratorOptions::default()).unwrap();
    assert!(rep.monotone, "{:?}", rep.deviation);
    assert_eq!(rep.eps.len(), 3);
}

#[test]
fn oracle_on_the_flat_profile_is_exact() {
    let p = FlowParams::new(2, 1.0, 1.0).unwrap();
    let rep = oracle_equivalence(&p, 1.0, None, &IntegratorOptions::default()).unwrap();
    assert!(
        rep.deviation.iter().all(|d| *d == 0.0),
        "{:?}",
        rep.deviation
    );
    assert!(rep.monotone);
}

#[test]
fn oracle_with_a_deviation_cap() {
    let p = FlowParams::new(3, 2.0, 0.0).unwrap();
    let rep = oracle_equivalence(&p, 1.0, Some(1e-3), &IntegratorOptions::default()).unwrap();
    assert!(*rep.deviation.last().unwrap() < 1e-3, "{:?}", rep.deviation);
}

#[test]
fn translating_member_never_crosses_its_own_family() {
    let p = params(3.0, 1.0);
    let (c, prof) = translating_solution(&p, &SpeedOptions::default()).unwrap();
    let s = init_state(&InitialData::translating(&prof, c), &p, 64).unwrap();
    let reference = TsReference::from_profile(c, &prof, &s.r_grid).unwrap();
    let shifts = vec![-0.5, 0.5];
    let (trace, log) =
        intersection_monitor(s, 0.5, &reference, c, shifts, &EvolveOptions::default()).unwrap();
    assert!(trace.counts.iter().flatten().all(|n| *n == 0));
    assert!(log.events.is_empty());
}

#[test]
fn intersections_do_not_increase_for_convex_data() {
    let p = params(3.0, 1.0);
    let s = init_state(&InitialData::quadratic(1.0), &p, 128).unwrap();
    let (reference, _) = TsReference::solve(&p, &s.r_grid, &SpeedOptions::default()).unwrap();
    let c = 0.5 * (p.b + reference.c_tilde);
    let shifts = vec![-0.2, -0.05, 0.0, 0.05, 0.2];
    let (trace, log) =
        intersection_monitor(s, 1.0, &reference, c, shifts, &EvolveOptions::default()).unwrap();
    assert!(trace.non_increasing(), "{:?}", trace.violations);
    assert!(log.events.is_empty());
    assert_eq!(trace.times.len(), trace.counts.len());
}

#[test]
fn far_shifts_give_no_intersections() {
    let p = params(3.0, 1.0);
    let s = init_state(&InitialData::quadratic(1.0), &p, 64).unwrap();
    let m = IntersectionMonitor::new(&p, 4.0, vec![-100.0, 100.0], &s.r_grid).unwrap();
    assert_eq!(m.counts_for(&s.u, 0.0).unwrap(), vec![0, 0]);
}

#[test]
fn a_different_speed_crosses_at_most_once() {
    let p = params(3.0, 1.0);
    let (c, prof) = translating_solution(&p, &SpeedOptions::default()).unwrap();
    let s = init_state(&InitialData::translating(&prof, c), &p, 128).unwrap();
    let other = 0.5 * (p.b + c);
    let m = IntersectionMonitor::new(&p, other, vec![0.0, 0.01, -0.01], &s.r_grid).unwrap();
    for n in m.counts_for(&s.u, 0.0).unwrap() {
        assert!(n <= 1, "{n}");
    }
}

#[test]
fn monitor_rejects_a_profile_that_blows_up_inside() {
    let p = params(-1.0, 1.0);
    let r: Vec<f64> = (0..=64).map(|i| i as f64 / 64.0 * 3.0).collect();
    assert!(matches!(
        IntersectionMonitor::new(&p, 0.0, vec![0.0], &r),
        Err(Error::NotApplicable(_))
    ));
}

#[test]
fn report_of_a_translating_run_is_steady() {
    let p = params(0.0, 1.0);
    let (c, prof) = translating_solution(&p, &SpeedOptions::default()).unwrap();
    let s = init_state(&InitialData::translating(&prof, c), &p, 64).unwrap();
    let reference = TsReference::from_profile(c, &prof, &s.r_grid).unwrap();
    let run = evolve(s, 1.0, &reference, &EvolveOptions::default(), &mut []).unwrap();
    let rep = &run.report;
    assert!(rep.all_finite());
    assert!(rep.flagged().is_empty(), "{:?}", rep.growth);
    assert!(rep.hstar_obs > 0.0);
    assert!(rep.max_growth() < 1e-6);
    assert_eq!(rep.sign, 1.0);
}

#[test]
fn empty_windows_give_an_empty_report() {
    let rep = assemble_report(&[], &[]);
    assert!(rep.windows.is_empty());
    assert!(rep.growth.is_empty());
}

proptest! {
    #[test]
    fn sign_changes_are_symmetric_and_bounded(v in prop::collection::vec(-1.0f64..1.0, 2..60), s in 0.1f64..10.0) {
        let n = count_sign_changes(&v, DEAD_BAND);
        prop_assert!((n as usize) < v.len());
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        prop_assert_eq!(count_sign_changes(&neg, DEAD_BAND), n);
        let scaled: Vec<f64> = v.iter().map(|x| s * x).collect();
        prop_assert_eq!(count_sign_changes(&scaled, DEAD_BAND * s), n);
    }

    #[test]
    fn sign_changes_of_a_monotone_sequence(v in prop::collection::vec(0.0f64..1.0, 2..40), shift in 0.0f64..1.0) {
        let mut w: Vec<f64> = v.clone();
        w.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let d: Vec<f64> = w.iter().map(|x| x - shift).collect();
        prop_assert!(count_sign_changes(&d, DEAD_BAND) <= 1);
    }
}
