//! Reference speeds from an integrator that shares no code with the library.
//!
//! For `alpha = 1` the inclination angle `theta = arctan Psi` is monotone along
//! the profile, so the radius can be integrated as a function of `theta`:
//! `dr/dtheta = cos(theta) / (c cos(theta) - b - (N - 1) sin(theta) / r)`.
//! Stepping in `s = ln(theta)` with classical RK4 and a Richardson check gives
//! `r(theta_k; c)`, and the speed is the root of `r(arctan k; c) = 1`. The same
//! recipe with `theta_k = pi/2` gives the speed whose profile blows up at `r = 1`.
//!
//! The constants were produced by this oracle and frozen; the tests recompute
//! them and compare the library against the frozen values.

use gmcf_core::speed::{find_speed, find_speed_for_radius, SpeedOptions};
use gmcf_core::{FlowParams, Slope};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

/// c~(b = 0, k = 1), alpha = 1, N = 2.
const GOLDEN_SPEED_B0_K1: f64 = 1.675189068053833;
/// c~(b = 3, k = 1), alpha = 1, N = 2.
const GOLDEN_SPEED_B3_K1: f64 = 5.499049703674063;
/// c(b = -1.5, R = 1), alpha = 1, N = 2.
const GOLDEN_SPEED_BM15_R1: f64 = 0.814478056493920;

fn rk4(f: impl Fn(f64, f64) -> f64, x0: f64, x1: f64, y0: f64, steps: usize) -> f64 {
    let h = (x1 - x0) / steps as f64;
    let mut y = y0;
    for i in 0..steps {
        let x = x0 + i as f64 * h;
        let k1 = f(x, y);
        let k2 = f(x + 0.5 * h, y + 0.5 * h * k1);
        let k3 = f(x + 0.5 * h, y + 0.5 * h * k2);
        let k4 = f(x + h, y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !y.is_finite() {
            return f64::INFINITY;
        }
    }
    y
}

/// `r(theta_k; c)`: steps uniform in `ln(theta)` up to `pi/4`, then uniform in
/// `ln(pi/2 - theta)`, which keeps both ends of the path smooth.
fn radius_at_angle(n: f64, b: f64, c: f64, theta_k: f64, steps: usize) -> f64 {
    let drdth = move |th: f64, r: f64| {
        let den = c * th.cos() - b - (n - 1.0) * th.sin() / r;
        if den > 0.0 {
            th.cos() / den
        } else {
            f64::INFINITY
        }
    };
    let th0: f64 = 1e-8;
    let r0 = n * th0 / (c - b);
    let quarter = std::f64::consts::FRAC_PI_4;
    let half = std::f64::consts::FRAC_PI_2;
    let first_end = theta_k.min(quarter);
    let r = rk4(
        |s, r| s.exp() * drdth(s.exp(), r),
        th0.ln(),
        first_end.ln(),
        r0,
        steps,
    );
    if theta_k <= quarter || !r.is_finite() {
        return r;
    }
    let phi_end = (half - theta_k).max(1e-14);
    rk4(
        |w, r| -w.exp() * drdth(half - w.exp(), r),
        quarter.ln(),
        phi_end.ln(),
        r,
        steps,
    )
}

/// Richardson-extrapolated radius and the coarse/fine discrepancy.
fn radius_richardson(n: f64, b: f64, c: f64, theta_k: f64) -> (f64, f64) {
    let coarse = radius_at_angle(n, b, c, theta_k, 1 << 15);
    let fine = radius_at_angle(n, b, c, theta_k, 1 << 16);
    (fine + (fine - coarse) / 15.0, (fine - coarse).abs())
}

/// Root of `r(theta_k; c) = 1`; `r` decreases in `c`.
fn oracle_speed(n: f64, b: f64, theta_k: f64, mut lo: f64, mut hi: f64) -> f64 {
    while hi - lo > 1e-14 * hi {
        let mid = 0.5 * (lo + hi);
        if radius_richardson(n, b, mid, theta_k).0 > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = 0.5 * (lo + hi);
    let (r, diff) = radius_richardson(n, b, c, theta_k);
    assert!(
        diff < 1e-10,
        "RK4 not converged at c = {c}: step-halving change {diff:e}"
    );
    assert!((r - 1.0).abs() < 1e-12);
    c
}

#[test]
fn oracle_reproduces_frozen_values() {
    let cases = [
        (0.0, FRAC_PI_4, 0.1, 2.0 * 2f64.sqrt(), GOLDEN_SPEED_B0_K1),
        (
            3.0,
            FRAC_PI_4,
            3.0 * 2f64.sqrt() + 1e-6,
            5.0 * 2f64.sqrt(),
            GOLDEN_SPEED_B3_K1,
        ),
        // Above c ~ 4 the profile sits on the R_inf = 2/3 floor; stay below it.
        (-1.5, FRAC_PI_2, 0.1, 3.0, GOLDEN_SPEED_BM15_R1),
    ];
    for (b, th, lo, hi, golden) in cases {
        let c = oracle_speed(2.0, b, th, lo, hi);
        assert!(
            (c - golden).abs() < 1e-12 * golden,
            "b = {b}: {c} vs {golden}"
        );
    }
}

fn opts() -> SpeedOptions {
    SpeedOptions {
        tol: 1e-12,
        tol_k: 1e-10,
        ..SpeedOptions::default()
    }
}

#[test]
fn library_speed_b0_k1() {
    let p = FlowParams::new(2, 1.0, 0.0)
        .unwrap()
        .with_k(Slope::Finite(1.0));
    let r = find_speed(&p, &opts()).unwrap();
    assert!(
        (r.c_tilde - GOLDEN_SPEED_B0_K1).abs() < 1e-9,
        "{}",
        r.c_tilde
    );
}

#[test]
fn library_speed_b3_k1() {
    let p = FlowParams::new(2, 1.0, 3.0)
        .unwrap()
        .with_k(Slope::Finite(1.0));
    let r = find_speed(&p, &opts()).unwrap();
    assert!(
        (r.c_tilde - GOLDEN_SPEED_B3_K1).abs() < 1e-9 * GOLDEN_SPEED_B3_K1,
        "{}",
        r.c_tilde
    );
}

#[test]
fn library_speed_for_radius_bm15() {
    let p = FlowParams::new(2, 1.0, -1.5).unwrap();
    let c = find_speed_for_radius(&p, 1.0, &opts()).unwrap();
    assert!(
        (c - GOLDEN_SPEED_BM15_R1).abs() < 1e-8 * GOLDEN_SPEED_BM15_R1,
        "{c}"
    );
}

#[test]
fn library_infinite_slope_matches_radius_one() {
    let p = FlowParams::new(2, 1.0, -1.5)
        .unwrap()
        .with_k(Slope::PosInfinity);
    let r = find_speed(&p, &opts()).unwrap();
    assert!(
        (r.c_tilde - GOLDEN_SPEED_BM15_R1).abs() < 1e-8 * GOLDEN_SPEED_BM15_R1,
        "{}",
        r.c_tilde
    );
}
