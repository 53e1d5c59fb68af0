//! Adaptive integrator for a scalar ODE `y' = f(r, y)` carrying one quadrature
//! component `q' = w(r, y)`.
//!
//! Steps are taken with the Dormand-Prince 5(4) pair. When the local Jacobian
//! is strongly negative (`h |df/dy| > stiff_switch`) the step is taken with the
//! three-stage Radau IIA collocation method instead, with the local error
//! estimated by step doubling. An optional event function stops integration
//! exactly where it changes sign from negative to non-negative.

use crate::error::{Error, Result};

pub trait ScalarOde {
    fn rhs(&self, r: f64, y: f64) -> f64;

    fn jac(&self, r: f64, y: f64) -> f64 {
        let d = if y != 0.0 { 1e-7 * y.abs() } else { 1e-7 };
        (self.rhs(r, y + d) - self.rhs(r, y - d)) / (2.0 * d)
    }

    fn integrand(&self, r: f64, y: f64) -> f64;
}

#[derive(Clone, Copy, Debug)]
pub struct StepOptions {
    /// Relative tolerance.
    pub tol: f64,
    pub atol_y: f64,
    pub atol_q: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
    /// Threshold on `h |J|` above which the implicit method is used.
    pub stiff_switch: f64,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            tol: 1e-10,
            atol_y: 1e-14,
            atol_q: 1e-14,
            h_init: 1e-4,
            h_min: 1e-14,
            h_max: f64::INFINITY,
            max_steps: 2_000_000,
            stiff_switch: 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Node {
    pub r: f64,
    pub y: f64,
    pub q: f64,
    pub dy: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub implicit: usize,
    pub rhs_evals: usize,
}

impl StepStats {
    pub fn merge(&mut self, other: StepStats) {
        self.accepted += other.accepted;
        self.rejected += other.rejected;
        self.implicit += other.implicit;
        self.rhs_evals += other.rhs_evals;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    ReachedEnd,
    Event,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub nodes: Vec<Node>,
    pub stats: StepStats,
    pub termination: Termination,
    /// Size of the last accepted full step.
    pub last_h: f64,
}

const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Radau {
    c: [f64; 3],
    a: [[f64; 3]; 3],
}

impl Radau {
    fn new() -> Self {
        let s6 = 6f64.sqrt();
        Radau {
            c: [(4.0 - s6) / 10.0, (4.0 + s6) / 10.0, 1.0],
            a: [
                [
                    (88.0 - 7.0 * s6) / 360.0,
                    (296.0 - 169.0 * s6) / 1800.0,
                    (-2.0 + 3.0 * s6) / 225.0,
                ],
                [
                    (296.0 + 169.0 * s6) / 1800.0,
                    (88.0 + 7.0 * s6) / 360.0,
                    (-2.0 - 3.0 * s6) / 225.0,
                ],
                [(16.0 - s6) / 36.0, (16.0 + s6) / 36.0, 1.0 / 9.0],
            ],
        }
    }
}

fn solve3(m: [[f64; 3]; 3], rhs: [f64; 3]) -> Option<[f64; 3]> {
    let mut a = m;
    let mut b = rhs;
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            let pivot = a[col];
            for (x, p) in a[row][col..].iter_mut().zip(&pivot[col..]) {
                *x -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut s = b[row];
        for k in row + 1..3 {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

struct Stepper<'a, S: ScalarOde + ?Sized> {
    sys: &'a S,
    opts: StepOptions,
    radau: Radau,
    stats: StepStats,
}

struct StepOut {
    y: f64,
    q: f64,
    dy: f64,
    err: f64,
    implicit: bool,
}

impl<'a, S: ScalarOde + ?Sized> Stepper<'a, S> {
    fn f(&mut self, r: f64, y: f64) -> f64 {
        self.stats.rhs_evals += 1;
        self.sys.rhs(r, y)
    }

    fn norm(&self, ey: f64, eq: f64, y: f64, q: f64) -> f64 {
        let sy = self.opts.atol_y + self.opts.tol * y.abs();
        let sq = self.opts.atol_q + self.opts.tol * q.abs();
        (ey.abs() / sy).max(eq.abs() / sq)
    }

    fn dopri(&mut self, n: &Node, h: f64) -> StepOut {
        let mut ky = [0.0; 7];
        let mut kq = [0.0; 7];
        ky[0] = n.dy;
        kq[0] = self.sys.integrand(n.r, n.y);
        for s in 1..7 {
            let mut yy = n.y;
            for j in 0..s {
                yy += h * DP_A[s][j] * ky[j];
            }
            let rr = n.r + DP_C[s] * h;
            ky[s] = self.f(rr, yy);
            kq[s] = self.sys.integrand(rr, yy);
        }
        let mut y = n.y;
        let mut q = n.q;
        let mut ey = 0.0;
        let mut eq = 0.0;
        for s in 0..7 {
            y += h * DP_B[s] * ky[s];
            q += h * DP_B[s] * kq[s];
            ey += h * DP_E[s] * ky[s];
            eq += h * DP_E[s] * kq[s];
        }
        let err = self.norm(ey, eq, y.abs().max(n.y.abs()), q.abs().max(n.q.abs()));
        StepOut {
            y,
            q,
            dy: ky[6],
            err,
            implicit: false,
        }
    }

    /// One Radau IIA step by simplified Newton. `None` when Newton fails.
    fn radau_once(&mut self, r: f64, y: f64, h: f64, jac: f64) -> Option<(f64, f64)> {
        let a = self.radau.a;
        let c = self.radau.c;
        // Start Newton from the constant solution: an explicit predictor
        // overshoots badly in exactly the stiff cases this step is used for.
        let mut z = [0.0; 3];
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = if i == j { 1.0 } else { 0.0 } - h * jac * a[i][j];
            }
        }
        let scale = self.opts.atol_y + self.opts.tol * y.abs();
        let mut prev = f64::INFINITY;
        for _ in 0..12 {
            let mut fz = [0.0; 3];
            for i in 0..3 {
                fz[i] = self.f(r + c[i] * h, y + z[i]);
            }
            let mut res = [0.0; 3];
            for i in 0..3 {
                res[i] = -z[i] + h * (a[i][0] * fz[0] + a[i][1] * fz[1] + a[i][2] * fz[2]);
            }
            let dz = solve3(m, res)?;
            let mut size: f64 = 0.0;
            for i in 0..3 {
                z[i] += dz[i];
                size = size.max(dz[i].abs());
            }
            if !size.is_finite() {
                return None;
            }
            if size <= 1e-3 * scale {
                let mut q = 0.0;
                for i in 0..3 {
                    q += h * a[2][i] * self.sys.integrand(r + c[i] * h, y + z[i]);
                }
                return Some((y + z[2], q));
            }
            if size > 2.0 * prev && prev < f64::INFINITY {
                return None;
            }
            prev = size;
        }
        None
    }

    fn radau(&mut self, n: &Node, h: f64, jac: f64) -> Option<StepOut> {
        let (y_full, q_full) = self.radau_once(n.r, n.y, h, jac)?;
        let (y_half, q_half) = self.radau_once(n.r, n.y, 0.5 * h, jac)?;
        let r_mid = n.r + 0.5 * h;
        let jac_mid = self.sys.jac(r_mid, y_half);
        let (y2, q2) = self.radau_once(r_mid, y_half, 0.5 * h, jac_mid)?;
        let q = n.q + q_half + q2;
        let ey = (y2 - y_full) / 31.0;
        let eq = (n.q + q_full - q) / 31.0;
        let dy = self.f(n.r + h, y2);
        let err = self.norm(ey, eq, y2.abs().max(n.y.abs()), q.abs().max(n.q.abs()));
        Some(StepOut {
            y: y2,
            q,
            dy,
            err,
            implicit: true,
        })
    }

    fn try_step(&mut self, n: &Node, h: f64) -> Option<StepOut> {
        let jac = self.sys.jac(n.r, n.y);
        if jac < 0.0 && h * jac.abs() > self.opts.stiff_switch {
            self.radau(n, h, jac)
        } else {
            Some(self.dopri(n, h))
        }
    }
}

/// Integrate from `(r0, y0, q0)` towards `r_end`, stopping early where
/// `event(r, y)` first becomes non-negative.
pub fn integrate<S: ScalarOde + ?Sized>(
    sys: &S,
    r0: f64,
    y0: f64,
    q0: f64,
    r_end: f64,
    event: Option<&dyn Fn(f64, f64) -> f64>,
    opts: StepOptions,
) -> Result<Trajectory> {
    if !(r_end > r0) {
        return Err(Error::InvalidInput(format!(
            "integration interval [{r0}, {r_end}] is empty"
        )));
    }
    let mut st = Stepper {
        sys,
        opts,
        radau: Radau::new(),
        stats: StepStats::default(),
    };
    let dy0 = st.f(r0, y0);
    let mut nodes = vec![Node {
        r: r0,
        y: y0,
        q: q0,
        dy: dy0,
    }];
    let mut h = opts.h_init.min(r_end - r0).min(opts.h_max);
    let mut last_h;
    loop {
        let n = *nodes.last().unwrap();
        if st.stats.accepted >= opts.max_steps {
            return Err(Error::NoConvergence(format!(
                "step budget {} exhausted at r = {}",
                opts.max_steps, n.r
            )));
        }
        let remaining = r_end - n.r;
        let final_step = h >= remaining * (1.0 - 1e-12);
        let h_try = if final_step { remaining } else { h };
        let out = st.try_step(&n, h_try);
        let (accept, factor) = match &out {
            Some(o) if o.y.is_finite() && o.q.is_finite() && o.err <= 1.0 => {
                let expo = if o.implicit { 1.0 / 6.0 } else { 1.0 / 5.0 };
                let fac = if o.err == 0.0 {
                    5.0
                } else {
                    (0.9 * o.err.powf(-expo)).clamp(0.2, 5.0)
                };
                (true, fac)
            }
            Some(o) if o.err.is_finite() && o.y.is_finite() => {
                let expo = if o.implicit { 1.0 / 6.0 } else { 1.0 / 5.0 };
                (false, (0.9 * o.err.powf(-expo)).clamp(0.1, 0.9))
            }
            _ => (false, 0.25),
        };
        if !accept {
            st.stats.rejected += 1;
            h = h_try * factor;
            if h < opts.h_min * n.r.abs().max(1.0) {
                return Err(Error::StepFailure { r: n.r, h });
            }
            continue;
        }
        let o = out.unwrap();
        let next = Node {
            r: if final_step { r_end } else { n.r + h_try },
            y: o.y,
            q: o.q,
            dy: o.dy,
        };
        if let Some(ev) = event {
            if ev(next.r, next.y) >= 0.0 {
                let hit = locate_event(&mut st, &n, h_try, ev)?;
                st.stats.accepted += 1;
                nodes.push(hit);
                return Ok(Trajectory {
                    nodes,
                    stats: st.stats,
                    termination: Termination::Event,
                    last_h: h_try,
                });
            }
        }
        st.stats.accepted += 1;
        if o.implicit {
            st.stats.implicit += 1;
        }
        last_h = h_try;
        nodes.push(next);
        if final_step {
            return Ok(Trajectory {
                nodes,
                stats: st.stats,
                termination: Termination::ReachedEnd,
                last_h,
            });
        }
        h = (h_try * factor).min(opts.h_max);
    }
}

/// Bisect the step length from `n` so that the step ends on the event surface.
fn locate_event<S: ScalarOde + ?Sized>(
    st: &mut Stepper<'_, S>,
    n: &Node,
    h: f64,
    ev: &dyn Fn(f64, f64) -> f64,
) -> Result<Node> {
    let mut lo = 0.0;
    let mut hi = h;
    let mut best: Option<Node> = None;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let o = st
            .try_step(n, mid)
            .ok_or(Error::StepFailure { r: n.r, h: mid })?;
        let node = Node {
            r: n.r + mid,
            y: o.y,
            q: o.q,
            dy: o.dy,
        };
        if ev(node.r, node.y) >= 0.0 {
            hi = mid;
            best = Some(node);
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * n.r.abs().max(1e-300) {
            break;
        }
    }
    match best {
        Some(b) => Ok(b),
        None => {
            let o = st.try_step(n, h).ok_or(Error::StepFailure { r: n.r, h })?;
            Ok(Node {
                r: n.r + h,
                y: o.y,
                q: o.q,
                dy: o.dy,
            })
        }
    }
}

/// Cubic Hermite interpolation of `y` between two nodes.
pub fn hermite(a: &Node, b: &Node, r: f64) -> f64 {
    let h = b.r - a.r;
    if h == 0.0 {
        return a.y;
    }
    let s = (r - a.r) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * a.y + h10 * h * a.dy + h01 * b.y + h11 * h * b.dy
}

/// Quintic Hermite interpolation from values, first and second derivatives.
pub fn hermite5(r: (f64, f64), y: (f64, f64), d1: (f64, f64), d2: (f64, f64), x: f64) -> f64 {
    let h = r.1 - r.0;
    if h == 0.0 {
        return y.0;
    }
    let s = (x - r.0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let s4 = s3 * s;
    let s5 = s4 * s;
    let h0 = 1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5;
    let h1 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5;
    let h2 = 0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5;
    let g2 = 0.5 * s3 - s4 + 0.5 * s5;
    let g1 = -4.0 * s3 + 7.0 * s4 - 3.0 * s5;
    let g0 = 10.0 * s3 - 15.0 * s4 + 6.0 * s5;
    h0 * y.0 + h1 * h * d1.0 + h2 * h * h * d2.0 + g0 * y.1 + g1 * h * d1.1 + g2 * h * h * d2.1
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay;
    impl ScalarOde for Decay {
        fn rhs(&self, _r: f64, y: f64) -> f64 {
            -y
        }
        fn integrand(&self, _r: f64, y: f64) -> f64 {
            y
        }
    }

    struct Stiff {
        lambda: f64,
    }
    impl ScalarOde for Stiff {
        fn rhs(&self, r: f64, y: f64) -> f64 {
            self.lambda * (y - r.cos()) - r.sin()
        }
        fn jac(&self, _r: f64, _y: f64) -> f64 {
            self.lambda
        }
        fn integrand(&self, _r: f64, y: f64) -> f64 {
            y
        }
    }

    #[test]
    fn radau_coefficients_consistent() {
        let rd = Radau::new();
        for i in 0..3 {
            let s: f64 = rd.a[i].iter().sum();
            assert!((s - rd.c[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn exponential_decay_with_quadrature() {
        let opts = StepOptions::default();
        let tr = integrate(&Decay, 0.0, 1.0, 0.0, 5.0, None, opts).unwrap();
        let last = tr.nodes.last().unwrap();
        assert_eq!(last.r, 5.0);
        assert!((last.y - (-5f64).exp()).abs() < 1e-11);
        assert!((last.q - (1.0 - (-5f64).exp())).abs() < 1e-11);
        assert_eq!(tr.termination, Termination::ReachedEnd);
    }

    #[test]
    fn stiff_problem_uses_implicit_steps() {
        let sys = Stiff { lambda: -1e6 };
        let opts = StepOptions {
            tol: 1e-9,
            ..StepOptions::default()
        };
        let tr = integrate(&sys, 0.0, 1.0, 0.0, 10.0, None, opts).unwrap();
        let last = tr.nodes.last().unwrap();
        assert!((last.y - 10f64.cos()).abs() < 1e-8, "y = {}", last.y);
        assert!((last.q - 10f64.sin()).abs() < 1e-6, "q = {}", last.q);
        assert!(tr.stats.implicit > 0);
        assert!(tr.stats.accepted < 20_000, "{:?}", tr.stats);
    }

    #[test]
    fn event_is_located() {
        let ev = |_r: f64, y: f64| 0.5 - y;
        let tr = integrate(
            &Decay,
            0.0,
            1.0,
            0.0,
            5.0,
            Some(&ev),
            StepOptions::default(),
        )
        .unwrap();
        let last = tr.nodes.last().unwrap();
        assert_eq!(tr.termination, Termination::Event);
        assert!((last.r - 2f64.ln()).abs() < 1e-10, "r = {}", last.r);
    }

    #[test]
    fn quintic_hermite_reproduces_quintic() {
        let f = |r: f64| r.powi(5) - 3.0 * r.powi(4) + r * r - 1.0;
        let df = |r: f64| 5.0 * r.powi(4) - 12.0 * r.powi(3) + 2.0 * r;
        let ddf = |r: f64| 20.0 * r.powi(3) - 36.0 * r * r + 2.0;
        for i in 0..=10 {
            let x = 0.3 + 1.1 * i as f64 / 10.0;
            let v = hermite5(
                (0.3, 1.4),
                (f(0.3), f(1.4)),
                (df(0.3), df(1.4)),
                (ddf(0.3), ddf(1.4)),
                x,
            );
            assert!((v - f(x)).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn hermite_reproduces_cubic() {
        let f = |r: f64| r * r * r - 2.0 * r + 1.0;
        let df = |r: f64| 3.0 * r * r - 2.0;
        let a = Node {
            r: 0.5,
            y: f(0.5),
            q: 0.0,
            dy: df(0.5),
        };
        let b = Node {
            r: 1.5,
            y: f(1.5),
            q: 0.0,
            dy: df(1.5),
        };
        for i in 0..=10 {
            let r = 0.5 + i as f64 / 10.0;
            assert!((hermite(&a, &b, r) - f(r)).abs() < 1e-13);
        }
    }
}
