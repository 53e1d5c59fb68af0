//! Selection of the translating speed `c~(b, k)` with `Psi(1; c~, b) = k`, and of
//! the speed `c(b, R)` whose profile blows up exactly at radius `R`.
//!
//! `c -> Psi(1; c, b)` is strictly increasing, so both problems are solved by
//! bisection. A profile that blows up inside the unit ball is assigned the
//! signed infinite slope at `r = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowParams, Slope};
use crate::profile::{integrate_psi_epsilon, integrate_zeta, IntegratorOptions, ProfileSolution};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedCase {
    /// `b = 0 < k`.
    A,
    /// `b < 0 < k` with `(-b)^{1/alpha} sqrt(1+k^2) < k N`.
    B,
    /// `b > 0`, `k > 0`.
    C,
    /// Odd alpha, `b > 0 > k` with `b^{1/alpha} sqrt(1+k^2) > -k N`.
    D,
    /// `b > 0 = k` with `alpha = 1`: the flat profile moving at speed `b`.
    Flat,
}

impl SpeedCase {
    pub fn as_str(self) -> &'static str {
        match self {
            SpeedCase::A => "a",
            SpeedCase::B => "b",
            SpeedCase::C => "c",
            SpeedCase::D => "d",
            SpeedCase::Flat => "flat",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub reason: String,
}

impl std::fmt::Display for Rejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.reason)
    }
}

fn reject<T>(reason: String) -> std::result::Result<T, Rejection> {
    Err(Rejection { reason })
}

/// Which of the solvable configurations `(b, k)` belongs to.
pub fn admissibility(params: &FlowParams) -> std::result::Result<SpeedCase, Rejection> {
    if let Err(e) = params.validate() {
        return reject(e.to_string());
    }
    let Some(k) = params.k else {
        return reject("boundary slope k is required".into());
    };
    let b = params.b;
    let n = params.dim();
    let bpow = b.abs().powf(params.inv_alpha());
    match k {
        Slope::Finite(k) if k > 0.0 => {
            if b == 0.0 {
                Ok(SpeedCase::A)
            } else if b > 0.0 {
                Ok(SpeedCase::C)
            } else {
                let lhs = bpow * (1.0 + k * k).sqrt();
                if lhs < k * n {
                    Ok(SpeedCase::B)
                } else {
                    reject(format!(
                        "b < 0 < k needs (-b)^(1/alpha) sqrt(1+k^2) < k N, but {lhs} >= {}",
                        k * n
                    ))
                }
            }
        }
        Slope::Finite(k) if k < 0.0 => {
            if b <= 0.0 {
                return reject(format!("k < 0 needs b > 0, got b = {b}"));
            }
            if !params.is_odd() {
                return reject(
                    "b > 0 > k gives negative curvature; alpha must be q/p with q, p odd".into(),
                );
            }
            let lhs = bpow * (1.0 + k * k).sqrt();
            if lhs > -k * n {
                Ok(SpeedCase::D)
            } else {
                reject(format!(
                    "b > 0 > k needs b^(1/alpha) sqrt(1+k^2) > -k N, but {lhs} <= {}",
                    -k * n
                ))
            }
        }
        Slope::Finite(_) => {
            if b > 0.0 && params.alpha == 1.0 {
                Ok(SpeedCase::Flat)
            } else if b > 0.0 {
                reject(format!(
                    "b > 0 = k is degenerate unless alpha = 1 (alpha = {})",
                    params.alpha
                ))
            } else {
                reject(format!("k = 0 needs b > 0, got b = {b}"))
            }
        }
        Slope::PosInfinity => {
            // R_inf never drops below (N-1)(-b)^(-1/alpha), so R_inf = 1 also
            // needs (-b)^(1/alpha) >= N-1.
            if b < 0.0 && bpow < n && bpow >= n - 1.0 {
                Ok(SpeedCase::B)
            } else if b < 0.0 && bpow >= n {
                reject(format!(
                    "k = +inf needs (-b)^(1/alpha) < N, but {bpow} >= {n}"
                ))
            } else if b < 0.0 {
                reject(format!(
                    "k = +inf needs (-b)^(1/alpha) >= N-1 since R_inf >= (N-1)(-b)^(-1/alpha) > 1, but {bpow} < {}",
                    n - 1.0
                ))
            } else {
                reject(format!(
                    "k = +inf is only attainable for b < 0, got b = {b}"
                ))
            }
        }
        Slope::NegInfinity => {
            if b > 0.0 && !params.is_odd() {
                reject("b > 0 > k gives negative curvature; alpha must be q/p with q, p odd".into())
            } else if b > 0.0 && bpow > n {
                Ok(SpeedCase::D)
            } else if b > 0.0 {
                reject(format!("k = -inf needs b^(1/alpha) > N, but {bpow} <= {n}"))
            } else {
                reject(format!(
                    "k = -inf is only attainable for b > 0, got b = {b}"
                ))
            }
        }
    }
}

fn admissible(params: &FlowParams) -> Result<SpeedCase> {
    admissibility(params).map_err(|r| Error::Regime(r.reason))
}

/// Integrator used to evaluate `Psi(1; c, b)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Zeta,
    Epsilon(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedOptions {
    /// Relative bracket width at which bisection stops.
    pub tol: f64,
    /// Boundary mismatch tolerance, relative to `max(1, |k|)`.
    pub tol_k: f64,
    pub max_iter: usize,
    /// Upper limit for the geometric march on `c`.
    pub c_max: f64,
    pub route: Route,
    pub integrator: IntegratorOptions,
}

impl Default for SpeedOptions {
    fn default() -> Self {
        SpeedOptions {
            tol: 1e-10,
            tol_k: 1e-8,
            max_iter: 400,
            c_max: 1e8,
            route: Route::Zeta,
            integrator: IntegratorOptions {
                cross_check: false,
                ..IntegratorOptions::default()
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BracketStep {
    pub c_lo: f64,
    pub c_hi: f64,
    /// `Psi(1)` (or `R_inf` for infinite `k`) at the evaluated point.
    pub value_mid: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedResult {
    pub params: FlowParams,
    pub case: SpeedCase,
    pub c_tilde: f64,
    pub bracket_history: Vec<BracketStep>,
    pub iterations: usize,
    /// `Psi(1; c~) - k`, or `R_inf(c~) - 1` for infinite `k`.
    pub residual: f64,
    pub route: Route,
    pub profile: ProfileSolution,
}

fn profile_to(
    params: &FlowParams,
    c: f64,
    r: f64,
    route: Route,
    o: &IntegratorOptions,
) -> Result<ProfileSolution> {
    let mut o = *o;
    o.r_stop = Some(r);
    o.cross_check = false;
    match route {
        Route::Zeta => integrate_zeta(params, c, &o),
        Route::Epsilon(eps) => integrate_psi_epsilon(params, c, eps, &o),
    }
}

fn slope_of(sol: &ProfileSolution, r: f64) -> f64 {
    if sol.reached_cutoff && sol.r_last() < r {
        if sol.regime.orientation() < 0.0 {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    } else {
        sol.psi_last()
    }
}

/// `Psi(1; c, b)`, infinite with the regime's sign when the profile blows up before `r = 1`.
pub fn boundary_slope(
    params: &FlowParams,
    c: f64,
    route: Route,
    o: &IntegratorOptions,
) -> Result<f64> {
    let sol = profile_to(params, c, 1.0, route, o)?;
    Ok(slope_of(&sol, 1.0))
}

/// Bracket `[c_lo, c_hi]` on which `Psi(1; c) - k` changes sign.
pub fn bracket_speed(params: &FlowParams, opts: &SpeedOptions) -> Result<(f64, f64)> {
    let case = admissible(params)?;
    let k = params.slope()?;
    let n = params.dim();
    let b = params.b;
    match (case, k) {
        (SpeedCase::Flat, _) => Ok((b, b)),
        (SpeedCase::A, Slope::Finite(k)) => Ok((0.0, n.powf(params.alpha) * (1.0 + k * k).sqrt())),
        (SpeedCase::C, Slope::Finite(k)) => {
            Ok((b, (n.powf(params.alpha) + b) * (1.0 + k * k).sqrt()))
        }
        (SpeedCase::D, _) => Ok((0.0, b)),
        (SpeedCase::B, k) => {
            let target = k.finite();
            let mut hi = (-b).max(1.0);
            loop {
                if hi > opts.c_max {
                    return Err(Error::BracketFailure(format!(
                        "no upper speed below {} for b = {b}, k = {k}",
                        opts.c_max
                    )));
                }
                let above = match target {
                    Some(k) => boundary_slope(params, hi, opts.route, &opts.integrator)? > k,
                    None => {
                        let sol = profile_to(params, hi, 1.0, opts.route, &opts.integrator)?;
                        sol.reached_cutoff
                    }
                };
                if above {
                    return Ok((0.0, hi));
                }
                hi *= 2.0;
            }
        }
        (case, k) => Err(Error::Regime(format!(
            "case {} does not admit k = {k}",
            case.as_str()
        ))),
    }
}

/// Bisection on a function increasing in `c`, with sign known at the bracket ends.
/// `eval` returns `(value, mismatch)` where the sign of `mismatch` steers the bracket.
struct Bisection {
    history: Vec<BracketStep>,
    evaluated: Vec<(f64, f64)>,
}

impl Bisection {
    fn run(
        lo: f64,
        hi: f64,
        opts: &SpeedOptions,
        tol_value: f64,
        mut eval: impl FnMut(f64) -> Result<(f64, f64)>,
    ) -> Result<(f64, f64, Bisection)> {
        let mut st = Bisection {
            history: Vec::new(),
            evaluated: Vec::new(),
        };
        let (mut lo, mut hi) = (lo, hi);
        let mut f_lo = f64::NEG_INFINITY;
        let mut f_hi = f64::INFINITY;
        let mut best: Option<(f64, f64)> = None;
        for it in 0..opts.max_iter {
            let width = hi - lo;
            let mid_b = 0.5 * (lo + hi);
            let small = width <= 1e-3 * mid_b.abs().max(1.0);
            let mut c = mid_b;
            if small && it % 2 == 1 && f_lo.is_finite() && f_hi.is_finite() && f_hi > f_lo {
                let s = lo - f_lo * (hi - lo) / (f_hi - f_lo);
                if s > lo + 0.01 * width && s < hi - 0.01 * width {
                    c = s;
                }
            }
            let (value, m) = eval(c)?;
            st.evaluated.push((c, m));
            if best.map(|(_, bm)| m.abs() < bm.abs()).unwrap_or(true) {
                best = Some((c, m));
            }
            if m < 0.0 {
                lo = c;
                f_lo = m;
            } else {
                hi = c;
                f_hi = m;
            }
            st.history.push(BracketStep {
                c_lo: lo,
                c_hi: hi,
                value_mid: value,
            });
            let (cb, mb) = best.unwrap();
            let narrow = hi - lo <= opts.tol * cb.max(1.0);
            if narrow && mb.abs() <= tol_value {
                st.check_monotone(tol_value)?;
                return Ok((cb, mb, st));
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(1e-300) {
                break;
            }
        }
        let (cb, mb) = best.unwrap_or((0.5 * (lo + hi), f64::NAN));
        Err(Error::NoConvergence(format!(
            "bracket [{lo}, {hi}] after {} evaluations, best c = {cb} with mismatch {mb:e}",
            st.evaluated.len()
        )))
    }

    fn check_monotone(&self, tol_value: f64) -> Result<()> {
        let mut pts = self.evaluated.clone();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in pts.windows(2) {
            if w[1].1 < w[0].1 - 10.0 * tol_value {
                return Err(Error::NonMonotone {
                    c_lo: w[0].0,
                    c_hi: w[1].0,
                });
            }
        }
        Ok(())
    }
}

/// The unique speed with `Psi(1; c, b) = k`.
pub fn find_speed(params: &FlowParams, opts: &SpeedOptions) -> Result<SpeedResult> {
    let case = admissible(params)?;
    let k = params.slope()?;
    let Slope::Finite(kf) = k else {
        let (_, mut res) = speed_for_radius(params, 1.0, opts)?;
        res.case = case;
        return Ok(res);
    };
    let io = opts.integrator;
    if case == SpeedCase::Flat {
        let profile = profile_to(params, params.b, 1.0, opts.route, &io)?;
        return Ok(SpeedResult {
            params: *params,
            case,
            c_tilde: params.b,
            bracket_history: Vec::new(),
            iterations: 0,
            residual: 0.0,
            route: opts.route,
            profile,
        });
    }
    let (lo, hi) = bracket_speed(params, opts)?;
    let tol_k = opts.tol_k * kf.abs().max(1.0);
    let (c, m, st) = Bisection::run(lo, hi, opts, tol_k, |c| {
        let v = boundary_slope(params, c, opts.route, &io)?;
        Ok((v, v - kf))
    })?;
    let profile = profile_to(params, c, 1.0, opts.route, &io)?;
    Ok(SpeedResult {
        params: *params,
        case,
        c_tilde: c,
        iterations: st.evaluated.len(),
        bracket_history: st.history,
        residual: m,
        route: opts.route,
        profile,
    })
}

/// Range of radii attained by `R_inf(., b)`. For b < 0 the lower end is
/// attained: `R_inf(c) = (N-1)(-b)^(-1/alpha)` for every c past a finite c*.
fn radius_range(params: &FlowParams) -> Result<(f64, f64, bool)> {
    let n = params.dim();
    let ia = params.inv_alpha();
    let b = params.b;
    if b < 0.0 {
        let s = (-b).powf(-ia);
        Ok(((n - 1.0) * s, n * s, true))
    } else if b > 0.0 && params.is_odd() {
        Ok((n * b.powf(-ia), f64::INFINITY, false))
    } else {
        Err(Error::Domain(format!(
            "no finite blow-up radius for b = {b} (need b < 0, or b > 0 with odd alpha)"
        )))
    }
}

fn speed_for_radius(
    params: &FlowParams,
    radius: f64,
    opts: &SpeedOptions,
) -> Result<(f64, SpeedResult)> {
    let (r_min, r_max, decreasing) = radius_range(params)?;
    let low_ok = if decreasing {
        radius >= r_min * (1.0 - 1e-12)
    } else {
        radius > r_min
    };
    if !(low_ok && radius < r_max) {
        let open = if decreasing { '[' } else { '(' };
        return Err(Error::Domain(format!(
            "radius {radius} outside the attainable range {open}{r_min}, {r_max})"
        )));
    }
    let b = params.b;
    let io = opts.integrator;
    // Sign of R - R_inf(c): increasing in c in both families once oriented.
    let orient = if decreasing { 1.0 } else { -1.0 };
    let eval = |c: f64| -> Result<(f64, f64)> {
        let sol = profile_to(params, c, radius, opts.route, &io)?;
        match sol.r_inf {
            Some(ri) if sol.reached_cutoff => Ok((ri.estimate, orient * (radius - ri.estimate))),
            _ => Ok((f64::INFINITY, -orient * f64::INFINITY)),
        }
    };
    let (lo, hi) = if decreasing {
        let mut hi = (-b).max(1.0);
        loop {
            if hi > opts.c_max {
                return Err(Error::BracketFailure(format!(
                    "no speed below {} blows up before r = {radius}",
                    opts.c_max
                )));
            }
            if eval(hi)?.1 >= 0.0 {
                break (0.0, hi);
            }
            hi *= 2.0;
        }
    } else {
        (0.0, b)
    };
    let tol_r = opts.tol_k * radius.max(1.0);
    let (mut c, m, st) = Bisection::run(lo, hi, opts, tol_r, eval)?;
    if decreasing && radius <= r_min * (1.0 + 1e-12) {
        // Every speed past c* blows up on the floor; report c* itself, the
        // upper end of the final bracket.
        c = st.history.last().map_or(c, |s| s.c_hi);
    }
    let mut o = io;
    o.r_stop = None;
    o.cross_check = false;
    let profile = match opts.route {
        Route::Zeta => integrate_zeta(params, c, &o)?,
        Route::Epsilon(eps) => integrate_psi_epsilon(params, c, eps, &o)?,
    };
    let case = if decreasing {
        SpeedCase::B
    } else {
        SpeedCase::D
    };
    Ok((
        c,
        SpeedResult {
            params: *params,
            case,
            c_tilde: c,
            iterations: st.evaluated.len(),
            bracket_history: st.history,
            residual: -orient * m,
            route: opts.route,
            profile,
        },
    ))
}

/// The smallest speed whose profile blows up at `radius` (unique unless
/// `radius` is the b < 0 floor `(N-1)(-b)^(-1/alpha)`).
pub fn find_speed_for_radius(params: &FlowParams, radius: f64, opts: &SpeedOptions) -> Result<f64> {
    speed_for_radius(params, radius, opts).map(|(c, _)| c)
}

/// `(c~, Phi~)` with the profile on `[0, 1]`.
pub fn translating_solution(
    params: &FlowParams,
    opts: &SpeedOptions,
) -> Result<(f64, ProfileSolution)> {
    let res = find_speed(params, opts)?;
    if params.k.map(|k| k.finite().is_none()).unwrap_or(false) {
        return Err(Error::NotApplicable(
            "an infinite boundary slope has no profile on the closed unit interval".into(),
        ));
    }
    Ok((res.c_tilde, res.profile))
}
