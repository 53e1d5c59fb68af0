//! Method-of-lines evolution of the radial flow
//! `u_t = (H^alpha + b) sqrt(1 + u_r^2)` on `[0, 1]` with `u_r(0) = 0` and
//! `u_r(1) = k`.
//!
//! Space is discretized by second-order central differences on a uniform grid
//! with one ghost node at each end, time by Heun's method (explicit RK2).

use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, EstimateReport, FieldSample};
use crate::error::{Error, Result};
use crate::flow::{curvature_unchecked, FlowParams};
use crate::io::g15;
use crate::profile::ProfileSolution;
use crate::speed::{translating_solution, SpeedOptions};

/// Default Courant number for the diffusive stability bound.
pub const CFL: f64 = 0.2;
/// Smallest admissible grid size `M` (number of intervals).
pub const MIN_INTERVALS: usize = 64;
/// `|H|` below this fraction of `max |H|` counts as a sign loss.
pub const SIGN_LOSS_RATIO: f64 = 1e-8;

type Func = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// Initial height `u0` on `[0, 1]`.
pub enum InitialData {
    /// Closed form, with optional exact first and second derivatives.
    Analytic {
        u: Func,
        du: Option<Func>,
        d2u: Option<Func>,
    },
    /// Nodal values on the evolution grid (`M + 1` entries).
    Samples(Vec<f64>),
}

impl std::fmt::Debug for InitialData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InitialData::Analytic { du, d2u, .. } => f
                .debug_struct("Analytic")
                .field("du", &du.is_some())
                .field("d2u", &d2u.is_some())
                .finish(),
            InitialData::Samples(v) => f.debug_tuple("Samples").field(&v.len()).finish(),
        }
    }
}

impl InitialData {
    pub fn analytic(
        u: impl Fn(f64) -> f64 + Send + Sync + 'static,
        du: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2u: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        InitialData::Analytic {
            u: Box::new(u),
            du: Some(Box::new(du)),
            d2u: Some(Box::new(d2u)),
        }
    }

    pub fn function(u: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        InitialData::Analytic {
            u: Box::new(u),
            du: None,
            d2u: None,
        }
    }

    pub fn samples(u: Vec<f64>) -> Self {
        InitialData::Samples(u)
    }

    /// `k r^2 / 2`.
    pub fn quadratic(k: f64) -> Self {
        Self::analytic(move |r| 0.5 * k * r * r, move |r| k * r, move |_| k)
    }

    /// Spherical cap through the origin meeting `r = 1` with slope `k`,
    /// convex for `k > 0` and concave for `k < 0`.
    pub fn sphere_cap(k: f64) -> Result<Self> {
        if k == 0.0 || !k.is_finite() {
            return Err(Error::InvalidInput(format!(
                "sphere cap needs a finite nonzero slope, got {k}"
            )));
        }
        let radius = (1.0 + 1.0 / (k * k)).sqrt();
        let s = k.signum();
        let rr = radius * radius;
        Ok(Self::analytic(
            move |r| s * (radius - (rr - r * r).sqrt()),
            move |r| s * r / (rr - r * r).sqrt(),
            move |r| s * rr / (rr - r * r).powf(1.5),
        ))
    }

    /// The profile `Phi` of a translating solution with speed `c`.
    ///
    /// `Phi''` comes from the profile equation itself, so the hypotheses are
    /// checked against exact nodal curvature.
    pub fn translating(profile: &ProfileSolution, c: f64) -> Self {
        let params = profile.params;
        let (pu, pd, pdd) = (profile.clone(), profile.clone(), profile.clone());
        Self::analytic(
            move |r| pu.phi_at(r).unwrap_or(f64::NAN),
            move |r| pd.psi_at(r).unwrap_or(f64::NAN),
            move |r| match pdd.psi_at(r) {
                Ok(psi) => profile_second_derivative(&params, c, r, psi),
                Err(_) => f64::NAN,
            },
        )
    }

    /// Adds `amplitude * (1 - r^2)^2`, which leaves both endpoint slopes unchanged.
    pub fn with_bump(self, amplitude: f64) -> Self {
        let bump = move |r: f64| amplitude * (1.0 - r * r) * (1.0 - r * r);
        let dbump = move |r: f64| -4.0 * amplitude * r * (1.0 - r * r);
        let d2bump = move |r: f64| amplitude * (12.0 * r * r - 4.0);
        match self {
            InitialData::Analytic { u, du, d2u } => InitialData::Analytic {
                u: Box::new(move |r| u(r) + bump(r)),
                du: du.map(|f| Box::new(move |r| f(r) + dbump(r)) as Func),
                d2u: d2u.map(|f| Box::new(move |r| f(r) + d2bump(r)) as Func),
            },
            InitialData::Samples(v) => {
                let m = v.len().saturating_sub(1).max(1) as f64;
                InitialData::Samples(
                    v.iter()
                        .enumerate()
                        .map(|(i, x)| x + bump(i as f64 / m))
                        .collect(),
                )
            }
        }
    }

    /// Adds the constant `d`.
    pub fn shifted(self, d: f64) -> Self {
        match self {
            InitialData::Analytic { u, du, d2u } => InitialData::Analytic {
                u: Box::new(move |r| u(r) + d),
                du,
                d2u,
            },
            InitialData::Samples(v) => InitialData::Samples(v.into_iter().map(|x| x + d).collect()),
        }
    }
}

/// `Phi''(r)` of the profile with speed `c` and slope `psi = Phi'(r)`.
fn profile_second_derivative(params: &FlowParams, c: f64, r: f64, psi: f64) -> f64 {
    let xi = (1.0 + psi * psi).sqrt();
    let h = match params.pow_inv_alpha(c / xi - params.b) {
        Ok(h) => h,
        Err(_) => return f64::NAN,
    };
    if r == 0.0 {
        return h / params.dim();
    }
    xi * xi * xi * (h - (params.dim() - 1.0) * psi / (r * xi))
}

/// Discrete derivatives, curvature and velocity on the grid.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Fields {
    pub ur: Vec<f64>,
    pub urr: Vec<f64>,
    pub h: Vec<f64>,
    pub ut: Vec<f64>,
}

impl Fields {
    fn zeros(n: usize) -> Self {
        Fields {
            ur: vec![0.0; n],
            urr: vec![0.0; n],
            h: vec![0.0; n],
            ut: vec![0.0; n],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvolutionState {
    pub params: FlowParams,
    /// Finite boundary slope.
    pub k: f64,
    pub r_grid: Vec<f64>,
    pub dr: f64,
    pub u: Vec<f64>,
    pub t: f64,
    /// Fields of the current `u`.
    pub fields: Fields,
    pub step_count: u64,
    pub cfl: f64,
    /// `u0''` at the nodes, exact when the initial data supplied it.
    pub u0_rr: Vec<f64>,
    /// `H(r, 0)` at the nodes, exact when the initial data supplied `u0'` and `u0''`.
    pub h0: Vec<f64>,
    /// Expected sign of `H`.
    pub h_sign: f64,
    #[serde(skip)]
    stage_u: Vec<f64>,
    #[serde(skip)]
    stage: Fields,
}

impl EvolutionState {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Trajectory snapshot rows `t,r,u,ur,urr,H` without a header.
    pub fn snapshot_rows(&self) -> String {
        let mut s = String::new();
        let f = &self.fields;
        for i in 0..self.len() {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                g15(self.t),
                g15(self.r_grid[i]),
                g15(self.u[i]),
                g15(f.ur[i]),
                g15(f.urr[i]),
                g15(f.h[i])
            ));
        }
        s
    }
}

fn eval_fields(
    params: &FlowParams,
    k: f64,
    dr: f64,
    r: &[f64],
    u: &[f64],
    out: &mut Fields,
) -> Result<()> {
    let m = u.len() - 1;
    let n = params.dim();
    let inv2 = 0.5 / dr;
    let inv_sq = 1.0 / (dr * dr);
    for i in 0..=m {
        let left = if i == 0 { u[1] } else { u[i - 1] };
        let right = if i == m {
            u[m - 1] + 2.0 * dr * k
        } else {
            u[i + 1]
        };
        let ur = if i == 0 {
            0.0
        } else if i == m {
            k
        } else {
            (right - left) * inv2
        };
        let urr = (right - 2.0 * u[i] + left) * inv_sq;
        let h = curvature_unchecked(r[i], ur, urr, n);
        let speed = if params.alpha == 1.0 {
            h
        } else {
            params.pow_alpha(h)?
        };
        out.ur[i] = ur;
        out.urr[i] = urr;
        out.h[i] = h;
        out.ut[i] = (speed + params.b) * (1.0 + ur * ur).sqrt();
    }
    Ok(())
}

fn check_sign(state_t: f64, r: &[f64], h: &[f64], sign: f64, alpha: f64) -> Result<()> {
    if alpha == 1.0 {
        return Ok(());
    }
    let scale = h.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    for (i, &x) in h.iter().enumerate() {
        if !(x * sign > SIGN_LOSS_RATIO * scale) {
            return Err(Error::SignLoss {
                t: state_t,
                r: r[i],
                h: x,
            });
        }
    }
    Ok(())
}

/// Builds the grid `r_i = i / m` and validates `u0` against `u_r(0) = 0`, `u_r(1) = k`.
///
/// Endpoint slopes are checked with first-order one-sided differences, which
/// must match to within `dr (1 + |u''|)`.
pub fn init_state(u0: &InitialData, params: &FlowParams, m: usize) -> Result<EvolutionState> {
    params.validate()?;
    if m < MIN_INTERVALS {
        return Err(Error::InvalidInput(format!(
            "grid needs at least {MIN_INTERVALS} intervals, got {m}"
        )));
    }
    let k = params
        .slope()?
        .finite()
        .ok_or_else(|| Error::InvalidInput("evolution needs a finite boundary slope".into()))?;
    let dr = 1.0 / m as f64;
    let r_grid: Vec<f64> = (0..=m).map(|i| i as f64 * dr).collect();
    let u: Vec<f64> = match u0 {
        InitialData::Analytic { u, .. } => r_grid.iter().map(|&r| u(r)).collect(),
        InitialData::Samples(v) => {
            if v.len() != m + 1 {
                return Err(Error::GridMismatch(format!(
                    "{} initial samples for a grid of {} nodes",
                    v.len(),
                    m + 1
                )));
            }
            v.clone()
        }
    };
    if let Some(i) = u.iter().position(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "u0 is not finite at r = {}",
            r_grid[i]
        )));
    }

    let d2 = |i: usize| (u[i + 2] - 2.0 * u[i + 1] + u[i]) / (dr * dr);
    let slope0 = (u[1] - u[0]) / dr;
    let slope1 = (u[m] - u[m - 1]) / dr;
    let tol0 = dr * (1.0 + d2(0).abs());
    let tol1 = dr * (1.0 + d2(m - 2).abs());
    if slope0.abs() > tol0 {
        return Err(Error::Compatibility(format!(
            "u0'(0) ~ {slope0} but the axis condition needs u0'(0) = 0"
        )));
    }
    if (slope1 - k).abs() > tol1 {
        return Err(Error::Compatibility(format!(
            "u0'(1) ~ {slope1} but the boundary condition needs u0'(1) = k = {k}"
        )));
    }

    let mut fields = Fields::zeros(m + 1);
    eval_fields(params, k, dr, &r_grid, &u, &mut fields).map_err(|e| match e {
        Error::Domain(msg) => Error::InvalidInput(format!("initial curvature: {msg}")),
        e => e,
    })?;

    let (u0_rr, h0) = match u0 {
        InitialData::Analytic {
            du: Some(du),
            d2u: Some(d2u),
            ..
        } => {
            let rr: Vec<f64> = r_grid.iter().map(|&r| d2u(r)).collect();
            let h: Vec<f64> = r_grid
                .iter()
                .zip(&rr)
                .map(|(&r, &urr)| {
                    curvature_unchecked(r, if r == 0.0 { 0.0 } else { du(r) }, urr, params.dim())
                })
                .collect();
            (rr, h)
        }
        _ => (fields.urr.clone(), fields.h.clone()),
    };

    let h_sign = if k != 0.0 {
        k.signum()
    } else {
        let big = fields
            .h
            .iter()
            .fold(0.0f64, |a, &x| if x.abs() > a.abs() { x } else { a });
        big.signum()
    };

    Ok(EvolutionState {
        params: *params,
        k,
        stage_u: vec![0.0; m + 1],
        stage: Fields::zeros(m + 1),
        r_grid,
        dr,
        u,
        t: 0.0,
        fields,
        step_count: 0,
        cfl: CFL,
        u0_rr,
        h0,
        h_sign,
    })
}

/// Which existence-and-estimate hypothesis the initial data satisfies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HypothesisTag {
    A,
    B,
    C,
    D,
    None,
}

impl HypothesisTag {
    pub fn as_str(self) -> &'static str {
        match self {
            HypothesisTag::A => "A",
            HypothesisTag::B => "B",
            HypothesisTag::C => "C",
            HypothesisTag::D => "D",
            HypothesisTag::None => "NONE",
        }
    }
}

impl std::fmt::Display for HypothesisTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tag: HypothesisTag,
    /// The inequalities that held, as evaluated.
    pub witnessed: Vec<String>,
}

fn min_of(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(f64::INFINITY, f64::min)
}

fn max_of(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(f64::NEG_INFINITY, f64::max)
}

/// Checks the four sign conditions on `(b, k, u0)` in order and returns the first that holds.
pub fn check_hypotheses(state: &EvolutionState) -> Hypothesis {
    let p = &state.params;
    let (b, k, n) = (p.b, state.k, p.dim());
    let h0 = &state.h0;
    // H^alpha + b on the grid; NaN where the power is undefined.
    let forcing = || {
        h0.iter()
            .map(move |&h| p.pow_alpha(h).map(|x| x + b).unwrap_or(f64::NAN))
    };
    let min_h = min_of(h0.iter().copied());
    let min_rr = min_of(state.u0_rr.iter().copied());
    let max_rr = max_of(state.u0_rr.iter().copied());
    let min_forcing = forcing().fold(
        f64::INFINITY,
        |a, x| if x.is_nan() { f64::NAN } else { a.min(x) },
    );
    let tilt = (1.0 + k * k).sqrt();

    if b == 0.0 && k > 0.0 && min_h > 0.0 {
        return Hypothesis {
            tag: HypothesisTag::A,
            witnessed: vec![
                format!("b = 0 < k = {k}"),
                format!("min H(r,0) = {min_h} > 0"),
            ],
        };
    }
    if b < 0.0 && k > 0.0 {
        if let Ok(bp) = p.pow_inv_alpha(-b) {
            if bp * tilt < k * n && min_forcing > 0.0 {
                return Hypothesis {
                    tag: HypothesisTag::B,
                    witnessed: vec![
                        format!("b = {b} < 0 < k = {k}"),
                        format!(
                            "(-b)^(1/alpha) sqrt(1+k^2) = {} < kN = {}",
                            bp * tilt,
                            k * n
                        ),
                        format!("min H^alpha(r,0) + b = {min_forcing} > 0"),
                    ],
                };
            }
        }
    }
    if b > 0.0 && k > 0.0 && min_rr > 0.0 {
        return Hypothesis {
            tag: HypothesisTag::C,
            witnessed: vec![
                format!("b = {b} > 0, k = {k} > 0"),
                format!("min u0''(r) = {min_rr} > 0"),
            ],
        };
    }
    if p.is_odd() && b > 0.0 && k < 0.0 {
        if let Ok(bp) = p.pow_inv_alpha(b) {
            if bp * tilt > -k * n && max_rr < 0.0 && min_forcing > 0.0 {
                return Hypothesis {
                    tag: HypothesisTag::D,
                    witnessed: vec![
                        format!("alpha = {} odd-rational, b = {b} > 0 > k = {k}", p.alpha),
                        format!("b^(1/alpha) sqrt(1+k^2) = {} > -kN = {}", bp * tilt, -k * n),
                        format!("max u0''(r) = {max_rr} < 0"),
                        format!("min H^alpha(r,0) + b = {min_forcing} > 0"),
                    ],
                };
            }
        }
    }
    Hypothesis {
        tag: HypothesisTag::None,
        witnessed: Vec::new(),
    }
}

/// Largest stable time step for the current state:
/// `cfl * min(1, 2/N) * dr^2 * min xi^2 / (alpha |H|^(alpha-1))`.
///
/// The `2/N` factor covers the axis node, where the discrete operator is `N` times the
/// one-dimensional second difference. With `cfl <= 0.25` each Euler stage of the Heun
/// step is then monotone, so the step preserves ordering.
pub fn stable_dt(state: &EvolutionState) -> f64 {
    let p = &state.params;
    let f = &state.fields;
    let mut coeff = 0.0f64;
    for i in 0..state.len() {
        let xi2 = 1.0 + f.ur[i] * f.ur[i];
        let d = if p.alpha == 1.0 {
            1.0 / xi2
        } else {
            p.alpha * f.h[i].abs().powf(p.alpha - 1.0) / xi2
        };
        coeff = coeff.max(d);
    }
    let axis = (2.0 / p.dim()).min(1.0);
    if coeff == 0.0 {
        return state.cfl * axis * state.dr * state.dr;
    }
    state.cfl * axis * state.dr * state.dr / coeff
}

/// One Heun step of size `dt`. The state is left unchanged on error.
pub fn step(state: &mut EvolutionState, dt: f64) -> Result<()> {
    let bound = stable_dt(state);
    if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
        return Err(Error::CflViolation { dt, bound });
    }
    let alpha = state.params.alpha;
    check_sign(state.t, &state.r_grid, &state.fields.h, state.h_sign, alpha)?;
    let m1 = state.len();
    for i in 0..m1 {
        state.stage_u[i] = state.u[i] + dt * state.fields.ut[i];
    }
    eval_fields(
        &state.params,
        state.k,
        state.dr,
        &state.r_grid,
        &state.stage_u,
        &mut state.stage,
    )?;
    check_sign(
        state.t + dt,
        &state.r_grid,
        &state.stage.h,
        state.h_sign,
        alpha,
    )?;
    for i in 0..m1 {
        state.stage_u[i] = state.u[i] + 0.5 * dt * (state.fields.ut[i] + state.stage.ut[i]);
    }
    if state.stage_u.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { t: state.t + dt });
    }
    eval_fields(
        &state.params,
        state.k,
        state.dr,
        &state.r_grid,
        &state.stage_u,
        &mut state.stage,
    )?;
    if state.stage.ut.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { t: state.t + dt });
    }
    std::mem::swap(&mut state.u, &mut state.stage_u);
    std::mem::swap(&mut state.fields, &mut state.stage);
    state.t += dt;
    state.step_count += 1;
    Ok(())
}

/// Translating solution `Phi~(r) + c~ t` sampled on an evolution grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TsReference {
    pub c_tilde: f64,
    pub phi: Vec<f64>,
}

impl TsReference {
    pub fn from_profile(c_tilde: f64, profile: &ProfileSolution, r_grid: &[f64]) -> Result<Self> {
        let phi = r_grid
            .iter()
            .map(|&r| profile.phi_at(r))
            .collect::<Result<Vec<_>>>()?;
        Ok(TsReference { c_tilde, phi })
    }

    /// Solves for `(c~, Phi~)` of `params` and samples it on `r_grid`.
    pub fn solve(
        params: &FlowParams,
        r_grid: &[f64],
        opts: &SpeedOptions,
    ) -> Result<(Self, ProfileSolution)> {
        let (c, profile) = translating_solution(params, opts)?;
        Ok((Self::from_profile(c, &profile, r_grid)?, profile))
    }
}

/// `(sup |u - Phi~ - c~ t|, sup - inf of u - Phi~ - c~ t)` on the grid.
pub fn convergence_metric(state: &EvolutionState, reference: &TsReference) -> Result<(f64, f64)> {
    let (raw, lo, hi, _) = deviation_stats(state, reference)?;
    Ok((raw, hi - lo))
}

fn deviation_stats(
    state: &EvolutionState,
    reference: &TsReference,
) -> Result<(f64, f64, f64, f64)> {
    if reference.phi.len() != state.len() {
        return Err(Error::GridMismatch(format!(
            "reference has {} nodes, state has {}",
            reference.phi.len(),
            state.len()
        )));
    }
    let shift = reference.c_tilde * state.t;
    let last = state.len() - 1;
    let (mut raw, mut lo, mut hi, mut sum) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for (i, (u, phi)) in state.u.iter().zip(&reference.phi).enumerate() {
        let d = u - phi - shift;
        raw = raw.max(d.abs());
        lo = lo.min(d);
        hi = hi.max(d);
        // Trapezoidal weights over [0, 1].
        sum += if i == 0 || i == last { 0.5 * d } else { d };
    }
    Ok((raw, lo, hi, sum / last as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSample {
    pub t: f64,
    /// `sup |u - Phi~ - c~ t|`.
    pub raw: f64,
    /// `sup |u - Phi~ - c~ t - offset|`.
    pub corrected: f64,
    pub oscillation: f64,
    /// Mean of `u - Phi~ - c~ t` over `[0, 1]` (trapezoidal rule).
    pub offset: f64,
    /// `u(0, t)`.
    pub axis_height: f64,
    /// Axis speed since the previous sample.
    pub front_speed: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub c_tilde: f64,
    pub samples: Vec<ConvergenceSample>,
}

impl ConvergenceRecord {
    pub fn new(c_tilde: f64) -> Self {
        ConvergenceRecord {
            c_tilde,
            samples: Vec::new(),
        }
    }

    /// Appends a sample of `state`. Times must increase strictly.
    pub fn push(&mut self, state: &EvolutionState, reference: &TsReference) -> Result<()> {
        if let Some(last) = self.samples.last() {
            if !(state.t > last.t) {
                return Err(Error::InvalidInput(format!(
                    "sample time {} does not follow {}",
                    state.t, last.t
                )));
            }
        }
        let (raw, lo, hi, offset) = deviation_stats(state, reference)?;
        let axis_height = state.u[0];
        let front_speed = self
            .samples
            .last()
            .map(|s| (axis_height - s.axis_height) / (state.t - s.t));
        self.samples.push(ConvergenceSample {
            t: state.t,
            raw,
            corrected: (hi - offset).max(offset - lo),
            oscillation: hi - lo,
            offset,
            axis_height,
            front_speed,
        });
        Ok(())
    }

    /// The sample closest in time to `t`.
    pub fn at(&self, t: f64) -> Option<&ConvergenceSample> {
        self.samples
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
    }

    /// `(u(0, t2) - u(0, t1)) / (t2 - t1)` from the samples nearest to `t1` and `t2`.
    pub fn front_speed(&self, t1: f64, t2: f64) -> Option<f64> {
        let (a, b) = (self.at(t1)?, self.at(t2)?);
        (b.t > a.t).then(|| (b.axis_height - a.axis_height) / (b.t - a.t))
    }
}

/// Receives the state at every sampling time of [`evolve`].
pub trait Observer {
    fn observe(&mut self, state: &EvolutionState) -> Result<()>;
}

/// Long-format CSV `t,r,u,ur,urr,H` of snapshots taken at a fixed cadence.
#[derive(Clone, Debug)]
pub struct SnapshotRecorder {
    every: f64,
    next: f64,
    csv: String,
}

impl SnapshotRecorder {
    pub fn new(every: f64) -> Self {
        SnapshotRecorder {
            every,
            next: f64::NEG_INFINITY,
            csv: String::from("t,r,u,ur,urr,H\n"),
        }
    }

    pub fn to_csv(&self) -> &str {
        &self.csv
    }
}

impl Observer for SnapshotRecorder {
    fn observe(&mut self, state: &EvolutionState) -> Result<()> {
        if state.t + 1e-12 >= self.next {
            self.csv.push_str(&state.snapshot_rows());
            self.next = state.t + self.every;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    /// Sampling cadence for the convergence record, the estimate windows and the observers.
    pub sample_every: f64,
    /// Run even when the initial data meets none of the hypotheses.
    pub allow_unmet_hypotheses: bool,
    /// Estimate windows; defaults to `[0, T/2]` and `[0, T]`.
    pub windows: Option<Vec<(f64, f64)>>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            sample_every: 0.05,
            allow_unmet_hypotheses: false,
            windows: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Evolution {
    pub state: EvolutionState,
    pub hypothesis: Hypothesis,
    pub record: ConvergenceRecord,
    pub report: EstimateReport,
}

/// Steps `state` to `t_final` with the largest stable time steps, landing exactly on
/// every sampling time.
pub fn evolve(
    mut state: EvolutionState,
    t_final: f64,
    reference: &TsReference,
    opts: &EvolveOptions,
    observers: &mut [&mut dyn Observer],
) -> Result<Evolution> {
    if !(opts.sample_every > 0.0) || !(t_final > state.t) {
        return Err(Error::InvalidInput(format!(
            "need sample_every > 0 and t_final > t, got {} and {t_final}",
            opts.sample_every
        )));
    }
    let hypothesis = check_hypotheses(&state);
    if hypothesis.tag == HypothesisTag::None && !opts.allow_unmet_hypotheses {
        return Err(Error::HypothesisNotMet);
    }
    let t_start = state.t;
    let mut record = ConvergenceRecord::new(reference.c_tilde);
    let mut samples: Vec<FieldSample> = Vec::new();
    let mut sample = |state: &EvolutionState,
                      record: &mut ConvergenceRecord,
                      observers: &mut [&mut dyn Observer]|
     -> Result<()> {
        record.push(state, reference)?;
        samples.push(FieldSample::from_state(state, reference.c_tilde));
        observers.iter_mut().try_for_each(|o| o.observe(state))
    };
    sample(&state, &mut record, observers)?;
    let mut next = t_start + opts.sample_every;
    while state.t < t_final {
        let target = next.min(t_final);
        let dt = stable_dt(&state).min(target - state.t);
        step(&mut state, dt)?;
        if target - state.t <= 1e-12 * target.abs().max(1.0) {
            state.t = target;
            sample(&state, &mut record, observers)?;
            next = target + opts.sample_every;
        }
    }
    let windows = opts.windows.clone().unwrap_or_else(|| {
        let mid = t_start + 0.5 * (t_final - t_start);
        vec![(t_start, mid), (t_start, t_final)]
    });
    let report = diagnostics::assemble_report(&samples, &windows);
    Ok(Evolution {
        state,
        hypothesis,
        record,
        report,
    })
}
