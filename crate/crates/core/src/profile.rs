//! Translating-wave profiles `Phi(r; c, b)`.
//!
//! The primary route integrates `zeta = Psi / sqrt(1 + Psi^2)`, which obeys
//! `(zeta r^{N-1})' = (c sqrt(1 - zeta^2) - b)^{1/alpha} r^{N-1}`. Near the axis a
//! series start replaces the removable `0/0`. Once `|zeta|` passes one half the
//! unknown switches to the gap `g = 1 - |zeta|`, which keeps full relative
//! precision while the gradient blows up. In regimes with finite maximal radius
//! the integration stops at `g = delta` and the remaining distance to the
//! blow-up radius is extrapolated from the linear endpoint law.
//!
//! The regularized form with `(N-1)/(r + eps)` is a plain initial value problem
//! in `psi` and serves as an independent oracle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{classify_regime, pow_abs, r_inf_bounds, FlowParams, RegimeTag};
use crate::ode::{self, Node, ScalarOde, StepOptions, StepStats, Termination};

/// `|zeta|` at which the unknown switches from `zeta` to the gap.
const GAP_SWITCH: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorOptions {
    pub dr_init: f64,
    pub tol: f64,
    /// Blow-up threshold `delta`: stop once `|zeta| >= 1 - delta`.
    pub zeta_cutoff: f64,
    /// Radius cap for regimes without blow-up.
    pub r_max: f64,
    /// Stop at this radius in every regime (used when only `[0, r_stop]` matters).
    pub r_stop: Option<f64>,
    pub max_steps: usize,
    /// Compare against the regularized form after solving.
    pub cross_check: bool,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            dr_init: 1e-4,
            tol: 1e-10,
            zeta_cutoff: 1e-6,
            r_max: 10.0,
            r_stop: None,
            max_steps: 2_000_000,
            cross_check: true,
        }
    }
}

impl IntegratorOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta_cutoff > 0.0 && self.zeta_cutoff < 1.0) {
            return Err(Error::InvalidInput(format!(
                "zeta_cutoff must lie in (0, 1), got {}",
                self.zeta_cutoff
            )));
        }
        if !(self.tol > 0.0) || !(self.dr_init > 0.0) || !(self.r_max > 0.0) {
            return Err(Error::InvalidInput(
                "tol, dr_init and r_max must be positive".into(),
            ));
        }
        if let Some(rs) = self.r_stop {
            if !(rs > 0.0 && rs.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "r_stop must be positive, got {rs}"
                )));
            }
        }
        Ok(())
    }

    fn step_options(&self, h_init: f64) -> StepOptions {
        StepOptions {
            tol: self.tol,
            atol_y: 1e-30,
            atol_q: 1e-30,
            h_init,
            h_min: 1e-15,
            h_max: f64::INFINITY,
            max_steps: self.max_steps,
            stiff_switch: 2.0,
        }
    }
}

/// Which equation produced a profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileForm {
    Zeta,
    Epsilon(f64),
    /// Closed form (the flat profile `c = b`).
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RInfinity {
    pub estimate: f64,
    /// Bracket `[last node, extrapolate + last step]` intersected with the proven bounds.
    pub lo: f64,
    pub hi: f64,
    /// Upper end of the bracket before intersecting with the proven bounds.
    pub extrapolated_hi: f64,
    /// Leading-order linear extrapolation, for comparison.
    pub linear_estimate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub eps: Vec<f64>,
    /// `max |psi_eps - Psi|` on the shared interval, per `eps`.
    pub deviation: Vec<f64>,
    pub worst_r: Vec<f64>,
    pub interval: (f64, f64),
    /// Smallest `psi_eps - Psi` (oriented) over all nodes and all `eps`.
    pub min_margin: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSolution {
    pub params: FlowParams,
    pub c: f64,
    pub regime: RegimeTag,
    pub form: ProfileForm,
    pub r_grid: Vec<f64>,
    pub zeta: Vec<f64>,
    pub psi: Vec<f64>,
    pub phi: Vec<f64>,
    /// `1 - |zeta|`, carried at full relative precision.
    pub gap: Vec<f64>,
    pub dzeta: Vec<f64>,
    /// Whether integration stopped on the blow-up cutoff.
    pub reached_cutoff: bool,
    pub r_inf: Option<RInfinity>,
    pub phi_end: Option<f64>,
    /// Length of the last accepted step before the cutoff.
    pub last_step: f64,
    pub stats: StepStats,
    pub cross_check: Option<CrossCheck>,
}

/// Which side of the axis the slope points to for this regime.
fn orientation(regime: RegimeTag) -> f64 {
    regime.orientation()
}

impl ProfileSolution {
    pub fn len(&self) -> usize {
        self.r_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_grid.is_empty()
    }

    pub fn r_last(&self) -> f64 {
        *self.r_grid.last().unwrap()
    }

    pub fn psi_last(&self) -> f64 {
        *self.psi.last().unwrap()
    }

    fn locate(&self, r: f64) -> Result<usize> {
        let last = self.r_last();
        if !(r >= 0.0 && r <= last) {
            return Err(Error::InvalidInput(format!(
                "radius {r} outside the computed range [0, {last}]"
            )));
        }
        let i = self.r_grid.partition_point(|&x| x <= r);
        Ok(i.clamp(1, self.r_grid.len() - 1) - 1)
    }

    fn node_pair(&self, i: usize, y: &[f64], dy: &[f64]) -> (Node, Node) {
        let a = Node {
            r: self.r_grid[i],
            y: y[i],
            q: 0.0,
            dy: dy[i],
        };
        let b = Node {
            r: self.r_grid[i + 1],
            y: y[i + 1],
            q: 0.0,
            dy: dy[i + 1],
        };
        (a, b)
    }

    pub fn zeta_at(&self, r: f64) -> Result<f64> {
        if self.r_grid.len() == 1 {
            return Ok(self.zeta[0]);
        }
        let i = self.locate(r)?;
        let (a, b) = self.node_pair(i, &self.zeta, &self.dzeta);
        Ok(ode::hermite(&a, &b, r))
    }

    pub fn gap_at(&self, r: f64) -> Result<f64> {
        if self.r_grid.len() == 1 {
            return Ok(self.gap[0]);
        }
        let s = orientation(self.regime);
        let i = self.locate(r)?;
        let dgap: Vec<f64> = [self.dzeta[i], self.dzeta[i + 1]]
            .iter()
            .map(|d| -s * d)
            .collect();
        let a = Node {
            r: self.r_grid[i],
            y: self.gap[i],
            q: 0.0,
            dy: dgap[0],
        };
        let b = Node {
            r: self.r_grid[i + 1],
            y: self.gap[i + 1],
            q: 0.0,
            dy: dgap[1],
        };
        Ok(ode::hermite(&a, &b, r))
    }

    pub fn psi_at(&self, r: f64) -> Result<f64> {
        let s = orientation(self.regime);
        if s == 0.0 {
            self.locate(r)
                .or_else(|e| if self.len() == 1 { Ok(0) } else { Err(e) })?;
            return Ok(0.0);
        }
        let g = self.gap_at(r)?;
        if g > GAP_SWITCH {
            let z = self.zeta_at(r)?;
            Ok(z / ((1.0 - z) * (1.0 + z)).sqrt())
        } else {
            Ok(psi_from_gap(g, s))
        }
    }

    pub fn phi_at(&self, r: f64) -> Result<f64> {
        if self.r_grid.len() == 1 {
            return Ok(self.phi[0]);
        }
        let i = self.locate(r)?;
        let j = i + 1;
        Ok(ode::hermite5(
            (self.r_grid[i], self.r_grid[j]),
            (self.phi[i], self.phi[j]),
            (self.psi[i], self.psi[j]),
            (self.dpsi(i), self.dpsi(j)),
            r,
        ))
    }

    /// `Psi'` at node `i`.
    pub fn dpsi(&self, i: usize) -> f64 {
        let g = self.gap[i];
        let w = g * (2.0 - g);
        self.dzeta[i] / (w * w.sqrt())
    }

    /// CSV with header `r,zeta,psi,phi`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,zeta,psi,phi\n");
        for i in 0..self.len() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                crate::io::g15(self.r_grid[i]),
                crate::io::g15(self.zeta[i]),
                crate::io::g15(self.psi[i]),
                crate::io::g15(self.phi[i])
            ));
        }
        s
    }

    /// Copy of the profile restricted to `[0, r]`, ending exactly at `r`.
    pub fn truncated(&self, r: f64) -> Result<ProfileSolution> {
        let i = self.locate(r)?;
        let mut out = self.clone();
        let keep = i + 1;
        out.r_grid.truncate(keep);
        out.zeta.truncate(keep);
        out.psi.truncate(keep);
        out.phi.truncate(keep);
        out.gap.truncate(keep);
        out.dzeta.truncate(keep);
        if *out.r_grid.last().unwrap() < r {
            let z = self.zeta_at(r)?;
            let g = self.gap_at(r)?;
            let p = self.psi_at(r)?;
            let f = self.phi_at(r)?;
            let j = (i + 1).min(self.len() - 1);
            let dz = self.dzeta[i]
                + (self.dzeta[j] - self.dzeta[i]) * (r - self.r_grid[i])
                    / (self.r_grid[j] - self.r_grid[i]).max(f64::MIN_POSITIVE);
            out.r_grid.push(r);
            out.zeta.push(z);
            out.gap.push(g);
            out.psi.push(p);
            out.phi.push(f);
            out.dzeta.push(dz);
        }
        out.reached_cutoff = false;
        Ok(out)
    }
}

#[inline]
fn psi_from_gap(g: f64, s: f64) -> f64 {
    s * (1.0 - g) / (g * (2.0 - g)).max(0.0).sqrt()
}

/// Shared right-hand side pieces.
#[derive(Clone, Copy)]
struct Rhs {
    n1: f64,
    c: f64,
    b: f64,
    inv_alpha: f64,
    odd: bool,
}

impl Rhs {
    fn new(p: &FlowParams, c: f64) -> Self {
        Rhs {
            n1: p.dim() - 1.0,
            c,
            b: p.b,
            inv_alpha: p.inv_alpha(),
            odd: p.is_odd(),
        }
    }

    /// `X = c s - b` with `s = sqrt(1 - zeta^2)`, clamped to the admissible side.
    #[inline]
    fn x(&self, s: f64) -> f64 {
        let x = self.c * s - self.b;
        if !self.odd && x < 0.0 {
            0.0
        } else {
            x
        }
    }

    #[inline]
    fn f(&self, s: f64) -> f64 {
        let x = self.x(s);
        if x < 0.0 {
            -pow_abs(-x, self.inv_alpha)
        } else {
            pow_abs(x, self.inv_alpha)
        }
    }

    /// `dF/dzeta` at `(zeta, s)`.
    #[inline]
    fn df(&self, zeta: f64, s: f64) -> f64 {
        if self.c == 0.0 {
            return 0.0;
        }
        let x = self.x(s).abs().max(1e-14);
        let s = s.max(1e-300);
        -self.inv_alpha * x.powf(self.inv_alpha - 1.0) * self.c * zeta / s
    }
}

struct ZetaSys(Rhs);

impl ScalarOde for ZetaSys {
    fn rhs(&self, r: f64, z: f64) -> f64 {
        let s = ((1.0 - z) * (1.0 + z)).max(0.0).sqrt();
        self.0.f(s) - self.0.n1 * z / r
    }
    fn jac(&self, r: f64, z: f64) -> f64 {
        let s = ((1.0 - z) * (1.0 + z)).max(0.0).sqrt();
        self.0.df(z, s) - self.0.n1 / r
    }
    fn integrand(&self, _r: f64, z: f64) -> f64 {
        let w = ((1.0 - z) * (1.0 + z)).max(1e-300);
        z / w.sqrt()
    }
}

struct GapSys {
    rhs: Rhs,
    sigma: f64,
}

impl ScalarOde for GapSys {
    fn rhs(&self, r: f64, g: f64) -> f64 {
        let s = (g * (2.0 - g)).max(0.0).sqrt();
        -self.sigma * self.rhs.f(s) + self.rhs.n1 * (1.0 - g) / r
    }
    fn jac(&self, r: f64, g: f64) -> f64 {
        let s = (g * (2.0 - g)).max(0.0).sqrt();
        self.rhs.df(self.sigma * (1.0 - g), s) - self.rhs.n1 / r
    }
    fn integrand(&self, _r: f64, g: f64) -> f64 {
        self.sigma * (1.0 - g) / (g * (2.0 - g)).max(1e-300).sqrt()
    }
}

struct EpsSys {
    rhs: Rhs,
    eps: f64,
}

impl ScalarOde for EpsSys {
    fn rhs(&self, r: f64, p: f64) -> f64 {
        let w = 1.0 + p * p;
        let sw = w.sqrt();
        w * (self.rhs.f(1.0 / sw) * sw - self.rhs.n1 * p / (r + self.eps))
    }
    fn integrand(&self, _r: f64, p: f64) -> f64 {
        p
    }
}

/// Series coefficients `zeta = s r + t r^3` at the axis.
fn series(p: &FlowParams, c: f64) -> Result<(f64, f64)> {
    let n = p.dim();
    let d = c - p.b;
    let a = p.pow_inv_alpha(d)?;
    let s = a / n;
    let t = if d == 0.0 {
        0.0
    } else {
        -(a / d) * c * s * s / (2.0 * p.alpha * (n + 2.0))
    };
    Ok((s, t))
}

/// Natural radial length scale of the instance.
fn length_scale(p: &FlowParams, c: f64) -> f64 {
    let ia = p.inv_alpha();
    let m = (c - p.b)
        .abs()
        .powf(ia)
        .max(c.powf(ia))
        .max(p.b.abs().powf(ia));
    if m > 0.0 {
        p.dim() / m
    } else {
        1.0
    }
}

fn flat_profile(params: &FlowParams, c: f64, regime: RegimeTag, r_end: f64) -> ProfileSolution {
    let m = 64;
    let r_grid: Vec<f64> = (0..=m).map(|i| r_end * i as f64 / m as f64).collect();
    let n = r_grid.len();
    ProfileSolution {
        params: *params,
        c,
        regime,
        form: ProfileForm::Exact,
        r_grid,
        zeta: vec![0.0; n],
        psi: vec![0.0; n],
        phi: vec![0.0; n],
        gap: vec![1.0; n],
        dzeta: vec![0.0; n],
        reached_cutoff: false,
        r_inf: None,
        phi_end: None,
        last_step: 0.0,
        stats: StepStats::default(),
        cross_check: None,
    }
}

/// End of the integration interval and whether hitting it without the cutoff is an error.
fn integration_end(
    params: &FlowParams,
    c: f64,
    regime: RegimeTag,
    opts: &IntegratorOptions,
) -> (f64, bool) {
    if let Some((_, hi)) = r_inf_bounds(params, c, regime) {
        let cap = hi * (1.0 + 1e-6) + 1e-9;
        match opts.r_stop {
            Some(rs) if rs < cap => (rs, false),
            _ => (cap, true),
        }
    } else {
        (opts.r_stop.unwrap_or(opts.r_max), false)
    }
}

pub fn integrate_zeta(
    params: &FlowParams,
    c: f64,
    opts: &IntegratorOptions,
) -> Result<ProfileSolution> {
    params.validate()?;
    opts.validate()?;
    let regime = classify_regime(params, c)?;
    let (r_end, must_blow_up) = integration_end(params, c, regime, opts);
    if regime == RegimeTag::CEqB {
        return Ok(flat_profile(params, c, regime, r_end));
    }
    let sigma = orientation(regime);
    let (s, t) = series(params, c)?;
    let ell = length_scale(params, c);
    let r0 = (1e-5 * ell).min(1e-5).min(0.5 * r_end);
    let z0 = s * r0 + t * r0.powi(3);
    let phi0 = s * r0 * r0 / 2.0 + (t + s.powi(3) / 2.0) * r0.powi(4) / 4.0;
    let rhs = Rhs::new(params, c);
    let delta = opts.zeta_cutoff;

    let mut r_grid = vec![0.0];
    let mut zeta = vec![0.0];
    let mut psi = vec![0.0];
    let mut phi = vec![0.0];
    let mut gap = vec![1.0];
    let mut dzeta = vec![s];
    let mut stats = StepStats::default();

    let switch = |_r: f64, z: f64| z.abs() - GAP_SWITCH;
    let h0 = opts.dr_init.min(r0);
    let tr1 = ode::integrate(
        &ZetaSys(rhs),
        r0,
        z0,
        phi0,
        r_end,
        Some(&switch),
        opts.step_options(h0),
    )?;
    stats.merge(tr1.stats);
    for nd in &tr1.nodes {
        let z = nd.y;
        r_grid.push(nd.r);
        zeta.push(z);
        gap.push(1.0 - z.abs());
        psi.push(z / ((1.0 - z) * (1.0 + z)).sqrt());
        phi.push(nd.q);
        dzeta.push(nd.dy);
    }
    let mut reached_cutoff = false;
    let mut last_step = tr1.last_h;
    if tr1.termination == Termination::Event {
        let start = *tr1.nodes.last().unwrap();
        let g0 = 1.0 - sigma * start.y;
        let sys = GapSys { rhs, sigma };
        let cutoff = |_r: f64, g: f64| delta - g;
        let event: Option<&dyn Fn(f64, f64) -> f64> = if regime.finite_r_inf() {
            Some(&cutoff)
        } else {
            None
        };
        let h = tr1.last_h.max(1e-6 * start.r);
        if start.r < r_end {
            let tr2 = ode::integrate(
                &sys,
                start.r,
                g0,
                start.q,
                r_end,
                event,
                opts.step_options(h),
            )?;
            stats.merge(tr2.stats);
            for nd in tr2.nodes.iter().skip(1) {
                let g = nd.y;
                r_grid.push(nd.r);
                zeta.push(sigma * (1.0 - g));
                gap.push(g);
                psi.push(psi_from_gap(g, sigma));
                phi.push(nd.q);
                dzeta.push(-sigma * nd.dy);
            }
            reached_cutoff = tr2.termination == Termination::Event;
            let k = r_grid.len();
            last_step = r_grid[k - 1] - r_grid[k - 2];
        }
    }
    if must_blow_up && !reached_cutoff {
        return Err(Error::BlowupUndetected { r_cap: r_end });
    }
    let mut sol = ProfileSolution {
        params: *params,
        c,
        regime,
        form: ProfileForm::Zeta,
        r_grid,
        zeta,
        psi,
        phi,
        gap,
        dzeta,
        reached_cutoff,
        r_inf: None,
        phi_end: None,
        last_step,
        stats,
        cross_check: None,
    };
    if reached_cutoff {
        let ri = estimate_r_infinity(&sol)?;
        sol.phi_end = endpoint_height(&sol);
        sol.r_inf = Some(ri);
    }
    Ok(sol)
}

/// Regularized profile with `(N-1)/(r + eps)` in place of `(N-1)/r`.
pub fn integrate_psi_epsilon(
    params: &FlowParams,
    c: f64,
    eps: f64,
    opts: &IntegratorOptions,
) -> Result<ProfileSolution> {
    params.validate()?;
    opts.validate()?;
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!(
            "eps must be positive, got {eps}"
        )));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidInput(format!(
            "speed must be positive, got {c}"
        )));
    }
    let regime = classify_regime(params, c)?;
    let sigma = orientation(regime);
    let (r_end, must_blow_up) = match r_inf_bounds(params, c, regime) {
        Some(_) => {
            let ia = params.inv_alpha();
            let n = params.dim();
            let cap = match regime {
                RegimeTag::BNeg => (-params.b).powf(-ia) * (n + 2f64.ln()),
                _ => 2.0 * n * (params.b - c).powf(-ia),
            } * 1.01;
            match opts.r_stop {
                Some(rs) if rs < cap => (rs, false),
                _ => (cap, true),
            }
        }
        None => (opts.r_stop.unwrap_or(opts.r_max), false),
    };
    if regime == RegimeTag::CEqB {
        let mut sol = flat_profile(params, c, regime, r_end);
        sol.form = ProfileForm::Epsilon(eps);
        return Ok(sol);
    }
    let delta = opts.zeta_cutoff;
    let psi_cut = (1.0 - delta) / (delta * (2.0 - delta)).sqrt();
    let sys = EpsSys {
        rhs: Rhs::new(params, c),
        eps,
    };
    let cutoff = move |_r: f64, p: f64| p.abs() - psi_cut;
    let event: Option<&dyn Fn(f64, f64) -> f64> = if regime.finite_r_inf() {
        Some(&cutoff)
    } else {
        None
    };
    let mut so = opts.step_options(opts.dr_init.min(eps));
    so.atol_y = 1e-30;
    let tr = ode::integrate(&sys, 0.0, 0.0, 0.0, r_end, event, so)?;
    let reached_cutoff = tr.termination == Termination::Event;
    if must_blow_up && !reached_cutoff {
        return Err(Error::BlowupUndetected { r_cap: r_end });
    }
    let n = tr.nodes.len();
    let mut sol = ProfileSolution {
        params: *params,
        c,
        regime,
        form: ProfileForm::Epsilon(eps),
        r_grid: Vec::with_capacity(n),
        zeta: Vec::with_capacity(n),
        psi: Vec::with_capacity(n),
        phi: Vec::with_capacity(n),
        gap: Vec::with_capacity(n),
        dzeta: Vec::with_capacity(n),
        reached_cutoff,
        r_inf: None,
        phi_end: None,
        last_step: if n > 1 {
            tr.nodes[n - 1].r - tr.nodes[n - 2].r
        } else {
            0.0
        },
        stats: tr.stats,
        cross_check: None,
    };
    for nd in &tr.nodes {
        let p = nd.y;
        let w = (1.0 + p * p).sqrt();
        sol.r_grid.push(nd.r);
        sol.psi.push(p);
        sol.zeta.push(p / w);
        sol.gap.push(1.0 / (w * (w + p.abs())));
        sol.phi.push(nd.q);
        sol.dzeta.push(nd.dy / (w * w * w));
    }
    if sigma == 0.0 {
        return Ok(sol);
    }
    if reached_cutoff {
        let ri = estimate_r_infinity(&sol)?;
        sol.phi_end = endpoint_height(&sol);
        sol.r_inf = Some(ri);
    }
    Ok(sol)
}

/// Outcome of closing the profile from the cutoff node to the blow-up radius.
struct Closure {
    r_inf: f64,
    phi_end: Option<f64>,
}

/// Continuation past the cutoff in `t = -ln u`, where `u = sqrt(1 - |zeta|)`.
///
/// The unknown is `y = -g'`, the slope of the gap `g = u^2` in `r`. Given `y`
/// the radius follows in closed form, `r + eps = (N - 1)(1 - u^2) / D` with
/// `D = |b|^{1/alpha} + sigma (F(u) - F(0)) - y`, so only `y` is integrated:
/// `dy/dt = -sigma u F_u + 2 u^2 D^2 (1/y - (N - 1)/D) / ((N - 1)(1 - u^2))`,
/// `dPhi/dt = 2 sigma u (1 - u^2) / (sqrt(2 - u^2) y)`.
/// At a regular endpoint `y -> 2a > 0`; on the `b < 0` floor `y ~ u` and the
/// equation is stiff but `y` itself stays well conditioned.
struct ClosureSys {
    n1: f64,
    c: f64,
    b: f64,
    bpow: f64,
    inv_alpha: f64,
    sigma: f64,
    eps: f64,
}

impl ClosureSys {
    fn new(sol: &ProfileSolution, eps: f64) -> Self {
        let p = &sol.params;
        ClosureSys {
            n1: p.dim() - 1.0,
            c: sol.c,
            b: p.b,
            bpow: p.b.abs().powf(p.inv_alpha()),
            inv_alpha: p.inv_alpha(),
            sigma: orientation(sol.regime),
            eps,
        }
    }

    /// `F(u) - F(0)` without cancellation, and `dF/du`.
    fn df(&self, u: f64) -> (f64, f64) {
        let w = (2.0 - u * u).sqrt();
        let s = u * w;
        let ratio = -self.c * s / self.b;
        let diff = -self.b.signum() * self.bpow * (ratio.ln_1p() * self.inv_alpha).exp_m1();
        let x = (self.c * s - self.b).abs();
        let dfdx = self.inv_alpha * x.powf(self.inv_alpha - 1.0);
        (diff, dfdx * self.c * (2.0 - 2.0 * u * u) / w)
    }

    fn denom(&self, u: f64, y: f64) -> f64 {
        self.bpow + self.sigma * self.df(u).0 - y
    }

    fn radius(&self, u: f64, y: f64) -> f64 {
        self.n1 * (1.0 - u * u) / self.denom(u, y) - self.eps
    }

    /// `y = -g'` at radius `r` and `u`.
    fn slope_at(&self, r: f64, u: f64) -> f64 {
        self.bpow + self.sigma * self.df(u).0 - self.n1 * (1.0 - u * u) / (r + self.eps)
    }
}

impl ScalarOde for ClosureSys {
    fn rhs(&self, t: f64, y: f64) -> f64 {
        let u = (-t).exp();
        let d = self.denom(u, y);
        if !(y > 0.0 && d > 0.0) {
            return f64::NAN;
        }
        let g = u * u;
        -self.sigma * u * self.df(u).1
            + 2.0 * g * d * d * (1.0 / y - self.n1 / d) / (self.n1 * (1.0 - g))
    }
    fn jac(&self, t: f64, y: f64) -> f64 {
        let u = (-t).exp();
        let d = self.denom(u, y);
        let g = u * u;
        2.0 * g * (self.n1 - 2.0 * d / y - d * d / (y * y)) / (self.n1 * (1.0 - g))
    }
    fn integrand(&self, t: f64, y: f64) -> f64 {
        let u = (-t).exp();
        let g = u * u;
        2.0 * self.sigma * u * (1.0 - g) / ((2.0 - g).sqrt() * y)
    }
}

/// The same continuation for `b > c > 0` with the radius as the unknown:
/// `dr/dt = 2u^2 / y`. There `r` can be huge while `(N - 1)/r` is tiny, so the
/// closed form for `r` would lose every digit.
struct RadiusClosure<'a>(&'a ClosureSys);

impl ScalarOde for RadiusClosure<'_> {
    fn rhs(&self, t: f64, r: f64) -> f64 {
        let u = (-t).exp();
        let y = self.0.slope_at(r, u);
        if y > 0.0 {
            2.0 * u * u / y
        } else {
            f64::NAN
        }
    }
    fn integrand(&self, t: f64, r: f64) -> f64 {
        let u = (-t).exp();
        self.0.integrand(t, self.0.slope_at(r, u))
    }
}

/// Continue the profile past the cutoff down to `u` thirty decades below its
/// cutoff value.
fn endpoint_closure(sol: &ProfileSolution) -> Option<Closure> {
    let k = sol.len() - 1;
    let eps = match sol.form {
        ProfileForm::Epsilon(e) => e,
        _ => 0.0,
    };
    let sys = ClosureSys::new(sol, eps);
    let u0 = sol.gap[k].sqrt();
    let y0 = sys.slope_at(sol.r_grid[k], u0);
    if !(y0 > 0.0) {
        return None;
    }
    let t0 = -u0.ln();
    let t1 = t0 + 30.0 * std::f64::consts::LN_10;
    let mut opts = StepOptions {
        tol: 1e-12,
        atol_y: 1e-15 * sys.bpow,
        atol_q: 1e-14,
        h_init: 1e-3,
        h_min: 1e-14,
        h_max: 2.0,
        max_steps: 100_000,
        stiff_switch: 2.0,
    };
    // Below this slope the endpoint is the floor `(N - 1)|b|^{-1/alpha}` itself.
    let y_floor = 1e-13 * sys.bpow;
    let u_end = (-t1).exp();
    let (r_inf, two_a, phi) = if sol.regime == RegimeTag::BGtCPos {
        opts.atol_y = 1e-15 * sol.r_grid[k];
        let traj = ode::integrate(
            &RadiusClosure(&sys),
            t0,
            sol.r_grid[k],
            sol.phi[k],
            t1,
            None,
            opts,
        )
        .ok()?;
        let last = traj.nodes.last()?;
        let two_a = sys.slope_at(last.y, u_end);
        (last.y + u_end * u_end / two_a, two_a, last.q)
    } else {
        let on_floor = |_t: f64, y: f64| y_floor - y;
        let traj = ode::integrate(&sys, t0, y0, sol.phi[k], t1, Some(&on_floor), opts).ok()?;
        let last = traj.nodes.last()?;
        if last.y <= y_floor {
            (sys.n1 / sys.bpow - eps, 0.0, last.q)
        } else {
            (
                sys.radius(u_end, last.y) + u_end * u_end / last.y,
                last.y,
                last.q,
            )
        }
    };
    let phi_end = if two_a > 1e-9 * sys.bpow {
        Some(phi + sys.sigma * 2f64.sqrt() * u_end / two_a)
    } else {
        // Endpoint slope vanishes: Psi ~ 1/(R - r) and the height diverges.
        None
    };
    Some(Closure { r_inf, phi_end })
}

/// Linear endpoint law `1 - |zeta| ~ 2a (R - r)` with
/// `2a = |b|^{1/alpha} - (N - 1)/R` solved by fixed-point iteration.
fn linear_extrapolation(sol: &ProfileSolution) -> f64 {
    let p = &sol.params;
    let k = sol.len() - 1;
    let r_c = sol.r_grid[k];
    let g_c = sol.gap[k];
    let bpow = p.b.abs().powf(p.inv_alpha());
    let n1 = p.dim() - 1.0;
    let rho0 = g_c / sol.dzeta[k].abs();
    let mut rho = rho0;
    for _ in 0..50 {
        let den = bpow - n1 / (r_c + rho);
        if !(den > 0.0) {
            return r_c + rho0;
        }
        let next = g_c / den;
        if (next - rho).abs() <= 1e-15 * rho {
            return r_c + next;
        }
        rho = next;
    }
    r_c + rho
}

/// Blow-up radius estimate with the bracket `[last node, estimate + last step]`.
pub fn estimate_r_infinity(sol: &ProfileSolution) -> Result<RInfinity> {
    if !sol.regime.finite_r_inf() {
        return Err(Error::NotApplicable(format!(
            "regime {} has no finite maximal radius",
            sol.regime
        )));
    }
    if !sol.reached_cutoff {
        return Err(Error::NotApplicable(
            "integration stopped before the blow-up cutoff".into(),
        ));
    }
    let r_c = sol.r_last();
    let estimate = endpoint_closure(sol)
        .map(|c| c.r_inf)
        .unwrap_or_else(|| linear_extrapolation(sol));
    let extrapolated_hi = estimate + sol.last_step;
    let (blo, bhi) = r_inf_bounds(&sol.params, sol.c, sol.regime).unwrap();
    Ok(RInfinity {
        estimate: estimate.clamp(blo, bhi),
        lo: r_c.max(blo).min(bhi),
        hi: extrapolated_hi.min(bhi).max(r_c.max(blo)),
        extrapolated_hi,
        linear_estimate: linear_extrapolation(sol),
    })
}

/// `Phi(R_inf - 0)`, or `None` when the endpoint slope vanishes and the height diverges.
fn endpoint_height(sol: &ProfileSolution) -> Option<f64> {
    endpoint_closure(sol).and_then(|c| c.phi_end)
}

/// Solve and attach the regularized-form cross-check.
pub fn solve_profile(
    params: &FlowParams,
    c: f64,
    opts: &IntegratorOptions,
) -> Result<ProfileSolution> {
    let mut sol = integrate_zeta(params, c, opts)?;
    if opts.cross_check && c > 0.0 && sol.regime != RegimeTag::CEqB {
        let cc = cross_check(&sol, &[1e-2, 1e-3, 1e-4], opts)?;
        let passed = cc.passed;
        let worst = cc.worst_r.last().copied().unwrap_or(0.0);
        let detail = format!(
            "deviations {:?} for eps {:?}, min margin {:e}",
            cc.deviation, cc.eps, cc.min_margin
        );
        sol.cross_check = Some(cc);
        if !passed {
            return Err(Error::CrossCheckFailure {
                worst_r: worst,
                detail,
            });
        }
    }
    Ok(sol)
}

/// Minimum deviation ratio between regularized profiles a decade apart in `eps`.
pub const MIN_DECADE_RATIO: f64 = 5.0;

/// Interval on which the regularized forms are compared with `sol`.
pub fn cross_check_interval(sol: &ProfileSolution) -> f64 {
    let mut r = sol.r_last();
    if let Some(ri) = sol.r_inf {
        r = r.min(0.9 * ri.lo);
    }
    r.min(4.0 * length_scale(&sol.params, sol.c))
}

/// Compare `sol` against the regularized profiles for each `eps` (decreasing).
///
/// The regularized profiles converge at first order in `eps`, so a decade in
/// `eps` must shrink the deviation by at least [`MIN_DECADE_RATIO`] (scaled for
/// other spacings). For positive curvature every regularized profile must also
/// lie above `sol`.
pub fn cross_check(
    sol: &ProfileSolution,
    eps: &[f64],
    opts: &IntegratorOptions,
) -> Result<CrossCheck> {
    let r_hi = cross_check_interval(sol);
    let mut o = *opts;
    o.r_stop = Some(r_hi);
    o.cross_check = false;
    let sigma = orientation(sol.regime);
    let mut deviation = Vec::new();
    let mut worst_r = Vec::new();
    let mut min_margin = f64::INFINITY;
    for &e in eps {
        let pe = integrate_psi_epsilon(&sol.params, sol.c, e, &o)?;
        let mut worst = 0.0;
        let mut at = 0.0;
        for i in 1..pe.len() {
            let r = pe.r_grid[i];
            if r > r_hi || r > sol.r_last() {
                break;
            }
            let d = pe.psi[i] - sol.psi_at(r)?;
            if d.abs() > worst {
                worst = d.abs();
                at = r;
            }
            min_margin = min_margin.min(sigma * d);
        }
        deviation.push(worst);
        worst_r.push(at);
    }
    let monotone = deviation.windows(2).zip(eps.windows(2)).all(|(d, e)| {
        let need = MIN_DECADE_RATIO.powf((e[0] / e[1]).log10());
        d[1] < d[0] && (d[0] <= 10.0 * opts.tol || d[0] / d[1] >= need)
    });
    let ordered = !sol.regime.positive_curvature() || min_margin > -10.0 * opts.tol;
    Ok(CrossCheck {
        eps: eps.to_vec(),
        deviation,
        worst_r,
        interval: (0.0, r_hi),
        min_margin,
        passed: monotone && ordered,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Asymptote {
    /// Leading-order height `Phi(r)`.
    Height(f64),
    /// Limiting slope `Psi_0`.
    Slope(f64),
}

/// Closed-form far-field behaviour: `c r^{alpha+1} / ((alpha+1)(N-1)^alpha)` for
/// `b = 0`, and the cone slope `sqrt(c^2 - b^2)/b` for `c > b > 0`.
pub fn asymptotic_value(params: &FlowParams, c: f64, r: f64) -> Result<Asymptote> {
    let regime = classify_regime(params, c)?;
    match regime {
        RegimeTag::BZero => {
            let a = params.alpha;
            let n1 = params.dim() - 1.0;
            Ok(Asymptote::Height(
                c / ((a + 1.0) * n1.powf(a)) * r.powf(a + 1.0),
            ))
        }
        RegimeTag::CGtBPos => Ok(Asymptote::Slope(
            ((c - params.b) * (c + params.b)).sqrt() / params.b,
        )),
        other => Err(Error::NotApplicable(format!(
            "no closed-form asymptote in regime {other}"
        ))),
    }
}

/// `Psi_0 r - Phi(r)` for a cone-like profile.
pub fn v_shape_defect(sol: &ProfileSolution, r: f64) -> Result<f64> {
    match asymptotic_value(&sol.params, sol.c, r)? {
        Asymptote::Slope(psi0) if sol.regime == RegimeTag::CGtBPos => Ok(psi0 * r - sol.phi_at(r)?),
        _ => Err(Error::NotApplicable(format!(
            "defect needs regime C_GT_B_POS, got {}",
            sol.regime
        ))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport {
    /// `(r, Psi(r; c2) - Psi(r; c1))` at every shared sample.
    pub margins: Vec<(f64, f64)>,
    pub r_inf: Option<(f64, f64)>,
}

/// Check that `Psi` increases with `c` pointwise and that the maximal radius
/// moves in the direction of the regime (down for `b < 0`, up for `b > c > 0`).
pub fn monotonicity_probe(
    params: &FlowParams,
    c1: f64,
    c2: f64,
    r_samples: &[f64],
    opts: &IntegratorOptions,
) -> Result<OrderingReport> {
    if !(c1 > 0.0 && c2 > c1) {
        return Err(Error::InvalidInput(format!(
            "need 0 < c1 < c2, got c1 = {c1}, c2 = {c2}"
        )));
    }
    let reg1 = classify_regime(params, c1)?;
    let reg2 = classify_regime(params, c2)?;
    if reg1 != reg2 {
        return Err(Error::InvalidInput(format!(
            "speeds {c1} and {c2} fall in different regimes ({reg1}, {reg2})"
        )));
    }
    let mut o = *opts;
    o.cross_check = false;
    let s1 = integrate_zeta(params, c1, &o)?;
    let s2 = integrate_zeta(params, c2, &o)?;
    let r_hi = s1.r_last().min(s2.r_last());
    let mut margins = Vec::new();
    for &r in r_samples {
        if r <= 0.0 || r > r_hi {
            continue;
        }
        let m = s2.psi_at(r)? - s1.psi_at(r)?;
        if !(m > 0.0) {
            return Err(Error::OrderingViolation { r, margin: m });
        }
        margins.push((r, m));
    }
    let r_inf = match (s1.r_inf, s2.r_inf) {
        (Some(a), Some(b)) => {
            let ok = match reg1 {
                RegimeTag::BNeg => b.estimate < a.estimate,
                _ => b.estimate > a.estimate,
            };
            if !ok {
                return Err(Error::OrderingViolation {
                    r: a.estimate,
                    margin: b.estimate - a.estimate,
                });
            }
            Some((a.estimate, b.estimate))
        }
        _ => None,
    };
    Ok(OrderingReport { margins, r_inf })
}
