//! Monitors that run alongside the solvers: agreement of the two profile
//! integrators, sign-change counts against a family of translating
//! solutions, and the observed extrema of an evolution.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::flow::{classify_regime, FlowParams};
use crate::pde::{evolve, EvolutionState, EvolveOptions, Observer, TsReference};
use crate::profile::{cross_check, solve_profile, IntegratorOptions};

/// Relative growth of an observed extremum that counts as a violated bound.
pub const GROWTH_LIMIT: f64 = 0.01;
/// Dead band of the sign-change counter, relative to the difference scale.
pub const DEAD_BAND: f64 = 1e-12;

/// Extrema of one state, with `u_r` and `H` multiplied by the sign of `k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub t: f64,
    pub sign: f64,
    /// `sup |u - c~ t|`.
    pub height: f64,
    pub slope_max: f64,
    /// `min u_r sgn(k)` over `r > 0`.
    pub slope_min: f64,
    pub curvature_max: f64,
    pub velocity_min: f64,
    pub velocity_max: f64,
    pub mean_curvature_min: f64,
    pub mean_curvature_max: f64,
}

impl FieldSample {
    pub fn from_state(state: &EvolutionState, c_tilde: f64) -> Self {
        let s = sign_of(state);
        let f = &state.fields;
        let shift = c_tilde * state.t;
        let mut out = FieldSample {
            t: state.t,
            sign: s,
            height: 0.0,
            slope_max: 0.0,
            slope_min: f64::INFINITY,
            curvature_max: 0.0,
            velocity_min: f64::INFINITY,
            velocity_max: f64::NEG_INFINITY,
            mean_curvature_min: f64::INFINITY,
            mean_curvature_max: f64::NEG_INFINITY,
        };
        for i in 0..state.len() {
            out.height = out.height.max((state.u[i] - shift).abs());
            out.slope_max = out.slope_max.max(f.ur[i].abs());
            if i > 0 {
                out.slope_min = out.slope_min.min(s * f.ur[i]);
            }
            out.curvature_max = out.curvature_max.max(f.urr[i].abs());
            out.velocity_min = out.velocity_min.min(f.ut[i]);
            out.velocity_max = out.velocity_max.max(f.ut[i]);
            out.mean_curvature_min = out.mean_curvature_min.min(s * f.h[i]);
            out.mean_curvature_max = out.mean_curvature_max.max(s * f.h[i]);
        }
        out
    }
}

fn sign_of(state: &EvolutionState) -> f64 {
    if state.k != 0.0 {
        state.k.signum()
    } else if state.h_sign != 0.0 {
        state.h_sign
    } else {
        1.0
    }
}

/// Observed bounds over one time window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowExtrema {
    pub t0: f64,
    pub t1: f64,
    pub samples: usize,
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
    pub v_star: f64,
    pub v_sup: f64,
    pub h_star: f64,
    pub h_sup: f64,
    pub slope_floor: f64,
}

impl WindowExtrema {
    fn over<'a>(t0: f64, t1: f64, samples: impl Iterator<Item = &'a FieldSample>) -> Self {
        let mut w = WindowExtrema {
            t0,
            t1,
            samples: 0,
            m0: 0.0,
            m1: 0.0,
            m2: 0.0,
            v_star: f64::INFINITY,
            v_sup: f64::NEG_INFINITY,
            h_star: f64::INFINITY,
            h_sup: f64::NEG_INFINITY,
            slope_floor: f64::INFINITY,
        };
        for s in samples {
            w.samples += 1;
            w.m0 = w.m0.max(s.height);
            w.m1 = w.m1.max(s.slope_max);
            w.m2 = w.m2.max(s.curvature_max);
            w.v_star = w.v_star.min(s.velocity_min);
            w.v_sup = w.v_sup.max(s.velocity_max);
            w.h_star = w.h_star.min(s.mean_curvature_min);
            w.h_sup = w.h_sup.max(s.mean_curvature_max);
            w.slope_floor = w.slope_floor.min(s.slope_min);
        }
        w
    }

    /// `(name, value, true for an upper bound)` of the seven estimate constants.
    fn bounds(&self) -> [(&'static str, f64, bool); 7] {
        [
            ("M0", self.m0, true),
            ("M1", self.m1, true),
            ("M2", self.m2, true),
            ("V_star", self.v_star, false),
            ("V_sup", self.v_sup, true),
            ("H_star", self.h_star, false),
            ("H_sup", self.h_sup, true),
        ]
    }
}

/// Change of one observed constant from the first to the last window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Growth {
    pub quantity: String,
    pub early: f64,
    pub late: f64,
    /// Loosening of the bound relative to its early value; upward for suprema, downward for infima.
    pub relative: f64,
    pub flagged: bool,
}

/// Observed values of the seven uniform-in-time constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    /// `sup |u - c~ t|`.
    pub m0_obs: f64,
    /// `sup |u_r|`.
    pub m1_obs: f64,
    /// `sup |u_rr|`.
    pub m2_obs: f64,
    pub vstar_obs: f64,
    pub vsup_obs: f64,
    /// `inf H sgn(k)`.
    pub hstar_obs: f64,
    /// `sup H sgn(k)`.
    pub hsup_obs: f64,
    /// `inf u_r sgn(k)` over `r > 0`.
    pub slope_floor_obs: f64,
    /// Sign multiplying `H` and `u_r` above.
    pub sign: f64,
    pub windows: Vec<WindowExtrema>,
    pub growth: Vec<Growth>,
}

impl EstimateReport {
    pub fn flagged(&self) -> Vec<&str> {
        self.growth
            .iter()
            .filter(|g| g.flagged)
            .map(|g| g.quantity.as_str())
            .collect()
    }

    pub fn max_growth(&self) -> f64 {
        self.growth.iter().map(|g| g.relative).fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        [
            self.m0_obs,
            self.m1_obs,
            self.m2_obs,
            self.vstar_obs,
            self.vsup_obs,
            self.hstar_obs,
            self.hsup_obs,
        ]
        .iter()
        .all(|x| x.is_finite())
    }
}

/// Extrema of `samples` over each window, and their growth from the first window to the last.
pub fn assemble_report(samples: &[FieldSample], windows: &[(f64, f64)]) -> EstimateReport {
    let eps = 1e-12;
    let per: Vec<WindowExtrema> = windows
        .iter()
        .map(|&(t0, t1)| {
            WindowExtrema::over(
                t0,
                t1,
                samples
                    .iter()
                    .filter(|s| s.t >= t0 - eps && s.t <= t1 + eps),
            )
        })
        .collect();
    let all = WindowExtrema::over(
        samples.first().map_or(0.0, |s| s.t),
        samples.last().map_or(0.0, |s| s.t),
        samples.iter(),
    );
    let mut growth = Vec::new();
    if let (Some(first), Some(last)) = (per.first(), per.last()) {
        if per.len() >= 2 {
            for ((name, early, upper), (_, late, _)) in
                first.bounds().into_iter().zip(last.bounds())
            {
                let change = if upper { late - early } else { early - late };
                let relative = if early != 0.0 {
                    change / early.abs()
                } else if change == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                };
                growth.push(Growth {
                    quantity: name.to_string(),
                    early,
                    late,
                    relative,
                    flagged: relative > GROWTH_LIMIT,
                });
            }
        }
    }
    let sign = samples.first().map_or(1.0, |s| s.sign);
    EstimateReport {
        m0_obs: all.m0,
        m1_obs: all.m1,
        m2_obs: all.m2,
        vstar_obs: all.v_star,
        vsup_obs: all.v_sup,
        hstar_obs: all.h_star,
        hsup_obs: all.h_sup,
        slope_floor_obs: all.slope_floor,
        sign,
        windows: per,
        growth,
    }
}

/// One entry of the JSON event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub monitor: String,
    pub payload: serde_json::Value,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub events: Vec<Event>,
}

impl EventLog {
    pub fn push(&mut self, time: f64, monitor: &str, payload: serde_json::Value) {
        self.events.push(Event {
            time,
            monitor: monitor.to_string(),
            payload,
        });
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        self.events
            .iter()
            .map(|e| serde_json::to_string(e).expect("event serializes") + "\n")
            .collect()
    }
}

/// Strict sign changes along `diff`, ignoring entries with `|x| <= dead_band`.
pub fn count_sign_changes(diff: &[f64], dead_band: f64) -> u32 {
    let mut last = 0.0;
    let mut count = 0;
    for &x in diff {
        if x.abs() <= dead_band {
            continue;
        }
        let s = x.signum();
        if last != 0.0 && s != last {
            count += 1;
        }
        last = s;
    }
    count
}

/// Monitor speed for the translating family: `b + 0.1 (c~ - b)`.
pub fn default_monitor_speed(b: f64, c_tilde: f64) -> f64 {
    b + 0.1 * (c_tilde - b)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntersectionViolation {
    pub t: f64,
    pub shift: f64,
    pub before: u32,
    pub after: u32,
}

/// Sign changes of `u(., t) - (Phi(.; c, b) + c t + d)` for each shift `d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntersectionTrace {
    pub c: f64,
    pub shifts: Vec<f64>,
    pub times: Vec<f64>,
    /// `counts[j][i]`: count at `times[j]` for `shifts[i]`.
    pub counts: Vec<Vec<u32>>,
    pub violations: Vec<IntersectionViolation>,
}

impl IntersectionTrace {
    /// True when no count ever increased.
    pub fn non_increasing(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Counts intersections with a shifted translating family at every observation.
/// Increases are logged, not raised.
#[derive(Clone, Debug)]
pub struct IntersectionMonitor {
    phi: Vec<f64>,
    pub trace: IntersectionTrace,
    pub log: EventLog,
}

impl IntersectionMonitor {
    /// The family `Phi(.; c, b) + c t + d` sampled on `r_grid`.
    pub fn new(params: &FlowParams, c: f64, shifts: Vec<f64>, r_grid: &[f64]) -> Result<Self> {
        let r_end = r_grid.last().copied().unwrap_or(0.0);
        let opts = IntegratorOptions {
            r_stop: Some(r_end),
            cross_check: false,
            ..IntegratorOptions::default()
        };
        let profile = solve_profile(params, c, &opts)?;
        if profile.r_last() < r_end {
            return Err(Error::NotApplicable(format!(
                "the profile with speed {c} blows up at r = {} before the grid ends",
                profile.r_last()
            )));
        }
        let phi = r_grid
            .iter()
            .map(|&r| profile.phi_at(r))
            .collect::<Result<Vec<_>>>()?;
        Ok(IntersectionMonitor {
            phi,
            trace: IntersectionTrace {
                c,
                shifts,
                times: Vec::new(),
                counts: Vec::new(),
                violations: Vec::new(),
            },
            log: EventLog::default(),
        })
    }

    pub fn counts_for(&self, u: &[f64], t: f64) -> Result<Vec<u32>> {
        if u.len() != self.phi.len() {
            return Err(Error::GridMismatch(format!(
                "state has {} nodes, family has {}",
                u.len(),
                self.phi.len()
            )));
        }
        let base: Vec<f64> = u
            .iter()
            .zip(&self.phi)
            .map(|(u, p)| u - p - self.trace.c * t)
            .collect();
        let scale = base.iter().fold(1.0f64, |a, x| a.max(x.abs()));
        let mut diff = vec![0.0; base.len()];
        Ok(self
            .trace
            .shifts
            .iter()
            .map(|d| {
                for (o, b) in diff.iter_mut().zip(&base) {
                    *o = b - d;
                }
                count_sign_changes(&diff, DEAD_BAND * scale.max(d.abs()))
            })
            .collect())
    }
}

impl Observer for IntersectionMonitor {
    fn observe(&mut self, state: &EvolutionState) -> Result<()> {
        let counts = self.counts_for(&state.u, state.t)?;
        if let Some(prev) = self.trace.counts.last() {
            for (i, (&before, &after)) in prev.iter().zip(&counts).enumerate() {
                if after > before {
                    let v = IntersectionViolation {
                        t: state.t,
                        shift: self.trace.shifts[i],
                        before,
                        after,
                    };
                    self.log.push(
                        state.t,
                        "intersection",
                        json!({ "shift": v.shift, "before": before, "after": after, "c": self.trace.c }),
                    );
                    self.trace.violations.push(v);
                }
            }
        }
        self.trace.times.push(state.t);
        self.trace.counts.push(counts);
        Ok(())
    }
}

/// Evolves `state` to `t_final` while counting intersections with the family at speed `c`.
pub fn intersection_monitor(
    state: EvolutionState,
    t_final: f64,
    reference: &TsReference,
    c: f64,
    shifts: Vec<f64>,
    opts: &EvolveOptions,
) -> Result<(IntersectionTrace, EventLog)> {
    let mut monitor = IntersectionMonitor::new(&state.params, c, shifts, &state.r_grid)?;
    evolve(state, t_final, reference, opts, &mut [&mut monitor])?;
    Ok((monitor.trace, monitor.log))
}

/// Regularization parameters compared by [`oracle_equivalence`].
pub const ORACLE_EPS: [f64; 3] = [1e-2, 1e-3, 1e-4];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub c: f64,
    pub eps: Vec<f64>,
    /// Largest `|psi_eps - Psi|` on the shared interval, per `eps`.
    pub deviation: Vec<f64>,
    pub worst_r: Vec<f64>,
    pub interval: (f64, f64),
    pub monotone: bool,
}

/// Compares the regularized profiles for `eps` in [`ORACLE_EPS`] with the exact-form profile.
///
/// Fails unless the deviation shrinks with `eps` as the regularization predicts and, when
/// given, the last deviation is below `max_deviation`.
pub fn oracle_equivalence(
    params: &FlowParams,
    c: f64,
    max_deviation: Option<f64>,
    opts: &IntegratorOptions,
) -> Result<OracleReport> {
    let regime = classify_regime(params, c)?;
    if !regime.positive_curvature() {
        return Err(Error::NotApplicable(format!(
            "the regularized comparison needs positive curvature, got {regime}"
        )));
    }
    let o = IntegratorOptions {
        cross_check: false,
        ..*opts
    };
    let sol = solve_profile(params, c, &o)?;
    let cc = cross_check(&sol, &ORACLE_EPS, &o)?;
    let monotone = cc.passed || cc.deviation.iter().all(|d| *d == 0.0);
    let last = cc.deviation.last().copied().unwrap_or(0.0);
    let worst = cc.worst_r.last().copied().unwrap_or(0.0);
    if !monotone || max_deviation.is_some_and(|m| last > m) {
        return Err(Error::CrossCheckFailure {
            worst_r: worst,
            detail: format!("deviations {:?} for eps {:?}", cc.deviation, cc.eps),
        });
    }
    Ok(OracleReport {
        c,
        eps: cc.eps,
        deviation: cc.deviation,
        worst_r: cc.worst_r,
        interval: cc.interval,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_changes_skip_the_dead_band() {
        assert_eq!(count_sign_changes(&[1.0, -1.0, 1.0], 0.0), 2);
        assert_eq!(count_sign_changes(&[1.0, 1e-14, -1e-14, 1.0], 1e-12), 0);
        assert_eq!(count_sign_changes(&[-1.0, 0.0, 0.0, 2.0], 1e-12), 1);
        assert_eq!(count_sign_changes(&[], 0.0), 0);
    }

    #[test]
    fn growth_between_windows() {
        let mk = |t: f64, h: f64, v: f64| FieldSample {
            t,
            sign: 1.0,
            height: h,
            slope_max: 1.0,
            slope_min: 0.5,
            curvature_max: 1.0,
            velocity_min: v,
            velocity_max: 2.0,
            mean_curvature_min: 1.0,
            mean_curvature_max: 2.0,
        };
        let samples = [mk(0.0, 1.0, 1.0), mk(1.0, 1.0, 1.0), mk(2.0, 1.5, 0.5)];
        let rep = assemble_report(&samples, &[(0.0, 1.0), (0.0, 2.0)]);
        assert_eq!(rep.windows.len(), 2);
        assert_eq!(rep.windows[0].samples, 2);
        let flagged = rep.flagged();
        assert_eq!(flagged, vec!["M0", "V_star"]);
        assert!((rep.max_growth() - 0.5).abs() < 1e-15);
        assert_eq!(rep.m0_obs, 1.5);
        assert!(rep.all_finite());
    }

    #[test]
    fn event_log_is_line_delimited() {
        let mut log = EventLog::default();
        log.push(0.5, "intersection", json!({"shift": 1.0}));
        log.push(1.0, "intersection", json!({"shift": 2.0}));
        let text = log.to_jsonl();
        assert_eq!(text.lines().count(), 2);
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["monitor"], "intersection");
        assert_eq!(first["time"], 0.5);
    }
}
