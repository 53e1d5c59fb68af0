//! The acceptance suite: twelve numbered criteria over profiles, speed
//! selection and the evolution, each with a numeric threshold and a runtime
//! budget.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use gmcf_core::flow::{FlowParams, Slope};
use gmcf_core::pde::{
    evolve, init_state, stable_dt, step, Evolution, EvolutionState, EvolveOptions, HypothesisTag,
    InitialData, TsReference,
};
use gmcf_core::profile::{solve_profile, v_shape_defect, IntegratorOptions};
use gmcf_core::speed::{
    admissibility, boundary_slope, bracket_speed, find_speed, Route, SpeedOptions,
};
use gmcf_core::{Error, Result};

pub const SCHEMA_VERSION: &str = "gmcf-verify/1";

pub const DEFAULT_SEED: u64 = 20240607;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Full,
    /// Coarser grids, shorter runs, fewer random instances and looser PDE tolerances.
    Quick,
}

impl Mode {
    /// What quick mode changes, for the report.
    pub fn note(self) -> &'static str {
        match self {
            Mode::Full => "full thresholds",
            Mode::Quick => {
                "quick: grids 4x coarser, random instance counts divided by 5, T shortened, \
                 PDE tolerances scaled by the squared grid ratio (16x)"
            }
        }
    }
}

/// `(id, name, runtime budget in seconds)`.
pub const CRITERIA: [(u8, &str, f64); 12] = [
    (1, "exact-profile", 1.0),
    (2, "flat", 1.0),
    (3, "bounds", 30.0),
    (4, "asymptotics", 10.0),
    (5, "cone", 5.0),
    (6, "speed-residual", 60.0),
    (7, "monotonicity", 30.0),
    (8, "ts-fixed-point", 120.0),
    (9, "convergence", 300.0),
    (10, "estimates", 600.0),
    (11, "comparison", 180.0),
    (12, "grid-convergence", 300.0),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub mode: Mode,
    pub seed: u64,
    /// Criterion names or ids to run; all when `None`.
    pub only: Option<Vec<String>>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            mode: Mode::Full,
            seed: DEFAULT_SEED,
            only: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    /// Numeric checks passed, ignoring the runtime budget.
    pub checks_passed: bool,
    pub elapsed_s: f64,
    pub budget_s: f64,
    pub detail: String,
    pub metrics: BTreeMap<String, f64>,
}

impl CriterionOutcome {
    /// `PASS  3 bounds        0.41 s  ...`
    pub fn line(&self) -> String {
        format!(
            "{} {:>2} {:<17} {:>8.2} s / {:>4} s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.elapsed_s,
            self.budget_s,
            self.detail
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema: String,
    pub mode: Mode,
    pub mode_note: String,
    pub seed: u64,
    pub outcomes: Vec<CriterionOutcome>,
    pub all_passed: bool,
}

/// Resolves a criterion by id or name.
pub fn criterion_id(key: &str) -> Result<u8> {
    CRITERIA
        .iter()
        .find(|(id, name, _)| *name == key || id.to_string() == key)
        .map(|c| c.0)
        .ok_or_else(|| Error::InvalidInput(format!("unknown criterion '{key}'")))
}

pub fn verify(opts: &VerifyOptions) -> Result<VerifyReport> {
    let ids: Vec<u8> = match &opts.only {
        Some(keys) => {
            let mut ids = keys
                .iter()
                .map(|k| criterion_id(k))
                .collect::<Result<Vec<_>>>()?;
            ids.sort_unstable();
            ids.dedup();
            ids
        }
        None => CRITERIA.iter().map(|c| c.0).collect(),
    };
    let outcomes: Vec<CriterionOutcome> = ids
        .iter()
        .map(|&id| run_criterion(id, opts.mode, opts.seed))
        .collect();
    Ok(VerifyReport {
        schema: SCHEMA_VERSION.to_string(),
        mode: opts.mode,
        mode_note: opts.mode.note().to_string(),
        seed: opts.seed,
        all_passed: outcomes.iter().all(|o| o.passed),
        outcomes,
    })
}

#[derive(Default)]
struct Check {
    ok: bool,
    notes: Vec<String>,
    metrics: BTreeMap<String, f64>,
}

impl Check {
    fn new() -> Self {
        Check {
            ok: true,
            ..Check::default()
        }
    }

    fn metric(&mut self, key: impl Into<String>, v: f64) {
        self.metrics.insert(key.into(), v);
    }

    /// Records `cond`; the note is kept either way.
    fn expect(&mut self, cond: bool, note: impl Into<String>) {
        let note = note.into();
        if !cond {
            self.ok = false;
            self.notes.push(format!("FAILED {note}"));
        } else {
            self.notes.push(note);
        }
    }
}

pub fn run_criterion(id: u8, mode: Mode, seed: u64) -> CriterionOutcome {
    let (_, name, budget) = CRITERIA[(id - 1) as usize];
    let start = Instant::now();
    let ctx = Ctx {
        mode,
        rng: ChaCha8Rng::seed_from_u64(seed ^ u64::from(id)),
    };
    let result = match id {
        1 => exact_profile(ctx),
        2 => flat(ctx),
        3 => bounds(ctx),
        4 => asymptotics(ctx),
        5 => cone(ctx),
        6 => speed_residual(ctx),
        7 => monotonicity(ctx),
        8 => ts_fixed_point(ctx),
        9 => convergence(ctx),
        10 => estimates(ctx),
        11 => comparison(ctx),
        12 => grid_convergence(ctx),
        _ => Err(Error::InvalidInput(format!("unknown criterion {id}"))),
    };
    let elapsed_s = start.elapsed().as_secs_f64();
    let (checks_passed, detail, metrics) = match result {
        Ok(c) => (c.ok, c.notes.join("; "), c.metrics),
        Err(e) => (false, format!("error: {e}"), BTreeMap::new()),
    };
    let in_budget = elapsed_s < budget;
    let detail = if in_budget {
        detail
    } else {
        format!("{detail}; FAILED runtime {elapsed_s:.1} s over the {budget} s budget")
    };
    CriterionOutcome {
        id,
        name: name.to_string(),
        passed: checks_passed && in_budget,
        checks_passed,
        elapsed_s,
        budget_s: budget,
        detail,
        metrics,
    }
}

struct Ctx {
    mode: Mode,
    rng: ChaCha8Rng,
}

impl Ctx {
    fn quick(&self) -> bool {
        self.mode == Mode::Quick
    }

    /// Grid size: `full` intervals, a quarter of that in quick mode (at least 64).
    fn grid(&self, full: usize) -> usize {
        if self.quick() {
            (full / 4).max(gmcf_core::pde::MIN_INTERVALS)
        } else {
            full
        }
    }

    fn count(&self, full: usize) -> usize {
        if self.quick() {
            (full / 5).max(1)
        } else {
            full
        }
    }

    /// PDE tolerance, scaled by the squared grid ratio in quick mode.
    fn pde_tol(&self, full: f64) -> f64 {
        if self.quick() {
            16.0 * full
        } else {
            full
        }
    }
}

fn quiet() -> IntegratorOptions {
    IntegratorOptions {
        cross_check: false,
        ..IntegratorOptions::default()
    }
}

fn exact_profile(_: Ctx) -> Result<Check> {
    let mut ch = Check::new();
    let p = FlowParams::new(2, 1.0, -1.0)?;
    let sol = solve_profile(&p, 0.0, &quiet())?;
    let (mut ez, mut ep) = (0.0f64, 0.0f64);
    for i in 0..=190 {
        let r = 0.01 * i as f64;
        ez = ez.max((sol.zeta_at(r)? - r / 2.0).abs());
        ep = ep.max((sol.phi_at(r)? - (2.0 - (4.0 - r * r).sqrt())).abs());
    }
    let r_inf = sol
        .r_inf
        .ok_or_else(|| Error::NoConvergence("no blow-up radius".into()))?
        .estimate;
    ch.metric("zeta_error", ez);
    ch.metric("phi_error", ep);
    ch.metric("r_inf", r_inf);
    ch.expect(
        ez <= 1e-8 && ep <= 1e-8,
        format!("sup error zeta {ez:.1e}, phi {ep:.1e} on [0, 1.9]"),
    );
    ch.expect((r_inf - 2.0).abs() <= 1e-4, format!("R_inf = {r_inf:.9}"));
    Ok(ch)
}

fn flat(_: Ctx) -> Result<Check> {
    let mut ch = Check::new();
    let mut worst = 0.0f64;
    let mut nonzero_phi = 0usize;
    let cases = [
        FlowParams::new(2, 1.0, 0.5)?,
        FlowParams::new(3, 2.0, 3.0)?,
        FlowParams::new(2, 0.5, 1.0)?,
        FlowParams::new(4, 1.0, 10.0)?,
        FlowParams::odd(3, 1, 3, 2.0)?,
    ];
    for p in cases {
        let sol = solve_profile(&p, p.b, &IntegratorOptions::default())?;
        worst = sol.psi.iter().fold(worst, |a, x| a.max(x.abs()));
        nonzero_phi += sol.phi.iter().filter(|x| **x != 0.0).count();
    }
    ch.metric("max_abs_psi", worst);
    ch.expect(
        worst <= 1e-12 && nonzero_phi == 0,
        format!("max |Psi| = {worst:e} over {} flat cases", cases.len()),
    );
    Ok(ch)
}

/// `head`, then `: a | b | ...` when there is anything to list.
fn with_list(head: String, items: &[String]) -> String {
    if items.is_empty() {
        head
    } else {
        format!("{head}: {}", items.join(" | "))
    }
}

const ODD_POWERS: [(u32, u32); 5] = [(1, 3), (1, 1), (3, 1), (1, 5), (3, 5)];

fn bounds(mut ctx: Ctx) -> Result<Check> {
    let mut ch = Check::new();
    let mut bad = Vec::new();
    let n_neg = ctx.count(50);
    for _ in 0..n_neg {
        let n = ctx.rng.gen_range(2..=4u32);
        let alpha = [0.5, 1.0, 2.0][ctx.rng.gen_range(0..3)];
        let b = ctx.rng.gen_range(-2.0..-0.2);
        let c = ctx.rng.gen_range(0.1..5.0);
        let p = FlowParams::new(n, alpha, b)?;
        let ri = solve_profile(&p, c, &quiet())?
            .r_inf
            .ok_or_else(|| Error::NoConvergence(format!("no R_inf for {p:?}, c = {c}")))?;
        let lo = n as f64 * (c - b).powf(-1.0 / alpha);
        let hi = n as f64 * (-b).powf(-1.0 / alpha);
        if !(ri.lo >= lo * (1.0 - 1e-12) && ri.hi <= hi * (1.0 + 1e-12) && ri.lo <= ri.hi) {
            bad.push(format!(
                "N={n} alpha={alpha} b={b:.4} c={c:.4}: [{}, {}] vs [{lo}, {hi}]",
                ri.lo, ri.hi
            ));
        }
    }
    let n_pos = ctx.count(20);
    for _ in 0..n_pos {
        let n = ctx.rng.gen_range(2..=4u32);
        let (q, pp) = ODD_POWERS[ctx.rng.gen_range(0..ODD_POWERS.len())];
        let b = ctx.rng.gen_range(0.5..3.0);
        let c = b * ctx.rng.gen_range(0.05..0.95);
        let p = FlowParams::odd(n, q, pp, b)?;
        let ia = pp as f64 / q as f64;
        let ri = solve_profile(&p, c, &quiet())?
            .r_inf
            .ok_or_else(|| Error::NoConvergence(format!("no R_inf for {p:?}, c = {c}")))?;
        let lo = n as f64 * b.powf(-ia);
        let hi = n as f64 * (b - c).powf(-ia);
        if !(ri.lo >= lo * (1.0 - 1e-12) && ri.hi <= hi * (1.0 + 1e-12) && ri.lo <= ri.hi) {
            bad.push(format!(
                "N={n} alpha={q}/{pp} b={b:.4} c={c:.4}: [{}, {}] vs [{lo}, {hi}]",
                ri.lo, ri.hi
            ));
        }
    }
    ch.metric("violations", bad.len() as f64);
    ch.expect(
        bad.is_empty(),
        with_list(
            format!("{n_neg} b<0 and {n_pos} b>c>0 brackets inside the proven bounds"),
            &bad,
        ),
    );
    Ok(ch)
}

/// Least-squares slope and intercept of `y` against `x`.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn asymptotics(_: Ctx) -> Result<Check> {
    let mut ch = Check::new();
    let c = 1.0;
    for (alpha, n) in [(1.0, 2u32), (2.0, 3), (0.5, 2)] {
        let p = FlowParams::new(n, alpha, 0.0)?;
        let o = IntegratorOptions {
            r_max: 500.0,
            ..quiet()
        };
        let sol = solve_profile(&p, c, &o)?;
        let (mut lx, mut ly) = (Vec::new(), Vec::new());
        for j in 0..100 {
            let r = 50.0 * 10f64.powf(j as f64 / 99.0);
            lx.push(r.ln());
            ly.push(sol.phi_at(r.min(sol.r_last()))?.ln());
        }
        let (slope, _) = linear_fit(&lx, &ly);
        let expected = c / ((alpha + 1.0) * (n as f64 - 1.0).powf(alpha));
        let log_pref = lx
            .iter()
            .zip(&ly)
            .map(|(x, y)| y - (alpha + 1.0) * x)
            .sum::<f64>()
            / lx.len() as f64;
        let pref = log_pref.exp();
        let key = format!("alpha={alpha},N={n}");
        ch.metric(format!("{key}:slope"), slope);
        ch.metric(format!("{key}:prefactor"), pref);
        ch.expect(
            (slope / (alpha + 1.0) - 1.0).abs() <= 0.02,
            format!("{key}: slope {slope:.5} vs {}", alpha + 1.0),
        );
        ch.expect(
            (pref / expected - 1.0).abs() <= 0.05,
            format!("{key}: prefactor {pref:.5} vs {expected:.5}"),
        );
    }
    Ok(ch)
}

fn cone(_: Ctx) -> Result<Check> {
    let mut ch = Check::new();
    for n in [2u32, 3] {
        let p = FlowParams::new(n, 1.0, 3.0)?;
        let o = IntegratorOptions {
            r_max: 201.0,
            ..quiet()
        };
        let sol = solve_profile(&p, 5.0, &o)?;
        let psi = sol.psi_at(200.0)?;
        let growth = v_shape_defect(&sol, 200.0)? - v_shape_defect(&sol, 100.0)?;
        ch.metric(format!("N={n}:psi_200"), psi);
        ch.metric(format!("N={n}:defect_growth"), growth);
        ch.expect(
            (psi - 4.0 / 3.0).abs() <= 1e-3,
            format!(
                "N={n}: Psi(200) = {psi:.7}, off by {:.2e}",
                (psi - 4.0 / 3.0).abs()
            ),
        );
        ch.expect(
            growth > 0.0,
            format!("N={n}: defect grows by {growth:.4} over [100, 200]"),
        );
    }
    Ok(ch)
}

/// One admissible `(params, k)` from case `a`..`d` (0..4).
fn admissible(rng: &mut ChaCha8Rng, case: usize) -> Result<FlowParams> {
    let alphas = [0.5, 1.0, 2.0];
    match case {
        0 => {
            let n = rng.gen_range(2..=4u32);
            let a = alphas[rng.gen_range(0..3)];
            let k = rng.gen_range(0.2..3.0);
            Ok(FlowParams::new(n, a, 0.0)?.with_k(Slope::Finite(k)))
        }
        1 => {
            let n = rng.gen_range(2..=4u32);
            let a = alphas[rng.gen_range(0..3)];
            let k: f64 = rng.gen_range(0.3..3.0);
            let frac = rng.gen_range(0.1..0.9);
            // (-b)^(1/alpha) = frac k N / sqrt(1 + k^2)
            let bp: f64 = frac * k * n as f64 / (1.0 + k * k).sqrt();
            Ok(FlowParams::new(n, a, -bp.powf(a))?.with_k(Slope::Finite(k)))
        }
        2 => {
            let n = rng.gen_range(2..=4u32);
            let a = alphas[rng.gen_range(0..3)];
            let b = rng.gen_range(0.2..3.0);
            let k = rng.gen_range(0.2..3.0);
            Ok(FlowParams::new(n, a, b)?.with_k(Slope::Finite(k)))
        }
        _ => {
            let q = [1u32, 3][rng.gen_range(0..2)];
            let k: f64 = rng.gen_range(0.2..3.0);
            let frac = rng.gen_range(0.3..2.0);
            // b^(1/alpha) = (1 + frac) k N / sqrt(1 + k^2)
            let bp: f64 = (1.0 + frac) * k * 2.0 / (1.0 + k * k).sqrt();
            Ok(FlowParams::odd(2, q, 3, bp.powf(q as f64 / 3.0))?.with_k(Slope::Finite(-k)))
        }
    }
}

fn speed_residual(mut ctx: Ctx) -> Result<Check> {
    let mut ch = Check::new();
    let total = ctx.count(20);
    let (mut worst_res, mut worst_shift) = (0.0f64, 0.0f64);
    let mut failures = Vec::new();
    for i in 0..total {
        let p = admissible(&mut ctx.rng, i % 4)?;
        if let Err(why) = admissibility(&p) {
            return Err(Error::Regime(format!(
                "generator produced an inadmissible case: {why}"
            )));
        }
        let k = p.k.and_then(|k| k.finite()).unwrap_or(0.0);
        let mut o = SpeedOptions::default();
        let res = find_speed(&p, &o)?;
        o.route = Route::Epsilon(1e-9);
        let eps = find_speed(&p, &o)?;
        let rel_res = res.residual.abs() / k.abs().max(1.0);
        let shift = (eps.c_tilde - res.c_tilde).abs() / res.c_tilde;
        worst_res = worst_res.max(rel_res);
        worst_shift = worst_shift.max(shift);
        if rel_res > 1e-8 || shift > 1e-6 {
            failures.push(format!("{p:?}: residual {rel_res:e}, shift {shift:e}"));
        }
    }
    ch.metric("max_scaled_residual", worst_res);
    ch.metric("max_relative_shift", worst_shift);
    ch.expect(
        failures.is_empty(),
        with_list(
            format!("{total} cases: max |Psi(1) - k|/max(1,|k|) = {worst_res:.1e}, max eps-route shift {worst_shift:.1e}"),
            &failures,
        ),
    );
    Ok(ch)
}

fn monotonicity(mut ctx: Ctx) -> Result<Check> {
    let mut ch = Check::new();
    let families = ctx.count(10);
    let o = SpeedOptions::default();
    let mut psi_bad = Vec::new();
    let mut blown = 0usize;
    for i in 0..families {
        let p = admissible(&mut ctx.rng, i % 4)?;
        let (lo, hi) = bracket_speed(&p, &o)?;
        let mut prev = f64::NEG_INFINITY;
        for j in 1..=10 {
            let c = lo + (hi - lo) * j as f64 / 11.0;
            let v = boundary_slope(&p, c, Route::Zeta, &quiet())?;
            if !v.is_finite() {
                blown += 1;
                continue;
            }
            if v <= prev || v.is_nan() {
                psi_bad.push(format!("{p:?} at c = {c}: {v} after {prev}"));
            }
            prev = v;
        }
    }
    ch.metric("psi_violations", psi_bad.len() as f64);
    ch.expect(
        psi_bad.is_empty(),
        with_list(
            format!("Psi(1; c) increasing in c over {families} families ({blown} samples blew up before r = 1)"),
            &psi_bad,
        ),
    );

    let mut r_bad = Vec::new();
    for i in 0..families {
        let n = ctx.rng.gen_range(2..=4u32);
        let mut prev: Option<f64> = None;
        let (p, cs, decreasing): (FlowParams, Vec<f64>, bool) = if i % 2 == 0 {
            let alpha = [0.5, 1.0, 2.0][ctx.rng.gen_range(0..3)];
            let b = ctx.rng.gen_range(-2.0..-0.2);
            let cs = (0..10).map(|j| 0.1 + 4.9 * j as f64 / 9.0).collect();
            (FlowParams::new(n, alpha, b)?, cs, true)
        } else {
            let (q, pp) = ODD_POWERS[ctx.rng.gen_range(0..ODD_POWERS.len())];
            let b = ctx.rng.gen_range(0.5..3.0);
            let cs = (0..10).map(|j| b * (0.05 + 0.9 * j as f64 / 9.0)).collect();
            (FlowParams::odd(n, q, pp, b)?, cs, false)
        };
        for c in cs {
            let r = solve_profile(&p, c, &quiet())?
                .r_inf
                .ok_or_else(|| Error::NoConvergence(format!("no R_inf for {p:?}, c = {c}")))?
                .estimate;
            if let Some(q) = prev {
                let ok = if decreasing { r < q } else { r > q };
                if !ok {
                    r_bad.push(format!(
                        "N={n} alpha={} b={:.4}: R_inf({c:.4}) = {r} after {q}",
                        p.alpha, p.b
                    ));
                }
            }
            prev = Some(r);
        }
    }
    ch.metric("r_inf_violations", r_bad.len() as f64);
    ch.expect(
        r_bad.is_empty(),
        with_list(
            format!(
                "R_inf strictly monotone in c over {families} families ({} violations)",
                r_bad.len()
            ),
            &r_bad[..r_bad.len().min(3)],
        ),
    );
    Ok(ch)
}

fn ts_state(p: &FlowParams, m: usize) -> Result<(EvolutionState, TsReference)> {
    let (reference_c, prof) = gmcf_core::speed::translating_solution(p, &SpeedOptions::default())?;
    let state = init_state(&InitialData::translating(&prof, reference_c), p, m)?;
    let reference = TsReference::from_profile(reference_c, &prof, &state.r_grid)?;
    Ok((state, reference))
}

fn ts_fixed_point(ctx: Ctx) -> Result<Check> {
    let mut ch = Check::new();
    let m = ctx.grid(256);
    let t_final = if ctx.quick() { 1.0 } else { 5.0 };
    let tol = ctx.pde_tol(1e-5);
    let cases = [
        FlowParams::new(2, 1.0, 0.0)?.with_k(Slope::Finite(1.0)),
        FlowParams::new(2, 1.0, -1.0)?.with_k(Slope::Finite(1.0)),
        FlowParams::new(2, 1.0, 3.0)?.with_k(Slope::Finite(1.0)),
        FlowParams::odd(2, 1, 3, 3.0)?.with_k(Slope::Finite(-1.0)),
    ];
    for p in cases {
        let (state, reference) = ts_state(&p, m)?;
        let run = evolve(
            state,
            t_final,
            &reference,
            &EvolveOptions::default(),
            &mut [],
        )?;
        let osc = run
            .record
            .samples
            .iter()
            .map(|s| s.oscillation)
            .fold(0.0, f64::max);
        let key = format!(
            "b={},k={}",
            p.b,
            p.k.and_then(|k| k.finite()).unwrap_or(f64::NAN)
        );
        ch.metric(format!("{key}:max_oscillation"), osc);
        ch.expect(
            osc <= tol,
            format!(
                "{key} ({}): oscillation {osc:.2e} up to T = {t_final}",
                run.hypothesis.tag
            ),
        );
    }
    Ok(ch)
}

fn case_c_run(m: usize, t_final: f64) -> Result<Evolution> {
    let p = FlowParams::new(2, 1.0, 3.0)?.with_k(Slope::Finite(1.0));
    let state = init_state(&InitialData::quadratic(1.0), &p, m)?;
    let (reference, _) = TsReference::solve(&p, &state.r_grid, &SpeedOptions::default())?;
    evolve(
        state,
        t_final,
        &reference,
        &EvolveOptions::default(),
        &mut [],
    )
}

fn convergence(ctx: Ctx) -> Result<Check> {
    let mut ch = Check::new();
    let run = case_c_run(ctx.grid(256), 10.0)?;
    let c = run.record.c_tilde;
    let osc1 = run
        .record
        .at(1.0)
        .map(|s| s.oscillation)
        .unwrap_or(f64::NAN);
    let osc10 = run
        .record
        .at(10.0)
        .map(|s| s.oscillation)
        .unwrap_or(f64::NAN);
    let v = run.record.front_speed(5.0, 10.0).unwrap_or(f64::NAN);
    ch.metric("oscillation_t1", osc1);
    ch.metric("oscillation_t10", osc10);
    ch.metric("front_speed", v);
    ch.metric("c_tilde", c);
    ch.expect(
        run.hypothesis.tag == HypothesisTag::C,
        format!("hypothesis {}", run.hypothesis.tag),
    );
    ch.expect(
        osc10 <= 0.1 * osc1,
        format!("oscillation {osc1:.3e} at t = 1, {osc10:.3e} at t = 10"),
    );
    ch.expect(
        (v - c).abs() <= 0.01 * c,
        format!("front speed {v:.6} vs c~ = {c:.6} over [5, 10]"),
    );
    Ok(ch)
}

/// `(N - 1)/sqrt(1 + k^2) min Phi_1'(r)/r` with `Phi_1` at speed `b + (c~ - b)/2`.
pub fn curvature_floor(params: &FlowParams, k: f64, c_tilde: f64, r_grid: &[f64]) -> Result<f64> {
    let c1 = params.b + 0.5 * (c_tilde - params.b);
    let o = IntegratorOptions {
        r_stop: Some(1.0),
        ..quiet()
    };
    let prof = solve_profile(params, c1, &o)?;
    let mut best = f64::INFINITY;
    for &r in r_grid.iter().filter(|r| **r > 0.0) {
        best = best.min(prof.psi_at(r)? / r);
    }
    Ok((params.dim() - 1.0) / (1.0 + k * k).sqrt() * best)
}

fn estimates(ctx: Ctx) -> Result<Check> {
    let mut ch = Check::new();
    let m = ctx.grid(256);
    let t_final = 10.0;
    let c_run = case_c_run(m, t_final)?;
    let b_params = FlowParams::new(2, 1.0, -1.0)?.with_k(Slope::Finite(1.0));
    let d_params = FlowParams::odd(2, 1, 3, 3.0)?.with_k(Slope::Finite(-1.0));
    let mut runs = vec![("C", c_run)];
    for (tag, p, k) in [("B", b_params, 1.0), ("D", d_params, -1.0)] {
        let state = init_state(&InitialData::sphere_cap(k)?, &p, m)?;
        let (reference, _) = TsReference::solve(&p, &state.r_grid, &SpeedOptions::default())?;
        runs.push((
            tag,
            evolve(
                state,
                t_final,
                &reference,
                &EvolveOptions::default(),
                &mut [],
            )?,
        ));
    }
    for (tag, run) in &runs {
        let rep = &run.report;
        ch.metric(format!("{tag}:max_growth"), rep.max_growth());
        ch.metric(format!("{tag}:hstar"), rep.hstar_obs);
        ch.expect(
            run.hypothesis.tag.as_str() == *tag,
            format!("{tag}: hypothesis {}", run.hypothesis.tag),
        );
        ch.expect(rep.all_finite(), format!("{tag}: extrema finite"));
        ch.expect(
            rep.flagged().is_empty(),
            format!(
                "{tag}: growth {:.2e} (flagged {:?})",
                rep.max_growth(),
                rep.flagged()
            ),
        );
        ch.expect(
            rep.hstar_obs > 0.0,
            format!("{tag}: H sgn(k) >= {:.4}", rep.hstar_obs),
        );
    }
    let (_, c_run) = &runs[0];
    let floor = curvature_floor(
        &c_run.state.params,
        1.0,
        c_run.record.c_tilde,
        &c_run.state.r_grid,
    )?;
    let dr = c_run.state.dr;
    // Second-order discretization budget on the curvature.
    let budget = 10.0 * dr * dr * c_run.report.hsup_obs;
    ch.metric("C:h_floor", floor);
    ch.expect(
        c_run.report.hstar_obs >= floor - budget,
        format!(
            "C: H_* observed {:.4} vs floor {floor:.4}",
            c_run.report.hstar_obs
        ),
    );
    Ok(ch)
}

type DataFn = Box<dyn Fn() -> Result<InitialData>>;

/// Base data and parameters of the four hypothesis cases.
fn case_data(case: usize) -> Result<(FlowParams, DataFn)> {
    Ok(match case {
        0 => {
            let p = FlowParams::new(2, 1.0, 0.0)?.with_k(Slope::Finite(1.0));
            let (c, prof) = gmcf_core::speed::translating_solution(&p, &SpeedOptions::default())?;
            (p, Box::new(move || Ok(InitialData::translating(&prof, c))))
        }
        1 => (
            FlowParams::new(2, 1.0, -1.0)?.with_k(Slope::Finite(1.0)),
            Box::new(|| InitialData::sphere_cap(1.0)),
        ),
        2 => (
            FlowParams::new(2, 1.0, 3.0)?.with_k(Slope::Finite(1.0)),
            Box::new(|| Ok(InitialData::quadratic(1.0))),
        ),
        _ => (
            FlowParams::odd(2, 1, 3, 3.0)?.with_k(Slope::Finite(-1.0)),
            Box::new(|| InitialData::sphere_cap(-1.0)),
        ),
    })
}

/// Steps two states in lockstep with a common time step and returns the smallest
/// `min_r (upper - lower)` seen, including the initial data.
pub fn ordered_lockstep(
    lower: &mut EvolutionState,
    upper: &mut EvolutionState,
    t_final: f64,
) -> Result<f64> {
    let gap = |a: &EvolutionState, b: &EvolutionState| {
        a.u.iter()
            .zip(&b.u)
            .map(|(l, u)| u - l)
            .fold(f64::INFINITY, f64::min)
    };
    let mut worst = gap(lower, upper);
    while lower.t < t_final {
        let dt = stable_dt(lower)
            .min(stable_dt(upper))
            .min(t_final - lower.t);
        step(lower, dt)?;
        step(upper, dt)?;
        worst = worst.min(gap(lower, upper));
    }
    Ok(worst)
}

fn comparison(mut ctx: Ctx) -> Result<Check> {
    let mut ch = Check::new();
    let m = ctx.grid(128);
    let t_final = if ctx.quick() { 0.5 } else { 2.0 };
    for (case, tag) in ["A", "B", "C", "D"].iter().enumerate() {
        let (p, base) = case_data(case)?;
        let mut worst = f64::INFINITY;
        for _ in 0..5 {
            let a = ctx.rng.gen_range(-0.05..0.05);
            let bump = ctx.rng.gen_range(0.0..0.05);
            let shift = ctx.rng.gen_range(0.001..0.05);
            let mut lower = init_state(&base()?.with_bump(a), &p, m)?;
            let mut upper = init_state(&base()?.with_bump(a + bump).shifted(shift), &p, m)?;
            worst = worst.min(ordered_lockstep(&mut lower, &mut upper, t_final)?);
        }
        ch.metric(format!("{tag}:min_gap"), worst);
        ch.expect(
            worst >= -1e-12,
            format!("{tag}: min(u2 - u1) = {worst:.3e} up to T = {t_final}"),
        );
    }
    Ok(ch)
}

fn grid_convergence(ctx: Ctx) -> Result<Check> {
    let mut ch = Check::new();
    let base = ctx.grid(128);
    let t_final = 1.0;
    let runs = [base, 2 * base, 4 * base]
        .iter()
        .map(|&m| case_c_run(m, t_final))
        .collect::<Result<Vec<_>>>()?;
    // Drift-corrected solution u - Phi~ - c~ t - offset, compared on the coarse nodes.
    let corrected = |run: &Evolution, stride: usize, phi_of: &dyn Fn(usize) -> f64| -> Vec<f64> {
        let off = run.record.samples.last().map(|s| s.offset).unwrap_or(0.0);
        (0..=base)
            .map(|i| {
                run.state.u[i * stride]
                    - phi_of(i * stride)
                    - run.record.c_tilde * run.state.t
                    - off
            })
            .collect()
    };
    let p = runs[0].state.params;
    let (_, prof) = gmcf_core::speed::translating_solution(&p, &SpeedOptions::default())?;
    let mut fields = Vec::new();
    for (j, run) in runs.iter().enumerate() {
        let stride = 1 << j;
        let r = run.state.r_grid.clone();
        let phi = |i: usize| prof.phi_at(r[i]).unwrap_or(f64::NAN);
        fields.push(corrected(run, stride, &phi));
    }
    let diff = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    };
    let e1 = diff(&fields[0], &fields[1]);
    let e2 = diff(&fields[1], &fields[2]);
    let ratio = e1 / e2;
    ch.metric("e_coarse", e1);
    ch.metric("e_fine", e2);
    ch.metric("ratio", ratio);
    ch.expect(
        (3.5..=4.5).contains(&ratio),
        format!("Richardson ratio {ratio:.3} (differences {e1:.3e}, {e2:.3e}) on dr = 1/{base}, 1/{}, 1/{}", 2 * base, 4 * base),
    );
    Ok(ch)
}
