use std::path::Path;

use gmcf_core::diagnostics::{default_monitor_speed, IntersectionMonitor};
use gmcf_core::io::{csv_columns, g15, gnuplot_script, write_text};
use gmcf_core::pde::{
    evolve, init_state, EvolveOptions, InitialData, Observer, SnapshotRecorder, TsReference,
};
use gmcf_core::profile::{solve_profile, IntegratorOptions, ProfileSolution};
use gmcf_core::speed::{find_speed, translating_solution, SpeedOptions};
use gmcf_core::{Error, FlowParams, Slope};
use gmcf_verify::{verify, Mode, VerifyOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::failure::Failure;
use crate::settings::{parse_values, Settings, SCHEMA_VERSION};

type Outcome = Result<i32, Failure>;

/// A JSON artifact: schema, resolved config, then `body`'s fields.
fn document(settings: &Settings, body: Value) -> Result<String, Failure> {
    let mut doc = json!({ "schema": SCHEMA_VERSION, "config": settings });
    if let (Value::Object(d), Value::Object(b)) = (&mut doc, body) {
        d.extend(b);
    }
    let mut s = serde_json::to_string_pretty(&doc).map_err(Failure::internal)?;
    s.push('\n');
    Ok(s)
}

fn emit(dir: &Path, name: &str, text: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    write_text(&path, text)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn integrator(settings: &Settings) -> IntegratorOptions {
    let mut o = IntegratorOptions::default();
    if let Some(r) = settings.r_max {
        o.r_max = r;
    }
    o
}

fn profile_summary(sol: &ProfileSolution) -> Value {
    json!({
        "params": sol.params,
        "c": sol.c,
        "regime": sol.regime,
        "form": sol.form,
        "r_last": sol.r_last(),
        "psi_last": sol.psi_last(),
        "phi_end": sol.phi_end,
        "reached_cutoff": sol.reached_cutoff,
        "r_inf": sol.r_inf,
        "points": sol.len(),
        "stats": sol.stats,
        "cross_check": sol.cross_check,
    })
}

fn profile_plot(data: &str, title: &str) -> String {
    gnuplot_script(data, title, "r", &[(3, "Psi"), (4, "Phi")])
}

pub fn profile(settings: &Settings) -> Outcome {
    let p = settings.flow()?;
    let c = settings
        .c
        .ok_or_else(|| Error::InvalidInput("--c is required".into()))?;
    let sol = solve_profile(&p, c, &integrator(settings))?;
    let dir = settings.out_dir();
    emit(dir, "profile.csv", &sol.to_csv())?;
    emit(
        dir,
        "profile.json",
        &document(settings, profile_summary(&sol))?,
    )?;
    emit(
        dir,
        "profile.plt",
        &profile_plot("profile.csv", &format!("profile, c = {}", g15(c))),
    )?;
    match &sol.r_inf {
        Some(r) => println!(
            "regime {} r_inf {} in [{}, {}]",
            sol.regime,
            g15(r.estimate),
            g15(r.lo),
            g15(r.hi)
        ),
        None => println!("regime {} r_inf none", sol.regime),
    }
    Ok(0)
}

pub fn speed(settings: &Settings) -> Outcome {
    let p = settings.flow()?;
    if p.k.is_none() {
        return Err(Error::InvalidInput("--k or --k-inf is required".into()).into());
    }
    let o = SpeedOptions {
        integrator: integrator(settings),
        ..SpeedOptions::default()
    };
    let res = find_speed(&p, &o)?;
    let prof = if res.profile.r_last() > 1.0 {
        res.profile.truncated(1.0)?
    } else {
        res.profile.clone()
    };
    let dir = settings.out_dir();
    emit(dir, "speed_profile.csv", &prof.to_csv())?;
    let body = json!({
        "params": res.params,
        "case": res.case,
        "c_tilde": res.c_tilde,
        "iterations": res.iterations,
        "residual": res.residual,
        "route": res.route,
        "bracket_history": res.bracket_history,
        "profile": profile_summary(&res.profile),
    });
    emit(dir, "speed.json", &document(settings, body)?)?;
    emit(
        dir,
        "speed_profile.plt",
        &profile_plot(
            "speed_profile.csv",
            &format!("translating solution, c~ = {}", g15(res.c_tilde)),
        ),
    )?;
    println!(
        "case {} c_tilde {} residual {}",
        res.case.as_str(),
        g15(res.c_tilde),
        g15(res.residual)
    );
    Ok(0)
}

/// Reads `r,u` rows (an optional header is skipped) and checks the nodes are uniform on [0, 1].
fn read_u0(path: &Path) -> Result<Vec<f64>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
    let mut r = Vec::new();
    let mut u = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',').map(str::trim);
        let (a, b) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
        match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(x), Ok(y)) => {
                r.push(x);
                u.push(y);
            }
            _ if i == 0 => continue,
            _ => {
                return Err(Failure::usage(format!(
                    "{}:{}: expected r,u",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    let m = r.len().saturating_sub(1);
    if m == 0 {
        return Err(Failure::usage(format!("{}: no data rows", path.display())));
    }
    for (i, x) in r.iter().enumerate() {
        if (x - i as f64 / m as f64).abs() > 1e-9 {
            return Err(Failure::usage(format!(
                "{}: nodes must be uniform on [0, 1], row {} has r = {x}",
                path.display(),
                i + 1
            )));
        }
    }
    Ok(u)
}

pub fn evolve_cmd(settings: &Settings) -> Outcome {
    let p = settings.flow()?;
    let k = match p.k {
        Some(Slope::Finite(k)) => k,
        Some(_) => return Err(Error::InvalidInput("evolve needs a finite --k".into()).into()),
        None => return Err(Error::InvalidInput("--k is required".into()).into()),
    };
    let t_final = settings.t_final.unwrap_or(10.0);
    let so = SpeedOptions::default();
    let preset = settings.preset.as_deref();
    let mut bump_used = None;
    let (u0, m, ts) = match (preset, &settings.u0) {
        (Some(_), Some(_)) => return Err(Failure::usage("give either --preset or --u0, not both")),
        (None, Some(path)) => {
            let u = read_u0(path)?;
            let m = settings.m.unwrap_or(u.len() - 1);
            (InitialData::samples(u), m, None)
        }
        (preset, None) => {
            let m = settings.m.unwrap_or(256);
            match preset.unwrap_or("ts") {
                "ts" => {
                    let (c, prof) = translating_solution(&p, &so)?;
                    (InitialData::translating(&prof, c), m, Some((c, prof)))
                }
                "perturbed-ts" => {
                    let (c, prof) = translating_solution(&p, &so)?;
                    let a = match settings.bump {
                        Some(a) => a,
                        None => ChaCha8Rng::seed_from_u64(settings.seed()).gen_range(0.05..0.15),
                    };
                    bump_used = Some(a);
                    (
                        InitialData::translating(&prof, c).with_bump(a),
                        m,
                        Some((c, prof)),
                    )
                }
                "quadratic" => (InitialData::quadratic(k), m, None),
                "cap" => (InitialData::sphere_cap(k)?, m, None),
                other => return Err(Failure::usage(format!("unknown preset '{other}'"))),
            }
        }
    };
    let state = init_state(&u0, &p, m)?;
    let reference = match &ts {
        Some((c, prof)) => TsReference::from_profile(*c, prof, &state.r_grid)?,
        None => TsReference::solve(&p, &state.r_grid, &so)?.0,
    };
    let opts = EvolveOptions {
        sample_every: settings.sample_every.unwrap_or(0.05),
        allow_unmet_hypotheses: settings.allow_unmet.unwrap_or(false),
        windows: None,
    };
    let mut snaps = SnapshotRecorder::new(settings.snapshot_every.unwrap_or(0.5));
    let mut monitor = match settings.monitor_c {
        Some(c) => Some(IntersectionMonitor::new(
            &p,
            c,
            vec![-0.1, -0.05, 0.0, 0.05, 0.1],
            &state.r_grid,
        )?),
        None => None,
    };
    let run = {
        let mut observers: Vec<&mut dyn Observer> = vec![&mut snaps];
        if let Some(m) = monitor.as_mut() {
            observers.push(m);
        }
        evolve(state, t_final, &reference, &opts, &mut observers)?
    };

    let dir = settings.out_dir();
    emit(dir, "trajectory.csv", snaps.to_csv())?;
    let s = &run.record.samples;
    let col =
        |f: fn(&gmcf_core::pde::ConvergenceSample) -> f64| s.iter().map(f).collect::<Vec<f64>>();
    let (t, raw, osc, off, h0) = (
        col(|x| x.t),
        col(|x| x.raw),
        col(|x| x.oscillation),
        col(|x| x.offset),
        col(|x| x.axis_height),
    );
    emit(
        dir,
        "convergence.csv",
        &csv_columns(
            &["t", "raw", "oscillation", "offset", "axis_height"],
            &[&t, &raw, &osc, &off, &h0],
        ),
    )?;
    emit(
        dir,
        "convergence.plt",
        &(String::from("set logscale y\n")
            + &gnuplot_script(
                "convergence.csv",
                "distance to the translating solution",
                "t",
                &[(3, "oscillation")],
            )),
    )?;
    let half = run.record.front_speed(t_final / 2.0, t_final);
    let body = json!({
        "hypothesis": run.hypothesis,
        "bump": bump_used,
        "c_tilde": run.record.c_tilde,
        "front_speed_second_half": half,
        "record": run.record,
    });
    emit(dir, "convergence.json", &document(settings, body)?)?;
    emit(
        dir,
        "estimates.json",
        &document(
            settings,
            json!({ "hypothesis": run.hypothesis, "report": run.report }),
        )?,
    )?;
    if let Some(m) = &monitor {
        emit(dir, "events.jsonl", &m.log.to_jsonl())?;
        emit(
            dir,
            "intersections.json",
            &document(settings, json!({ "trace": m.trace }))?,
        )?;
    }
    let last = s.last();
    println!(
        "hypothesis {} c_tilde {} oscillation {} steps {}",
        run.hypothesis.tag,
        g15(run.record.c_tilde),
        g15(last.map_or(f64::NAN, |x| x.oscillation)),
        run.state.step_count
    );
    if monitor.is_none() {
        println!(
            "intersection monitor off (suggested --monitor-c {})",
            g15(default_monitor_speed(p.b, run.record.c_tilde))
        );
    }
    Ok(0)
}

pub fn verify_cmd(settings: &Settings) -> Outcome {
    let opts = VerifyOptions {
        mode: if settings.quick.unwrap_or(false) {
            Mode::Quick
        } else {
            Mode::Full
        },
        seed: settings.seed(),
        only: settings.only.clone(),
    };
    let report = verify(&opts)?;
    println!("{}", report.mode_note);
    for o in &report.outcomes {
        println!("{}", o.line());
    }
    let passed = report.outcomes.iter().filter(|o| o.passed).count();
    println!("{passed}/{} criteria passed", report.outcomes.len());
    emit(
        settings.out_dir(),
        "verify.json",
        &document(settings, json!({ "report": report }))?,
    )?;
    Ok(if report.all_passed { 0 } else { 1 })
}

struct Row {
    cells: Vec<f64>,
    label: String,
    status: String,
}

fn speed_point(base: &FlowParams, b: f64, k: f64) -> Row {
    let solved = FlowParams::new(base.n, base.alpha, b)
        .map(|p| {
            FlowParams {
                alpha_odd: base.alpha_odd,
                ..p
            }
            .with_k(Slope::Finite(k))
        })
        .and_then(|p| find_speed(&p, &SpeedOptions::default()));
    match solved {
        Ok(r) => Row {
            cells: vec![k, b, r.c_tilde, r.residual],
            label: r.case.as_str().to_string(),
            status: "ok".into(),
        },
        Err(e) => Row {
            cells: vec![k, b, f64::NAN, f64::NAN],
            label: String::new(),
            status: e.kind().into(),
        },
    }
}

fn profile_point(base: &FlowParams, b: f64, c: f64) -> Row {
    let o = IntegratorOptions {
        cross_check: false,
        ..IntegratorOptions::default()
    };
    let solved = FlowParams::new(base.n, base.alpha, b)
        .map(|p| FlowParams {
            alpha_odd: base.alpha_odd,
            ..p
        })
        .and_then(|p| solve_profile(&p, c, &o));
    match solved {
        Ok(sol) => {
            let (est, lo, hi) = sol
                .r_inf
                .map_or((f64::INFINITY, f64::INFINITY, f64::INFINITY), |r| {
                    (r.estimate, r.lo, r.hi)
                });
            Row {
                cells: vec![c, b, est, lo, hi],
                label: sol.regime.as_str().to_string(),
                status: "ok".into(),
            }
        }
        Err(e) => Row {
            cells: vec![c, b, f64::NAN, f64::NAN, f64::NAN],
            label: String::new(),
            status: e.kind().into(),
        },
    }
}

pub fn sweep(settings: &Settings) -> Outcome {
    // b is swept, so any fixed value only seeds the validation of n and alpha.
    let base = Settings {
        b: Some(settings.b.unwrap_or(0.0)),
        k: None,
        k_inf: None,
        ..settings.clone()
    }
    .flow()?;
    let kind = match settings.sweep.as_deref() {
        Some(k) => k.to_string(),
        None if settings.c_values.is_some() => "profile".into(),
        None => "speed".into(),
    };
    let values = |v: &Option<String>, name: &str| -> Result<Vec<f64>, Failure> {
        match v {
            Some(s) => Ok(parse_values(s)?),
            None => Err(Failure::usage(format!(
                "--{name} is required for a {kind} sweep"
            ))),
        }
    };
    let bs = match (&settings.b_values, settings.b) {
        (None, Some(b)) => vec![b],
        _ => values(&settings.b_values, "b-values")?,
    };
    let (inner, header): (Vec<f64>, &[&str]) = match kind.as_str() {
        "speed" => (
            values(&settings.k_values, "k-values")?,
            &["k", "b", "c_tilde", "residual", "case", "status"],
        ),
        "profile" => (
            values(&settings.c_values, "c-values")?,
            &[
                "c", "b", "r_inf", "r_inf_lo", "r_inf_hi", "regime", "status",
            ],
        ),
        other => {
            return Err(Failure::usage(format!(
                "unknown sweep kind '{other}' (speed or profile)"
            )))
        }
    };
    let points: Vec<(f64, f64)> = bs
        .iter()
        .flat_map(|&b| inner.iter().map(move |&x| (b, x)))
        .collect();
    if points.is_empty() {
        return Err(Failure::usage("the sweep grid is empty"));
    }
    let jobs = settings
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(Failure::internal)?;
    let rows: Vec<Row> = pool.install(|| {
        points
            .par_iter()
            .map(|&(b, x)| {
                if kind == "speed" {
                    speed_point(&base, b, x)
                } else {
                    profile_point(&base, b, x)
                }
            })
            .collect()
    });

    let mut csv = header.join(",");
    csv.push('\n');
    for row in &rows {
        let nums: Vec<String> = row.cells.iter().map(|v| g15(*v)).collect();
        csv.push_str(&format!(
            "{},{},{}\n",
            nums.join(","),
            row.label,
            row.status
        ));
    }
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    let dir = settings.out_dir();
    emit(dir, "sweep.csv", &csv)?;
    emit(
        dir,
        "sweep.json",
        &document(
            settings,
            json!({ "kind": kind, "points": rows.len(), "failed": failed, "columns": header }),
        )?,
    )?;
    let title = if kind == "speed" {
        "selected speed"
    } else {
        "blow-up radius"
    };
    emit(
        dir,
        "sweep.plt",
        &gnuplot_script("sweep.csv", title, header[0], &[(3, header[2])]),
    )?;
    println!("{} points, {failed} failed", rows.len());
    Ok(0)
}
