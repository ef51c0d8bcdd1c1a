//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Oracles (storage values, derivatives, crossing times, equilibria) are
//! written out by hand here rather than taken from the library.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use switched_ni::certify::{
    certify_feedback_run, check_assumption_iii, check_ni_dissipation, check_plant_higs_dc,
    check_positive_definite, check_switch_monotonicity, plant_higs_dc_roots, settle_cascade,
    RegionSpec, SettleOptions, Verdict,
};
use switched_ni::interconnect::{build_cascade, build_positive_feedback, DissipativeSystem, FeedbackLoop};
use switched_ni::systems::{
    higs_model, higs_storage_family, plant_model, plant_storage_family, HigsParams, PlantParams,
};
use switched_ni::{simulate, ConstantInput, SimConfig, Trajectory};

const K_H: f64 = 0.8;
const OMEGA_H: f64 = 20.0;

fn feedback(k_h: f64) -> FeedbackLoop {
    let p = HigsParams::new(OMEGA_H, k_h).unwrap();
    let plant = DissipativeSystem::new(
        plant_model(PlantParams::default()),
        plant_storage_family(PlantParams::default()),
    )
    .unwrap();
    let higs = DissipativeSystem::new(higs_model(p), higs_storage_family(p)).unwrap();
    build_positive_feedback(&plant, &higs).unwrap()
}

fn fig4_run(fl: &FeedbackLoop, u: f64) -> (Trajectory, Duration) {
    let x0 = DVector::from_vec(vec![5.0, 0.0, 0.0]);
    let start = Instant::now();
    let traj = simulate(&fl.model, &x0, &ConstantInput::from_slice(&[u, 0.0]), &SimConfig::new(15.0, 1e-3)).unwrap();
    (traj, start.elapsed())
}

fn w_hand(k_h: f64, x1: f64, x2: f64, xh: f64) -> f64 {
    0.25 * x1.powi(4) + 0.5 * x1 * x1 + 0.5 * x2 * x2 + xh * xh / (2.0 * k_h) - xh * x1
}

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_1() -> Outcome {
    let fl = feedback(K_H);
    let (traj, elapsed) = fig4_run(&fl, 0.0);
    let norm = traj.last().unwrap().x.norm();
    ensure(
        norm <= 0.05 && elapsed < Duration::from_secs(5),
        format!("|x(15)| = {norm:.6} (bound 0.05), runtime {elapsed:.2?} (bound 5 s)"),
    )
}

fn criterion_2() -> Outcome {
    let fl = feedback(K_H);
    let (traj, _) = fig4_run(&fl, 0.0);
    let (plant, _) = fl.split_trajectory(&traj);
    let mut worst = 0.0f64;
    for s in &plant.samples {
        let (x1, x2, u) = (s.x[0], s.x[1], s.input.value[0]);
        let x2dot = -x1.powi(3) - x1 - x2 + u;
        let vdot = (x1.powi(3) + x1) * x2 + x2 * x2dot;
        let ydot = x2;
        worst = worst.max((u * ydot - ydot * ydot - vdot).abs());
    }
    ensure(
        worst <= 1e-8,
        format!("max |u ydot - ydot^2 - Vdot| = {worst:.3e} over {} samples", plant.len()),
    )
}

fn criterion_3() -> Outcome {
    let fl = feedback(K_H);
    let (traj, _) = fig4_run(&fl, 0.0);
    let (_, higs) = fl.split_trajectory(&traj);
    let ni = check_ni_dissipation(&fl.h2.model, &higs, &fl.h2.storage, 0.0, 1e-6).unwrap();
    let sector = higs
        .samples
        .iter()
        .map(|s| s.input.value[0] * s.x[0] - s.x[0] * s.x[0] / K_H)
        .fold(f64::INFINITY, f64::min);
    ensure(
        ni.verdict == Verdict::Pass && ni.worst_residual >= -1e-6 && sector >= -1e-6,
        format!("NI worst residual {:.3e}, sector worst {sector:.3e}", ni.worst_residual),
    )
}

fn criterion_4() -> Outcome {
    let fl = feedback(K_H);
    let (traj, _) = fig4_run(&fl, 0.0);
    let (_, higs) = fl.split_trajectory(&traj);
    let report = check_switch_monotonicity(&higs, &fl.h2.storage, None, 1e-12).unwrap();
    let max_jump = higs
        .switch_events
        .iter()
        .map(|ev| {
            // both modes share x_h^2 / (2 k_h)
            let v = ev.x[0] * ev.x[0] / (2.0 * K_H);
            (fl.h2.storage.value(ev.to, &ev.x).unwrap() - fl.h2.storage.value(ev.from, &ev.x).unwrap())
                .abs()
                .max((fl.h2.storage.value(ev.to, &ev.x).unwrap() - v).abs())
        })
        .fold(0.0f64, f64::max);
    ensure(
        !higs.switch_events.is_empty() && report.verdict == Verdict::Pass && max_jump <= 1e-12,
        format!("{} HIGS switches, max |dV| = {max_jump:.3e}", higs.switch_events.len()),
    )
}

fn criterion_5() -> Outcome {
    let fl = feedback(K_H);
    let (traj, _) = fig4_run(&fl, 0.0);
    let w: Vec<f64> = traj.samples.iter().map(|s| w_hand(K_H, s.x[0], s.x[1], s.x[2])).collect();
    let max_rel = w
        .windows(2)
        .map(|p| (p[1] - p[0]) / (1.0 + p[0]))
        .fold(f64::NEG_INFINITY, f64::max);
    let (w0, wend) = (w[0], *w.last().unwrap());
    ensure(
        w0 == 168.75 && max_rel <= 1e-6 && wend <= 0.01 * w0,
        format!("W(0) = {w0}, W(15) = {wend:.4e} (bound {:.4}), max relative increase {max_rel:.3e}", 0.01 * w0),
    )
}

fn criterion_6() -> Outcome {
    let region = RegionSpec::cube(3, 2.0, 41);
    let start = Instant::now();
    let good = check_positive_definite(|p| w_hand(0.8, p[0], p[1], p[2]), &region, 1e-12).unwrap();
    let bad = check_positive_definite(|p| w_hand(1.5, p[0], p[1], p[2]), &region, 1e-12).unwrap();
    let elapsed = start.elapsed();
    let witness = bad.witness.clone().expect("witness");
    let ww = w_hand(1.5, witness.x[0], witness.x[1], witness.x[2]);
    let target = [0.1, 0.0, 0.12];
    let dist = witness.x.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let expected_point = w_hand(1.5, 0.1, 0.0, 0.12);
    ensure(
        good.verdict == Verdict::NotFalsified
            && bad.verdict == Verdict::Fail
            && ww < 0.0
            && dist <= 0.05
            && expected_point < 0.0
            && elapsed < Duration::from_secs(2),
        format!(
            "k_h=0.8 {}, k_h=1.5 {} with witness {:?} (W = {ww:.4e}, {dist:.3} from (0.1, 0, 0.12)), worst {:?}; {elapsed:.2?}",
            good.verdict.as_str(),
            bad.verdict.as_str(),
            witness.x,
            bad.worst_point.as_ref().map(|p| p.x.clone())
        ),
    )
}

/// Real root of x³ + x = u by bisection.
fn plant_equilibrium(u: f64) -> f64 {
    let (mut lo, mut hi) = (-10.0f64, 10.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid.powi(3) + mid - u > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn criterion_7() -> Outcome {
    let plant = PlantParams::default();
    let mut details = Vec::new();
    let mut ok = true;
    for k_h in [0.5, 1.0] {
        let rep = check_plant_higs_dc(&plant, k_h);
        ok &= rep.verdict == Verdict::Pass && plant_higs_dc_roots(&plant, k_h).is_empty();
    }
    let roots = plant_higs_dc_roots(&plant, 1.5);
    let root_err = (roots[1] - 0.5f64.sqrt()).abs().max((roots[0] + 0.5f64.sqrt()).abs());
    ok &= roots.len() == 2 && root_err <= 1e-10 && check_plant_higs_dc(&plant, 1.5).verdict == Verdict::Fail;
    details.push(format!("closed-form root error {root_err:.1e}"));

    let opts = SettleOptions {
        gap_tol: 1e-4,
        ..SettleOptions::default()
    };
    let inputs = [2.0, -2.0, 0.5, -0.5];
    let x0 = DVector::zeros(3);
    let mut max_dev = 0.0f64;
    for k_h in [0.5, 1.0, 1.5] {
        let cascade = build_cascade(&plant_model(plant), &higs_model(HigsParams::new(OMEGA_H, k_h).unwrap())).unwrap();
        for &u in &inputs {
            let p = settle_cascade(&cascade, &x0, u, &opts).unwrap();
            match p.output {
                Some(y) => max_dev = max_dev.max((y - k_h * plant_equilibrium(u)).abs()),
                None => {
                    ok = false;
                    details.push(format!("k_h={k_h}, u={u} did not settle"));
                }
            }
        }
        let rep = check_assumption_iii(&cascade, &x0, &inputs, &opts).unwrap();
        if k_h <= 1.0 {
            ok &= rep.verdict == Verdict::Pass;
        } else {
            // the nonzero equilibria are reached at u = ±k_h √(k_h - 1)
            let witness = [k_h * (k_h - 1.0f64).sqrt(), -k_h * (k_h - 1.0f64).sqrt()];
            let at_root = check_assumption_iii(&cascade, &x0, &witness, &opts).unwrap();
            ok &= rep.verdict == Verdict::Pass && at_root.verdict == Verdict::Fail;
            details.push(format!(
                "k_h=1.5 at u=±{:.6}: {} (gap {:.2e})",
                witness[0],
                at_root.verdict.as_str(),
                at_root.worst_residual
            ));
        }
        details.push(format!("k_h={k_h} on ±2, ±0.5: {}", rep.verdict.as_str()));
    }
    ok &= max_dev <= 1e-5;
    details.push(format!("settled outputs vs k_h x1_bar: max dev {max_dev:.1e}"));
    ensure(ok, details.join("; "))
}

fn criterion_8() -> Outcome {
    let fl = feedback(K_H);
    let (traj, _) = fig4_run(&fl, 0.1);
    let reports = certify_feedback_run(&fl, &traj, 1e-6).unwrap();
    let subsystems_pass = reports[..4].iter().all(|r| r.verdict == Verdict::Pass);
    let closed = &reports[4];
    ensure(
        subsystems_pass && closed.worst_residual >= -1e-5,
        format!(
            "subsystems {}, closed-loop residual (eps_min = {}) worst {:.3e}",
            if subsystems_pass { "pass" } else { "fail" },
            fl.storage.epsilon_min,
            closed.worst_residual
        ),
    )
}

fn criterion_9() -> Outcome {
    let model = plant_model(PlantParams::default());
    let x0 = DVector::from_vec(vec![5.0, 0.0]);
    let end = |h: f64| {
        let t = simulate(&model, &x0, &ConstantInput::zeros(1), &SimConfig::new(5.0, h)).unwrap();
        t.last().unwrap().x.clone()
    };
    let err = |h: f64| (end(h) - end(h / 10.0)).norm();
    let (e2, e1) = (err(2e-3), err(1e-3));
    let ratio = e2 / e1;
    ensure(ratio >= 12.0, format!("err(2e-3) = {e2:.3e}, err(1e-3) = {e1:.3e}, ratio {ratio:.2}"))
}

fn criterion_10() -> Outcome {
    let p = HigsParams::new(OMEGA_H, K_H).unwrap();
    let model = higs_model(p);
    // constant error e = 1: x_h = ω t meets the gain line x_h = k_h at t = k_h/ω
    let e = ConstantInput::from_slice(&[1.0]);
    let traj = simulate(&model, &DVector::zeros(1), &e, &SimConfig::new(0.1, 1e-3)).unwrap();
    let gap = |t: f64| OMEGA_H * t - K_H;
    let (mut lo, mut hi) = (0.0, 0.1);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gap(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let reference = 0.5 * (lo + hi);
    let ev = traj.switch_events.first().ok_or("no event")?;
    let idx = traj.event_sample_index(ev).ok_or("event sample missing")?;
    let before = &traj.samples[idx - 1];
    let after = &traj.samples[idx];
    let err = (ev.t - reference).abs();
    ensure(
        err <= 1e-9
            && traj.switch_events.len() == 1
            && before.mode.get() == 1
            && after.mode.get() == 2
            && before.t < ev.t
            && traj.samples.iter().all(|s| s.mode.get() == if s.t < ev.t { 1 } else { 2 }),
        format!(
            "event at {:.12}, reference {reference:.12}, error {err:.2e}; modes {} -> {}",
            ev.t, before.mode, after.mode
        ),
    )
}

fn criterion_11() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_switched-ni"))
            .args(["reproduce-fig4", "--out"])
            .arg(&out)
            .output()
            .expect("binary runs");
        (status.status.code(), out)
    };
    let (c1, a) = run("a");
    let (c2, b) = run("b");
    let mut same = c1 == Some(0) && c2 == Some(0);
    let mut files = Vec::new();
    for f in ["trajectory.csv", "report.json", "trajectory.svg"] {
        let x = std::fs::read(a.join(f)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.join(f)).map_err(|e| e.to_string())?;
        same &= x == y;
        files.push(format!("{f} {} bytes", x.len()));
    }
    ensure(same, format!("exit codes {c1:?}/{c2:?}; identical: {}", files.join(", ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("closed-loop decay from x1(0) = 5", criterion_1),
        ("plant output-strict NI identity", criterion_2),
        ("HIGS NI residual and sector", criterion_3),
        ("storage continuity at HIGS switches", criterion_4),
        ("Lyapunov decrease of W", criterion_5),
        ("positive-definiteness dichotomy", criterion_6),
        ("steady-state condition dichotomy", criterion_7),
        ("closed-loop NI under external input", criterion_8),
        ("RK4 convergence order", criterion_9),
        ("event localization", criterion_10),
        ("reproduce-fig4 determinism", criterion_11),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag} {name}: {detail} [{:.2?}]", i + 1, start.elapsed());
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
