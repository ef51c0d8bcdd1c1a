//! Invariants over random states, inputs and parameters.

use nalgebra::DVector;
use proptest::prelude::*;
use switched_ni::certify::{check_higs_sector, check_ni_dissipation, check_positive_definite, RegionSpec};
use switched_ni::export::{parse_trajectory, write_trajectory, Metadata};
use switched_ni::interconnect::{build_positive_feedback, joint_mode, split_mode, DissipativeSystem, FeedbackLoop};
use switched_ni::systems::{
    higs_model, higs_storage_family, plant_model, plant_storage_family, HigsParams, PlantParams,
};
use switched_ni::{
    eval_output_derivative, simulate, ConstantInput, FnInput, InputSample, ModeIndex, SimConfig,
};

fn feedback(omega_h: f64, k_h: f64) -> FeedbackLoop {
    let p = HigsParams::new(omega_h, k_h).unwrap();
    let plant = DissipativeSystem::new(
        plant_model(PlantParams::default()),
        plant_storage_family(PlantParams::default()),
    )
    .unwrap();
    let higs = DissipativeSystem::new(higs_model(p), higs_storage_family(p)).unwrap();
    build_positive_feedback(&plant, &higs).unwrap()
}

fn state3() -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-3.0..3.0f64, 3).prop_map(DVector::from_vec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn plant_ydot_matches_finite_difference(x1 in -3.0..3.0f64, x2 in -3.0..3.0f64, u in -2.0..2.0f64) {
        let model = plant_model(PlantParams::default());
        let x = DVector::from_vec(vec![x1, x2]);
        let input = InputSample::scalar(u, 0.0);
        let mode = ModeIndex::new(1, 1).unwrap();
        let ydot = eval_output_derivative(&model, &x, &input, mode).unwrap();
        let f = model.field(mode, &x, &input).unwrap();
        let h = 1e-6;
        let fd = (model.output(&(&x + &f * h)) - model.output(&(&x - &f * h))) / (2.0 * h);
        prop_assert!((ydot[0] - fd[0]).abs() <= 1e-6 * (1.0 + fd[0].abs()));
    }

    #[test]
    fn closed_loop_storage_gradient_matches_finite_difference(z in state3(), k_h in 0.2..2.0f64, mode in 1usize..=2) {
        let fl = feedback(20.0, k_h);
        let w = fl.storage.as_family();
        let m = ModeIndex::new(mode, 2).unwrap();
        let g = w.gradient(m, &z).unwrap();
        for i in 0..3 {
            let mut e = DVector::zeros(3);
            e[i] = 1e-6;
            let fd = (w.value(m, &(&z + &e)).unwrap() - w.value(m, &(&z - &e)).unwrap()) / 2e-6;
            prop_assert!((g[i] - fd).abs() <= 1e-5 * (1.0 + fd.abs()), "component {i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn joint_mode_encoding_round_trips(i in 1usize..=5, j in 1usize..=7) {
        let (a, b) = (ModeIndex::new(i, 5).unwrap(), ModeIndex::new(j, 7).unwrap());
        let m = joint_mode(a, b, 7);
        prop_assert_eq!(m.get(), (i - 1) * 7 + j);
        prop_assert_eq!(split_mode(m, 7), (a, b));
    }

    #[test]
    fn simulation_is_deterministic(x1 in -5.0..5.0f64, x2 in -3.0..3.0f64) {
        let fl = feedback(20.0, 0.8);
        let x0 = DVector::from_vec(vec![x1, x2, 0.0]);
        let cfg = SimConfig::new(2.0, 1e-3);
        let a = simulate(&fl.model, &x0, &ConstantInput::zeros(2), &cfg).unwrap();
        let b = simulate(&fl.model, &x0, &ConstantInput::zeros(2), &cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn trajectories_are_continuous(x1 in -5.0..5.0f64, x2 in -3.0..3.0f64, u in -1.0..1.0f64) {
        let fl = feedback(20.0, 0.8);
        let x0 = DVector::from_vec(vec![x1, x2, 0.0]);
        let traj = simulate(&fl.model, &x0, &ConstantInput::from_slice(&[u, 0.0]), &SimConfig::new(2.0, 1e-3)).unwrap();
        for pair in traj.samples.windows(2) {
            let dt = pair[1].t - pair[0].t;
            prop_assert!(dt > 0.0);
            // rates along the loop stay far below 1e4 for these initial states
            prop_assert!((&pair[1].x - &pair[0].x).amax() <= 1e4 * dt);
        }
    }

    #[test]
    fn higs_stays_in_sector_under_sinusoids(amp in 0.1..3.0f64, w in 0.2..10.0f64, k_h in 0.2..2.0f64, omega_h in 0.0..50.0f64) {
        let p = HigsParams::new(omega_h, k_h).unwrap();
        let model = higs_model(p);
        let e = FnInput::new(
            1,
            move |t| DVector::from_element(1, amp * (w * t).sin()),
            move |t| DVector::from_element(1, amp * w * (w * t).cos()),
        );
        let traj = simulate(&model, &DVector::zeros(1), &e, &SimConfig::new(3.0, 1e-3)).unwrap();
        let rep = check_higs_sector(&traj, k_h, 1e-6);
        prop_assert!(rep.passed(), "worst {}", rep.worst_residual);
        let ni = check_ni_dissipation(&model, &traj, &higs_storage_family(p), 0.0, 1e-6).unwrap();
        prop_assert!(ni.passed(), "NI worst {}", ni.worst_residual);
    }

    #[test]
    fn closed_loop_dissipation_holds_with_small_gain(k_h in 0.1..1.0f64, omega_h in 1.0..40.0f64, x1 in -3.0..3.0f64, u in -0.5..0.5f64) {
        let fl = feedback(omega_h, k_h);
        let x0 = DVector::from_vec(vec![x1, 0.0, 0.0]);
        let traj = simulate(&fl.model, &x0, &ConstantInput::from_slice(&[u, 0.0]), &SimConfig::new(3.0, 1e-3)).unwrap();
        let w = fl.storage.as_family();
        let rep = check_ni_dissipation(&fl.model, &traj, &w, fl.storage.epsilon_min, 1e-5).unwrap();
        prop_assert!(rep.passed(), "worst {}", rep.worst_residual);
    }

    #[test]
    fn csv_round_trip_is_exact(x1 in -5.0..5.0f64, x2 in -3.0..3.0f64, stride in 1usize..20) {
        let fl = feedback(20.0, 0.8);
        let x0 = DVector::from_vec(vec![x1, x2, 0.0]);
        let traj = simulate(&fl.model, &x0, &ConstantInput::zeros(2), &SimConfig::new(1.0, 1e-3).with_stride(stride)).unwrap();
        let mut buf = Vec::new();
        write_trajectory(&traj, &Metadata::new().with("stride", stride), &mut buf).unwrap();
        let table = parse_trajectory(buf.as_slice()).unwrap();
        prop_assert_eq!(table.rows.len(), traj.len());
        for (r, s) in table.rows.iter().zip(&traj.samples) {
            prop_assert_eq!(r.t.to_bits(), s.t.to_bits());
            prop_assert!(r.x.iter().zip(s.x.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert!(r.u.iter().zip(s.input.value.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert!(r.y.iter().zip(s.y.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert!(r.ydot.iter().zip(s.ydot.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert_eq!(r.mode, s.mode.get());
        }
        prop_assert_eq!(table.rows.iter().filter(|r| r.event).count(), traj.switch_events.len());
    }

    #[test]
    fn finer_grid_never_raises_the_minimum(k_h in 0.5..2.0f64, n in 2usize..8) {
        let f = |p: &[f64]| 0.25 * p[0].powi(4) + 0.5 * p[0] * p[0] + 0.5 * p[1] * p[1]
            + p[2] * p[2] / (2.0 * k_h) - p[2] * p[0];
        // 2n+1 points per axis contain the n+1 point grid
        let coarse = RegionSpec::cube(3, 2.0, n + 1).with_exclusion(0.05);
        let fine = RegionSpec::cube(3, 2.0, 2 * n + 1).with_exclusion(0.05);
        let a = check_positive_definite(f, &coarse, 1e-12).unwrap();
        let b = check_positive_definite(f, &fine, 1e-12).unwrap();
        prop_assert!(b.worst_residual <= a.worst_residual);
    }

    #[test]
    fn region_worst_point_is_reproducible(k_h in 0.5..2.0f64) {
        let f = |p: &[f64]| 0.25 * p[0].powi(4) + 0.5 * p[0] * p[0] + 0.5 * p[1] * p[1]
            + p[2] * p[2] / (2.0 * k_h) - p[2] * p[0];
        let region = RegionSpec::cube(3, 2.0, 11);
        let rep = check_positive_definite(f, &region, 1e-12).unwrap();
        let again = check_positive_definite(f, &region, 1e-12).unwrap();
        prop_assert_eq!(&rep, &again);
        let p = rep.worst_point.unwrap();
        prop_assert!((f(&p.x) - rep.worst_residual).abs() <= 1e-12);
    }
}

#[test]
fn single_mode_check_equals_unswitched_definition() {
    // for a one-mode plant the switched inequality is u ẏ - ε ẏ² - V̇
    let model = plant_model(PlantParams::default());
    let fam = plant_storage_family(PlantParams::default());
    let traj = simulate(
        &model,
        &DVector::from_vec(vec![1.5, -0.5]),
        &ConstantInput::from_slice(&[0.2]),
        &SimConfig::new(3.0, 1e-3),
    )
    .unwrap();
    let rep = check_ni_dissipation(&model, &traj, &fam, 0.5, 0.0).unwrap();
    let by_hand = traj
        .samples
        .iter()
        .map(|s| {
            let (x1, x2, u) = (s.x[0], s.x[1], s.input.value[0]);
            let x2dot = -x1.powi(3) - x1 - x2 + u;
            let vdot = (x1.powi(3) + x1) * x2 + x2 * x2dot;
            u * x2 - 0.5 * x2 * x2 - vdot
        })
        .fold(f64::INFINITY, f64::min);
    assert!((rep.worst_residual - by_hand).abs() <= 1e-12);
    // the exact identity is u ẏ - ẏ² - V̇ = 0, so with ε = 0.5 the residual is ½ẏ²
    assert!(rep.worst_residual >= -1e-12);
}
