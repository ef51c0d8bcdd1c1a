//! A user-defined switched system: a unit-gain lag ẋ = a(u - x) whose rate
//! changes on a fixed schedule. Both modes share V = x²/2, so storage does
//! not jump at the switches.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use switched_ni::certify::{check_ni_dissipation, check_switch_monotonicity};
use switched_ni::{
    simulate, FieldFn, ModeIndex, PiecewiseConstantInput, SimConfig, StorageFamily,
    SwitchedSystemModel, SwitchingLaw,
};

fn lag(rate: f64) -> FieldFn {
    Arc::new(move |x, u| DVector::from_element(1, rate * (u.value[0] - x[0])))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mode = |i| ModeIndex::new(i, 2);
    let mut model = SwitchedSystemModel::single_mode(
        "scheduled lag",
        1,
        1,
        |x, u| DVector::from_element(1, -x[0] + u.value[0]),
        |x| x.clone(),
        |_| DMatrix::identity(1, 1),
    );
    model.modes = vec![lag(1.0), lag(5.0)];
    model.mode_names = vec!["slow".into(), "fast".into()];
    model.switching_law =
        SwitchingLaw::time_schedule(mode(1)?, vec![(1.0, mode(2)?), (2.5, mode(1)?)])?;

    // y = x and V = x²/2 give u ẏ - V̇ = (u - x) ẋ = a (u - x)² >= 0
    let storage = StorageFamily::common(2, |x| 0.5 * x[0] * x[0], |x| x.clone(), 0.0);

    let input = PiecewiseConstantInput::new(vec![
        (0.0, DVector::from_element(1, 1.0)),
        (3.0, DVector::from_element(1, -0.5)),
    ])?;
    let traj = simulate(&model, &DVector::zeros(1), &input, &SimConfig::new(4.0, 1e-3))?;

    for ev in &traj.switch_events {
        println!(
            "t = {}  {} -> {}  x = {:.6}",
            ev.t,
            model.mode_name(ev.from),
            model.mode_name(ev.to),
            ev.x[0]
        );
    }
    let ni = check_ni_dissipation(&model, &traj, &storage, 0.0, 1e-9)?;
    let mono = check_switch_monotonicity(&traj, &storage, None, 1e-12)?;
    println!("NI: {} (worst {:.3e})", ni.verdict.as_str(), ni.worst_residual);
    println!("switch monotonicity: {}", mono.verdict.as_str());
    Ok(())
}
