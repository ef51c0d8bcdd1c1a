//! HIGS in positive feedback with the nonlinear mass-spring-damper, starting
//! from x1 = 5. Prints the switching instants and the closed-loop storage.

use nalgebra::DVector;
use switched_ni::interconnect::{build_positive_feedback, DissipativeSystem};
use switched_ni::systems::{
    higs_model, higs_storage_family, plant_model, plant_storage_family, HigsParams, PlantParams,
};
use switched_ni::{simulate, ConstantInput, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = HigsParams::new(20.0, 0.8)?;
    let plant = DissipativeSystem::new(
        plant_model(PlantParams::default()),
        plant_storage_family(PlantParams::default()),
    )?;
    let higs = DissipativeSystem::new(higs_model(params), higs_storage_family(params))?;
    let fl = build_positive_feedback(&plant, &higs)?;

    let x0 = DVector::from_vec(vec![5.0, 0.0, 0.0]);
    let traj = simulate(&fl.model, &x0, &ConstantInput::zeros(2), &SimConfig::new(15.0, 1e-3))?;

    println!("{} samples, {} switches", traj.len(), traj.switch_events.len());
    for ev in &traj.switch_events {
        let (_, from) = fl.split_mode(ev.from);
        let (_, to) = fl.split_mode(ev.to);
        println!("  t = {:.6}  HIGS mode {from} -> {to}", ev.t);
    }

    let w = fl.storage.as_family();
    for s in traj.samples.iter().step_by(1500) {
        println!(
            "t = {:5.2}  x = [{:+.5}, {:+.5}, {:+.5}]  W = {:.6}",
            s.t,
            s.x[0],
            s.x[1],
            s.x[2],
            w.value(s.mode, &s.x)?
        );
    }
    let last = traj.last().expect("nonempty");
    println!("|x(15)| = {:.5}", last.x.norm());
    Ok(())
}
