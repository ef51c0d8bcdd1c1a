//! Closed loop under a constant external force u = 0.1: each subsystem
//! satisfies its own dissipation inequality, and the interconnection
//! storage satisfies the closed-loop inequality with the smaller strictness.

use nalgebra::DVector;
use switched_ni::certify::certify_feedback_run;
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

    let x0 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
    let u_hat = ConstantInput::from_slice(&[0.1, 0.0]);
    let traj = simulate(&fl.model, &x0, &u_hat, &SimConfig::new(15.0, 1e-3))?;

    for rep in certify_feedback_run(&fl, &traj, 1e-6)? {
        println!(
            "{:<12} {:<40} worst residual {:+.3e}",
            rep.verdict.as_str(),
            rep.check_name,
            rep.worst_residual
        );
    }
    println!("epsilon_min = {}", fl.storage.epsilon_min);
    println!("final state {:?}", traj.last().expect("nonempty").x.as_slice());
    Ok(())
}
