//! Steady states of the plant followed by the HIGS under constant input.
//! For k_h <= 1 the cascade output never equals a nonzero input; for
//! k_h = 1.5 it does at u = k_h √(k_h - 1).

use nalgebra::DVector;
use switched_ni::certify::{
    check_assumption_iii, newton_root_scan, plant_higs_dc_roots, settle_cascade, SettleOptions,
};
use switched_ni::interconnect::build_cascade;
use switched_ni::systems::{higs_model, plant_model, HigsParams, PlantParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let plant = PlantParams::default();
    let opts = SettleOptions {
        gap_tol: 1e-4,
        ..SettleOptions::default()
    };
    for k_h in [0.5, 1.0, 1.5] {
        let roots = plant_higs_dc_roots(&plant, k_h);
        let seeds: Vec<f64> = (-8..=8).map(|i| 0.25 * i as f64).collect();
        let newton = newton_root_scan(
            |x| x * (x * x + 1.0 - k_h),
            |x| 3.0 * x * x + 1.0 - k_h,
            &seeds,
            1e-10,
        );
        println!("k_h = {k_h}: closed-form nonzero roots {roots:?}, Newton roots {newton:?}");

        let cascade = build_cascade(&plant_model(plant), &higs_model(HigsParams::new(20.0, k_h)?))?;
        let x0 = DVector::zeros(3);
        let rep = check_assumption_iii(&cascade, &x0, &[2.0, -2.0, 0.5, -0.5], &opts)?;
        println!("  simulated inputs ±2, ±0.5: {}", rep.verdict.as_str());
        for note in &rep.notes {
            println!("    {note}");
        }
        if let Some(&r) = roots.iter().find(|r| **r > 0.0) {
            let u = k_h * r;
            let p = settle_cascade(&cascade, &x0, u, &opts)?;
            println!("  at u = {u:.6}: output {:?}", p.output);
        }
    }
    Ok(())
}
