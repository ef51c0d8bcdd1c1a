//! Writes a trajectory as CSV and SVG, then reads the CSV back and confirms
//! every value survives the round trip bit for bit.

use nalgebra::DVector;
use switched_ni::export::{emit_plot, emit_trajectory, parse_trajectory, Metadata, PlotOptions};
use switched_ni::systems::{plant_model, PlantParams};
use switched_ni::{simulate, ConstantInput, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "export-out".into());
    let dir = std::path::PathBuf::from(dir);
    std::fs::create_dir_all(&dir)?;

    let model = plant_model(PlantParams::default());
    let config = SimConfig::new(10.0, 1e-3).with_stride(10);
    let traj = simulate(&model, &DVector::from_vec(vec![2.0, 0.0]), &ConstantInput::zeros(1), &config)?;

    let meta = Metadata::new().with("system", "plant").with("step", config.step);
    let csv_path = dir.join("plant.csv");
    emit_trajectory(&traj, &meta, &csv_path)?;
    let opts = PlotOptions {
        title: "plant free response".into(),
        labels: vec!["x1".into(), "x2".into()],
        ..PlotOptions::default()
    };
    emit_plot(&traj, &opts, &dir.join("plant.svg"))?;

    let table = parse_trajectory(std::fs::File::open(&csv_path)?)?;
    let exact = table.rows.iter().zip(&traj.samples).all(|(r, s)| {
        r.t.to_bits() == s.t.to_bits() && r.x.iter().zip(s.x.iter()).all(|(a, b)| a.to_bits() == b.to_bits())
    });
    println!("{} rows written to {}", table.rows.len(), csv_path.display());
    println!("round trip exact: {exact}");
    Ok(())
}
