//! Grid falsification of positive definiteness of the closed-loop storage
//! W = ¼x1⁴ + ½x1² + ½x2² + x_h²/(2k_h) - x_h x1 for two gains.

use switched_ni::certify::{check_positive_definite, RegionSpec};

fn w(k_h: f64, p: &[f64]) -> f64 {
    let (x1, x2, xh) = (p[0], p[1], p[2]);
    0.25 * x1.powi(4) + 0.5 * x1 * x1 + 0.5 * x2 * x2 + xh * xh / (2.0 * k_h) - xh * x1
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let region = RegionSpec::cube(3, 2.0, 41);
    for k_h in [0.8, 1.0, 1.5] {
        let t = std::time::Instant::now();
        let rep = check_positive_definite(|p| w(k_h, p), &region, 1e-9)?;
        println!(
            "k_h = {k_h}: {} over {} points in {:?}, min W = {:.6e}",
            rep.verdict.as_str(),
            rep.samples_evaluated,
            t.elapsed(),
            rep.worst_residual
        );
        if let Some(p) = &rep.worst_point {
            println!("  minimum at {:?}", p.x);
        }
        if let Some(p) = &rep.witness {
            println!("  violation nearest the origin {:?}, W = {:.6e}", p.x, w(k_h, &p.x));
        }
    }
    Ok(())
}
