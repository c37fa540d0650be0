//! Embeds a seasonal autoregression in 2D SSM heads and regenerates the
//! series from its initial values.

use chimera2d::ar::{sar_to_ssm, simulate_sar};

fn main() -> chimera2d::Result<()> {
    let (phi, eta, season) = (vec![0.4, -0.2], vec![0.3], 4);
    let emb = sar_to_ssm(&phi, &eta, season)?;
    let init: Vec<f64> = (0..emb.history()).map(|i| (i as f64).cos()).collect();
    let reference = simulate_sar(&phi, &eta, season, &init, 0.0, 24, 0)?;
    let generated = emb.generate(&init, 24)?;
    for (t, (a, b)) in reference.iter().zip(&generated).enumerate() {
        println!("{t:3} {a:9.5} {b:9.5}");
    }
    let diff = reference.iter().zip(&generated).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("max diff {diff:.2e}");
    Ok(())
}
