//! Fits a one-layer model to a noise-free AR(1) series with
//! finite-difference gradient descent.

use chimera2d::ar::simulate_sar;
use chimera2d::model::{fit, ChimeraModel, ModelConfig};
use chimera2d::series::SeriesTensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> chimera2d::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let lr: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let series = simulate_sar(&[0.5], &[], 1, &[1.0], 0.0, 513, 0)?;
    let x = SeriesTensor::univariate(&series[..512])?;
    let y = SeriesTensor::univariate(&series[1..])?;

    let cfg = ModelConfig { layers: 1, state_dim: 2, channels: 1, gate_dim: 1, ..Default::default() };
    let model = ChimeraModel::init(&cfg, &mut ChaCha8Rng::seed_from_u64(0))?;
    println!("{} parameters", model.num_params());
    let start = std::time::Instant::now();
    let result = fit(&model, &x, &y, steps, lr)?;
    for (i, loss) in result.losses.iter().enumerate().step_by((steps / 10).max(1)) {
        println!("step {i:5}  mse {loss:.3e}");
    }
    println!("final mse {:.3e} in {:.1?}", result.losses.last().unwrap(), start.elapsed());
    Ok(())
}
