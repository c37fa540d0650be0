//! Fits a small model to a trend plus seasonal series and forecasts ahead
//! by feeding predictions back in.

use chimera2d::model::{fit, forecast, ChimeraModel, ModelConfig};
use chimera2d::series::SeriesTensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> chimera2d::Result<()> {
    let pattern = [0.5, 0.0, -0.5, 0.0];
    let series: Vec<f64> = (0..140).map(|t| 0.02 * t as f64 + pattern[t % 4]).collect();
    let (train, test) = series.split_at(128);
    let x = SeriesTensor::univariate(&train[..127])?;
    let y = SeriesTensor::univariate(&train[1..])?;

    let cfg = ModelConfig { layers: 1, state_dim: 2, channels: 1, gate_dim: 2, ..Default::default() };
    let model = ChimeraModel::init(&cfg, &mut ChaCha8Rng::seed_from_u64(0))?;
    let result = fit(&model, &x, &y, 150, 0.03)?;
    println!("train mse {:.3e}", result.losses.last().unwrap());

    let pred = forecast(&result.model, &SeriesTensor::univariate(train)?, test.len())?;
    for (h, actual) in test.iter().enumerate() {
        println!("t={:3} actual {actual:7.3} forecast {:7.3}", 128 + h, pred.get(0, h, 0));
    }
    Ok(())
}
