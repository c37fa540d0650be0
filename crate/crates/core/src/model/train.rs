//! Finite-difference gradients, gradient descent and rollout forecasts.

use rayon::prelude::*;

use super::ChimeraModel;
use crate::error::{shape_err, Error, Result};
use crate::series::SeriesTensor;

/// Relative step of the central difference.
pub const FD_STEP: f64 = 1e-4;

/// Absolute slack for the Richardson comparison, relative to the loss
/// magnitude; covers rounding in `L(theta + h) - L(theta - h)`.
const ROUNDING_FLOOR: f64 = 1e-9;

fn step_for(theta: f64, scale: f64) -> f64 {
    FD_STEP * scale * theta.abs().max(1.0)
}

/// Central-difference gradient of `f` at `theta` over `coords` (all
/// coordinates when `None`). Coordinates are evaluated in parallel.
pub fn fd_gradient_fn<F>(theta: &[f64], f: &F, coords: Option<&[usize]>) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    fd_gradient_scaled(theta, f, coords, 1.0)
}

fn fd_gradient_scaled<F>(theta: &[f64], f: &F, coords: Option<&[usize]>, scale: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..theta.len()).collect();
            &all
        }
    };
    if let Some(&bad) = coords.iter().find(|&&i| i >= theta.len()) {
        return Err(shape_err(format!("coordinate {bad} of {} parameters", theta.len())));
    }
    coords
        .par_iter()
        .map(|&i| {
            let h = step_for(theta[i], scale);
            let mut probe = theta.to_vec();
            probe[i] = theta[i] + h;
            let up = f(&probe)?;
            probe[i] = theta[i] - h;
            let down = f(&probe)?;
            if !(up.is_finite() && down.is_finite()) {
                return Err(Error::NonFinite("loss"));
            }
            Ok((up - down) / (2.0 * h))
        })
        .collect()
}

fn model_objective<'a, L>(m: &'a ChimeraModel, loss: &'a L) -> impl Fn(&[f64]) -> Result<f64> + Sync + 'a
where
    L: Fn(&ChimeraModel) -> Result<f64> + Sync,
{
    move |theta: &[f64]| {
        let mut probe = m.clone();
        probe.set_param_vector(theta)?;
        loss(&probe)
    }
}

/// Gradient of `loss` with respect to the model's flat parameter vector.
pub fn fd_gradient<L>(m: &ChimeraModel, loss: &L, coords: Option<&[usize]>) -> Result<Vec<f64>>
where
    L: Fn(&ChimeraModel) -> Result<f64> + Sync,
{
    fd_gradient_fn(&m.param_vector(), &model_objective(m, loss), coords)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RichardsonReport {
    pub coordinates: usize,
    pub agreeing: usize,
    /// Largest relative disagreement between the `h` and `h/2` estimates.
    pub worst: f64,
}

impl RichardsonReport {
    pub fn fraction(&self) -> f64 {
        if self.coordinates == 0 {
            1.0
        } else {
            self.agreeing as f64 / self.coordinates as f64
        }
    }

    /// At least 95% of coordinates agree within `1e-3` relative.
    pub fn passed(&self) -> bool {
        self.fraction() >= 0.95
    }
}

/// Compares gradients taken with steps `h` and `h/2`.
pub fn richardson_check<L>(m: &ChimeraModel, loss: &L, coords: Option<&[usize]>) -> Result<RichardsonReport>
where
    L: Fn(&ChimeraModel) -> Result<f64> + Sync,
{
    let theta = m.param_vector();
    let objective = model_objective(m, loss);
    let base = objective(&theta)?;
    let g1 = fd_gradient_scaled(&theta, &objective, coords, 1.0)?;
    let g2 = fd_gradient_scaled(&theta, &objective, coords, 0.5)?;
    let floor = ROUNDING_FLOOR * base.abs().max(1.0);
    let mut agreeing = 0;
    let mut worst = 0.0f64;
    for (a, b) in g1.iter().zip(&g2) {
        let diff = (a - b).abs();
        let scale = a.abs().max(b.abs());
        if diff <= 1e-3 * scale + floor {
            agreeing += 1;
        }
        if scale > 0.0 {
            worst = worst.max(diff / scale);
        }
    }
    Ok(RichardsonReport { coordinates: g1.len(), agreeing, worst })
}

pub fn mse_loss(m: &ChimeraModel, x: &SeriesTensor, target: &SeriesTensor) -> Result<f64> {
    m.forward(x)?.mean_squared_error(target)
}

/// Trained model and the loss before each step and after the last.
#[derive(Clone, Debug)]
pub struct Fit {
    pub model: ChimeraModel,
    pub losses: Vec<f64>,
}

/// Plain gradient descent on MSE with finite-difference gradients.
pub fn fit(m: &ChimeraModel, x: &SeriesTensor, target: &SeriesTensor, steps: usize, lr: f64) -> Result<Fit> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidParameter(format!("learning rate must be positive, got {lr}")));
    }
    let mut model = m.clone();
    let mut losses = Vec::with_capacity(steps + 1);
    let diverged = |step: usize, loss: f64| Error::Diverged { step, loss };
    for step in 0..=steps {
        // After an update, parameters that no longer evaluate (overflow, a
        // step size rounded to zero) mean the descent blew up.
        let loss = match mse_loss(&model, x, target) {
            Ok(l) if l.is_finite() => l,
            Ok(l) => return Err(diverged(step, l)),
            Err(Error::NonFinite(_)) => return Err(diverged(step, f64::NAN)),
            Err(Error::InvalidParameter(_)) if step > 0 => return Err(diverged(step, f64::NAN)),
            Err(e) => return Err(e),
        };
        losses.push(loss);
        if step == steps {
            break;
        }
        let objective = |mm: &ChimeraModel| mse_loss(mm, x, target);
        let grad = fd_gradient(&model, &objective, None).map_err(|e| match e {
            Error::NonFinite(_) | Error::InvalidParameter(_) => diverged(step, loss),
            other => other,
        })?;
        let theta: Vec<f64> = model.param_vector().iter().zip(&grad).map(|(t, g)| t - lr * g).collect();
        model.set_param_vector(&theta)?;
    }
    Ok(Fit { model, losses })
}

/// Rolls the one-step predictor forward: each new column is the model's
/// output at the last column of the growing series. Returns `V x H x d`.
pub fn forecast(m: &ChimeraModel, context: &SeriesTensor, horizon: usize) -> Result<SeriesTensor> {
    let (nv, _, d) = context.shape();
    let mut series = context.clone();
    let mut out = SeriesTensor::zeros(nv, horizon, d);
    for h in 0..horizon {
        let y = m.forward(&series)?;
        let last = y.slice_steps(y.steps() - 1, y.steps())?;
        for v in 0..nv {
            out.cell_mut(v, h).copy_from_slice(last.cell(v, 0));
        }
        series = series.concat_steps(&last)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_gradient() {
        let g = fd_gradient_fn(&[3.0], &|t: &[f64]| Ok(t[0] * t[0]), None).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);
        let g = fd_gradient_fn(&[3.0, 7.0], &|t: &[f64]| Ok(t[0] * t[0]), Some(&[1])).unwrap();
        assert!(g[0].abs() < 1e-8);
        assert!(fd_gradient_fn(&[1.0], &|_: &[f64]| Ok(f64::NAN), None).is_err());
    }

    fn small_problem() -> (ChimeraModel, SeriesTensor, SeriesTensor) {
        let cfg = ModelConfig { layers: 1, state_dim: 2, channels: 1, gate_dim: 2, ..Default::default() };
        let m = ChimeraModel::init(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let series: Vec<f64> = (0..33).map(|k| (k as f64 * 0.7).sin()).collect();
        let x = SeriesTensor::univariate(&series[..32]).unwrap();
        let y = SeriesTensor::univariate(&series[1..]).unwrap();
        (m, x, y)
    }

    #[test]
    fn richardson_on_small_model() {
        let (m, x, y) = small_problem();
        let report = richardson_check(&m, &|mm: &ChimeraModel| mse_loss(mm, &x, &y), None).unwrap();
        assert_eq!(report.coordinates, m.num_params());
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn zero_steps_is_identity_and_descent_helps() {
        let (m, x, y) = small_problem();
        let f = fit(&m, &x, &y, 0, 0.01).unwrap();
        assert_eq!(f.model, m);
        assert_eq!(f.losses.len(), 1);
        let f = fit(&m, &x, &y, 20, 0.05).unwrap();
        assert!(f.losses[20] < f.losses[0]);
    }

    #[test]
    fn divergence_is_reported() {
        let (m, x, y) = small_problem();
        assert!(matches!(fit(&m, &x, &y, 50, 1e12), Err(Error::Diverged { .. })));
    }

    #[test]
    fn forecast_shape() {
        let (m, x, _) = small_problem();
        let f = forecast(&m, &x, 5).unwrap();
        assert_eq!(f.shape(), (1, 5, 1));
    }
}
