//! Seasonal autoregressive processes and their SSM realization.
//!
//! `x_k = sum_i phi_i x_{k-i} + sum_j eta_j x_{k-js} + e_k`.
//!
//! The embedding is in predictor form. The trend head holds the last `p`
//! values in a shift register (`Abar1` = companion with zero last column,
//! `Bbar1 = e1`) and reads out `C1 = phi`, so its output at `t` is the AR
//! prediction of `x_{t+1}`. The seasonal head is the same construction
//! with `eta`, run over each stride-`s` residue class of the time axis.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::discretize::DiscreteSSM2D;
use crate::error::{Error, Result};
use crate::linalg::{companion_from_coeffs, StructuredMatrix};
use crate::recurrence::forward_recurrence;
use crate::series::SeriesTensor;

/// Simulates `steps` values; the first `init.len()` are the initial history.
pub fn simulate_sar(
    phi: &[f64],
    eta: &[f64],
    season: usize,
    init: &[f64],
    noise_std: f64,
    steps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if season == 0 {
        return Err(Error::InvalidParameter("season must be at least 1".into()));
    }
    if steps == 0 {
        return Err(Error::Empty("series length"));
    }
    let history = phi.len().max(eta.len() * season);
    if init.len() < history {
        return Err(Error::InvalidParameter(format!(
            "need {history} initial values, got {}",
            init.len()
        )));
    }
    let noise = Normal::new(0.0, noise_std)
        .map_err(|_| Error::InvalidParameter(format!("noise std must be >= 0, got {noise_std}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = init.iter().copied().take(steps).collect();
    while x.len() < steps {
        let k = x.len();
        let ar: f64 = phi.iter().enumerate().map(|(i, c)| c * x[k - 1 - i]).sum();
        let seasonal: f64 = eta.iter().enumerate().map(|(j, c)| c * x[k - (j + 1) * season]).sum();
        let e = if noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        x.push(ar + seasonal + e);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("simulated series"));
    }
    Ok(x)
}

/// Predictor head: shift register of the last `coeffs.len()` inputs read
/// out through `coeffs`.
fn predictor_head(coeffs: &[f64]) -> Result<DiscreteSSM2D> {
    let n = coeffs.len();
    let mut e1 = vec![0.0; n];
    e1[0] = 1.0;
    DiscreteSSM2D::new(
        companion_from_coeffs(&vec![0.0; n])?,
        StructuredMatrix::zeros(n),
        StructuredMatrix::zeros(n),
        StructuredMatrix::zeros(n),
        e1,
        vec![0.0; n],
        coeffs.to_vec(),
        vec![0.0; n],
    )
}

/// SSM heads realizing a SAR(p, q, s) one-step predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct SarEmbedding {
    pub trend: Option<DiscreteSSM2D>,
    pub seasonal: Option<DiscreteSSM2D>,
    /// Time stride of the seasonal head.
    pub season: usize,
}

pub fn sar_to_ssm(phi: &[f64], eta: &[f64], season: usize) -> Result<SarEmbedding> {
    if phi.is_empty() && eta.is_empty() {
        return Err(Error::Empty("SAR coefficients"));
    }
    if season == 0 {
        return Err(Error::InvalidParameter("season must be at least 1".into()));
    }
    Ok(SarEmbedding {
        trend: (!phi.is_empty()).then(|| predictor_head(phi)).transpose()?,
        seasonal: (!eta.is_empty()).then(|| predictor_head(eta)).transpose()?,
        season,
    })
}

impl SarEmbedding {
    /// Values needed before the first prediction.
    pub fn history(&self) -> usize {
        let p = self.trend.as_ref().map_or(0, DiscreteSSM2D::state_dim);
        let q = self.seasonal.as_ref().map_or(0, DiscreteSSM2D::state_dim);
        p.max(q * self.season)
    }

    /// `out[k]` predicts `series[k]` from `series[..k]`, for `k` in
    /// `1..=series.len()`; `out[0]` is zero.
    pub fn predict(&self, series: &[f64]) -> Result<Vec<f64>> {
        let n = series.len();
        let mut out = vec![0.0; n + 1];
        if n == 0 {
            return Ok(out);
        }
        if let Some(head) = &self.trend {
            let (y, _) = forward_recurrence(head, &SeriesTensor::univariate(series)?)?;
            for t in 0..n {
                out[t + 1] += y.get(0, t, 0);
            }
        }
        if let Some(head) = &self.seasonal {
            let s = self.season;
            for r in 0..s.min(n) {
                let class: Vec<f64> = series.iter().skip(r).step_by(s).copied().collect();
                let (y, _) = forward_recurrence(head, &SeriesTensor::univariate(&class)?)?;
                for m in 0..class.len() {
                    let k = r + (m + 1) * s;
                    if k <= n {
                        out[k] += y.get(0, m, 0);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Closed loop: extends `init` to `steps` values by feeding each
    /// prediction back as the next input.
    pub fn generate(&self, init: &[f64], steps: usize) -> Result<Vec<f64>> {
        if init.len() < self.history() {
            return Err(Error::InvalidParameter(format!("need {} initial values", self.history())));
        }
        let mut x: Vec<f64> = init.iter().copied().take(steps).collect();
        while x.len() < steps {
            let next = *self.predict(&x)?.last().expect("n + 1 entries");
            x.push(next);
        }
        Ok(x)
    }
}

/// Coefficients with `sum |phi| + sum |eta| < 1`, so every root of the
/// characteristic polynomial lies outside the unit circle. Rejection
/// sampled.
pub fn stable_sar_coeffs(rng: &mut impl Rng, p: usize, q: usize) -> (Vec<f64>, Vec<f64>) {
    loop {
        let phi: Vec<f64> = (0..p).map(|_| rng.gen_range(-0.6..0.6)).collect();
        let eta: Vec<f64> = (0..q).map(|_| rng.gen_range(-0.6..0.6)).collect();
        if phi.iter().chain(&eta).map(|c| c.abs()).sum::<f64>() < 1.0 {
            return (phi, eta);
        }
    }
}
