//! Point-forecast error metrics in the M4 conventions.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
    pub smape: f64,
    pub mase: f64,
    /// Relative to the seasonally adjusted naive forecast; absent when that
    /// baseline is not supplied.
    pub owa: Option<f64>,
}

fn check(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(shape_err(format!("{} predictions for {} targets", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(Error::Empty("forecast"));
    }
    if pred.iter().chain(truth).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("metric input"));
    }
    Ok(())
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// `200/n sum |p - t| / (|p| + |t|)`; pairs with `p = t = 0` contribute 0.
pub fn smape(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    let sum: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| {
            let denom = p.abs() + t.abs();
            if denom == 0.0 {
                0.0
            } else {
                (p - t).abs() / denom
            }
        })
        .sum();
    Ok(200.0 * sum / pred.len() as f64)
}

/// Mean absolute error scaled by the in-sample seasonal-naive error at lag
/// `season`.
pub fn mase(pred: &[f64], truth: &[f64], insample: &[f64], season: usize) -> Result<f64> {
    check(pred, truth)?;
    if season == 0 || insample.len() <= season {
        return Err(Error::UndefinedMetric("MASE needs more in-sample values than the season"));
    }
    let naive: f64 = insample.windows(season + 1).map(|w| (w[season] - w[0]).abs()).sum::<f64>()
        / (insample.len() - season) as f64;
    if naive == 0.0 {
        return Err(Error::UndefinedMetric("MASE scale is zero (constant in-sample naive error)"));
    }
    Ok(mae(pred, truth)? / naive)
}

/// `(SMAPE / SMAPE_naive2 + MASE / MASE_naive2) / 2`.
pub fn owa(smape: f64, mase: f64, smape_naive2: f64, mase_naive2: f64) -> Result<f64> {
    if smape_naive2 == 0.0 || mase_naive2 == 0.0 {
        return Err(Error::UndefinedMetric("OWA baseline error is zero"));
    }
    Ok(0.5 * (smape / smape_naive2 + mase / mase_naive2))
}

/// All metrics; OWA is computed when a baseline forecast is supplied.
pub fn compute_metrics(
    pred: &[f64],
    truth: &[f64],
    insample: &[f64],
    season: usize,
    naive2: Option<&[f64]>,
) -> Result<Metrics> {
    let smape_v = smape(pred, truth)?;
    let mase_v = mase(pred, truth, insample, season)?;
    let owa_v = naive2
        .map(|base| owa(smape_v, mase_v, smape(base, truth)?, mase(base, truth, insample, season)?))
        .transpose()?;
    Ok(Metrics { mse: mse(pred, truth)?, mae: mae(pred, truth)?, smape: smape_v, mase: mase_v, owa: owa_v })
}

/// Last in-sample value repeated over the horizon.
pub fn naive_forecast(insample: &[f64], horizon: usize) -> Result<Vec<f64>> {
    let last = *insample.last().ok_or(Error::Empty("in-sample series"))?;
    Ok(vec![last; horizon])
}

/// The M4 "Naive2" baseline: naive forecast of the seasonally adjusted
/// series (classical multiplicative decomposition), reseasonalized.
/// Falls back to the plain naive forecast when `season <= 1`, the history
/// is shorter than two seasons, or the seasonal indices are not positive.
pub fn naive2_forecast(insample: &[f64], season: usize, horizon: usize) -> Result<Vec<f64>> {
    let n = insample.len();
    if season <= 1 || n < 2 * season {
        return naive_forecast(insample, horizon);
    }
    // Centered moving average of order `season` (2 x season when even).
    let mut ratios = vec![Vec::new(); season];
    let half = season / 2;
    for t in half..n - half {
        let cma = if season % 2 == 1 {
            insample[t - half..=t + half].iter().sum::<f64>() / season as f64
        } else {
            let a: f64 = insample[t - half..t + half].iter().sum();
            let b: f64 = insample[t - half + 1..=t + half].iter().sum();
            (a + b) / (2.0 * season as f64)
        };
        if cma != 0.0 {
            ratios[t % season].push(insample[t] / cma);
        }
    }
    let mut index: Vec<f64> = ratios.iter().map(|r| if r.is_empty() { 1.0 } else { r.iter().sum::<f64>() / r.len() as f64 }).collect();
    let mean = index.iter().sum::<f64>() / season as f64;
    if !(mean > 0.0) || index.iter().any(|&i| !(i > 0.0)) {
        return naive_forecast(insample, horizon);
    }
    index.iter_mut().for_each(|i| *i /= mean);
    let last_adjusted = insample[n - 1] / index[(n - 1) % season];
    Ok((0..horizon).map(|h| last_adjusted * index[(n + h) % season]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_forecast() {
        let t = [1.0, 2.0, 3.0];
        let m = compute_metrics(&t, &t, &[0.0, 1.0, 3.0], 1, None).unwrap();
        assert_eq!((m.mse, m.mae, m.smape, m.mase), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn worked_example() {
        let (p, t) = ([1.0, 1.0], [0.0, 2.0]);
        assert_eq!(mse(&p, &t).unwrap(), 1.0);
        assert_eq!(mae(&p, &t).unwrap(), 1.0);
        assert!((smape(&p, &t).unwrap() - 100.0 * (1.0 + 1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_pairs_and_undefined_mase() {
        assert_eq!(smape(&[0.0, 1.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(mase(&[1.0], &[2.0], &[5.0, 5.0, 5.0], 1), Err(Error::UndefinedMetric(_))));
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn owa_of_baseline_is_one() {
        let insample = [1.0, 3.0, 2.0, 4.0, 3.0, 5.0];
        let truth = [4.0, 6.0];
        let base = naive2_forecast(&insample, 1, 2).unwrap();
        let m = compute_metrics(&base, &truth, &insample, 1, Some(&base)).unwrap();
        assert!((m.owa.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn naive2_reproduces_pure_seasonal_pattern() {
        let pattern = [1.0, 2.0, 4.0, 2.0];
        let insample: Vec<f64> = (0..16).map(|t| pattern[t % 4]).collect();
        let f = naive2_forecast(&insample, 4, 4).unwrap();
        for (h, v) in f.iter().enumerate() {
            assert!((v - pattern[(16 + h) % 4]).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn smape_is_symmetric(p in prop::collection::vec(-10.0f64..10.0, 1..20), seed in any::<u64>()) {
            let t: Vec<f64> = p.iter().enumerate().map(|(i, v)| v * 0.5 + (seed.wrapping_add(i as u64) % 7) as f64).collect();
            prop_assert!((smape(&p, &t).unwrap() - smape(&t, &p).unwrap()).abs() < 1e-12);
        }
    }
}
