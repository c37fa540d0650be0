//! Run configuration for the command-line tool, read from JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::BenchConfig;
use crate::error::{Error, Result};
use crate::model::ModelConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { steps: 100, lr: 0.05, seed: 0 }
    }
}

/// Synthetic series: a SAR process plus a linear trend, one independent
/// draw per variate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub variates: usize,
    pub steps: usize,
    pub phi: Vec<f64>,
    pub eta: Vec<f64>,
    /// Added as `trend * t`.
    pub trend: f64,
    pub noise_std: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig { variates: 3, steps: 128, phi: vec![0.5], eta: vec![0.3], trend: 0.01, noise_std: 0.05 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Series CSV read by `fit`, `forecast` and `eval`.
    pub input: Option<PathBuf>,
    /// Checkpoint read by `forecast` and `eval`.
    pub checkpoint: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    #[serde(deserialize_with = "model_over_defaults")]
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub synthetic: SyntheticConfig,
    /// Seasonal period: drives the generator, MASE and the Naive2 baseline.
    pub season: usize,
    pub horizon: usize,
    pub bench: BenchConfig,
}

/// Series CSVs hold one value per cell.
fn default_model() -> ModelConfig {
    ModelConfig { channels: 1, gate_dim: 4, ..ModelConfig::default() }
}

/// Keys given in the file override [`default_model`] one by one.
fn model_over_defaults<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<ModelConfig, D::Error> {
    use serde::de::Error as _;
    let given = serde_json::Value::deserialize(d)?;
    let serde_json::Value::Object(given) = given else {
        return Err(D::Error::custom("model must be an object"));
    };
    let mut merged = serde_json::to_value(default_model()).map_err(D::Error::custom)?;
    let fields = merged.as_object_mut().expect("struct serializes to an object");
    for (k, v) in given {
        fields.insert(k, v);
    }
    ModelConfig::deserialize(merged).map_err(D::Error::custom)
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: default_model(),
            train: TrainConfig::default(),
            data: DataConfig::default(),
            synthetic: SyntheticConfig::default(),
            season: 4,
            horizon: 8,
            bench: BenchConfig::default(),
        }
    }
}

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::InvalidParameter(format!("{name} must be positive")));
    }
    Ok(())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::InvalidParameter(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidParameter(format!("config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.model.channels != 1 {
            return Err(Error::InvalidParameter("model.channels must be 1 for CSV series".into()));
        }
        positive("train.steps", self.train.steps)?;
        if !(self.train.lr > 0.0 && self.train.lr.is_finite()) {
            return Err(Error::InvalidParameter(format!("train.lr must be positive, got {}", self.train.lr)));
        }
        positive("synthetic.variates", self.synthetic.variates)?;
        positive("synthetic.steps", self.synthetic.steps)?;
        if !(self.synthetic.noise_std >= 0.0 && self.synthetic.noise_std.is_finite()) {
            return Err(Error::InvalidParameter("synthetic.noise_std must be >= 0".into()));
        }
        if self.synthetic.phi.iter().chain(&self.synthetic.eta).chain([&self.synthetic.trend]).any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("synthetic coefficients must be finite".into()));
        }
        positive("season", self.season)?;
        positive("horizon", self.horizon)?;
        self.bench.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::default();
        cfg.train.lr = 0.1 + 0.2;
        cfg.synthetic.phi = vec![0.3, -1.0 / 3.0];
        cfg.data.input = Some("series.csv".into());
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_json(), cfg.to_json());
    }

    #[test]
    fn partial_configs_take_defaults() {
        let cfg = RunConfig::from_json(r#"{"horizon": 3, "model": {"layers": 1}}"#).unwrap();
        assert_eq!(cfg.horizon, 3);
        assert_eq!(cfg.model.layers, 1);
        assert_eq!(cfg.model.channels, RunConfig::default().model.channels);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::from_json(r#"{"horizn": 3}"#).is_err());
        assert!(RunConfig::from_json(r#"{"model": {"depth": 3}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"horizon": 0}"#).is_err());
        assert!(RunConfig::from_json(r#"{"train": {"lr": -1.0}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"model": {"channels": 2}}"#).is_err());
        assert!(RunConfig::from_json("not json").is_err());
    }
}
