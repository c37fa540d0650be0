//! Flat parameter access and JSON checkpoints.
//!
//! Every trainable array is visited under a stable dotted key such as
//! `layer0.trend0.fwd.a1` or `gate.w_in`. The flat parameter vector is the
//! concatenation in visiting order.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ChimeraModel, Direction, ModelConfig, SsmUnit};
use crate::error::{shape_err, Error, Result};
use crate::selective::{Affine, SelectiveProjections};

type Visit<'a> = dyn FnMut(&str, &mut [f64]) + 'a;

fn visit_affine(prefix: &str, a: &mut Affine, f: &mut Visit) {
    f(&format!("{prefix}.weight"), a.weight.as_mut_slice());
    f(&format!("{prefix}.bias"), &mut a.bias);
}

fn visit_projections(prefix: &str, p: &mut SelectiveProjections, f: &mut Visit) {
    visit_affine(&format!("{prefix}.b1"), &mut p.b1, f);
    visit_affine(&format!("{prefix}.b2"), &mut p.b2, f);
    visit_affine(&format!("{prefix}.c1"), &mut p.c1, f);
    visit_affine(&format!("{prefix}.c2"), &mut p.c2, f);
    visit_affine(&format!("{prefix}.delta1"), &mut p.delta1, f);
    visit_affine(&format!("{prefix}.delta2"), &mut p.delta2, f);
}

/// `own_time_step` is false for seasonal directions, whose time step is
/// the block's shared one.
fn visit_direction(prefix: &str, d: &mut Direction, own_time_step: bool, f: &mut Visit) {
    let s = &mut d.ssm;
    f(&format!("{prefix}.a1"), &mut s.a1);
    f(&format!("{prefix}.a2"), &mut s.a2);
    f(&format!("{prefix}.a3"), &mut s.a3);
    f(&format!("{prefix}.a4"), &mut s.a4);
    match d.projections.as_mut() {
        Some(p) => visit_projections(&format!("{prefix}.proj"), p, f),
        None => {
            f(&format!("{prefix}.b1"), &mut s.b1);
            f(&format!("{prefix}.b2"), &mut s.b2);
            f(&format!("{prefix}.c1"), &mut s.c1);
            f(&format!("{prefix}.c2"), &mut s.c2);
            if own_time_step {
                f(&format!("{prefix}.raw_delta1"), std::slice::from_mut(&mut s.raw_delta1));
            }
            f(&format!("{prefix}.raw_delta2"), std::slice::from_mut(&mut s.raw_delta2));
        }
    }
}

fn visit_unit(prefix: &str, u: &mut SsmUnit, own_time_step: bool, f: &mut Visit) {
    visit_direction(&format!("{prefix}.fwd"), &mut u.forward, own_time_step, f);
    if let Some(b) = u.backward.as_mut() {
        visit_direction(&format!("{prefix}.bwd"), b, own_time_step, f);
    }
}

/// Serialized model: architecture plus every parameter array by key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: BTreeMap<String, Vec<f64>>,
}

impl ChimeraModel {
    /// Visits every trainable array in a fixed order.
    pub fn visit_params_mut(&mut self, f: &mut Visit) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (u, unit) in layer.trend.units.iter_mut().enumerate() {
                visit_unit(&format!("layer{l}.trend{u}"), unit, true, f);
            }
            let s = &mut layer.seasonal;
            visit_unit(&format!("layer{l}.seasonal"), &mut s.unit, false, f);
            f(&format!("layer{l}.seasonal.raw_delta_s"), std::slice::from_mut(&mut s.raw_delta_s));
            visit_affine(&format!("layer{l}.seasonal.redisc"), &mut s.redisc, f);
        }
        f("gate.w_in", self.gate.w_in.as_mut_slice());
        f("gate.w_val", self.gate.w_val.as_mut_slice());
        f("gate.w_out", self.gate.w_out.as_mut_slice());
        visit_affine("readout", &mut self.readout, f);
    }

    /// `(key, length)` of every parameter array.
    pub fn param_layout(&self) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        self.clone().visit_params_mut(&mut |k, v| out.push((k.to_string(), v.len())));
        out
    }

    pub fn num_params(&self) -> usize {
        self.param_layout().iter().map(|(_, n)| n).sum()
    }

    pub fn param_vector(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.clone().visit_params_mut(&mut |_, v| out.extend_from_slice(v));
        out
    }

    pub fn set_param_vector(&mut self, theta: &[f64]) -> Result<()> {
        let expected = self.num_params();
        if theta.len() != expected {
            return Err(shape_err(format!("{} parameters for a model with {expected}", theta.len())));
        }
        let mut offset = 0;
        self.visit_params_mut(&mut |_, v| {
            v.copy_from_slice(&theta[offset..offset + v.len()]);
            offset += v.len();
        });
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut params = BTreeMap::new();
        self.clone().visit_params_mut(&mut |k, v| {
            params.insert(k.to_string(), v.to_vec());
        });
        Checkpoint { config: self.config.clone(), params }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let mut model = ChimeraModel::init(&ck.config, &mut ChaCha8Rng::seed_from_u64(0))?;
        let mut problem: Option<String> = None;
        let mut seen = 0;
        model.visit_params_mut(&mut |k, v| match ck.params.get(k) {
            Some(src) if src.len() == v.len() => {
                v.copy_from_slice(src);
                seen += 1;
            }
            Some(src) => {
                problem.get_or_insert(format!("{k} has {} values, expected {}", src.len(), v.len()));
            }
            None => {
                problem.get_or_insert(format!("missing parameter {k}"));
            }
        });
        if let Some(msg) = problem {
            return Err(Error::InvalidParameter(msg));
        }
        if seen != ck.params.len() {
            return Err(Error::InvalidParameter("checkpoint has parameters the model does not".into()));
        }
        if !model.param_vector().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("checkpoint parameters"));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(selective: bool) -> ChimeraModel {
        let cfg = ModelConfig { layers: 2, state_dim: 2, channels: 2, gate_dim: 2, selective, ..Default::default() };
        ChimeraModel::init(&cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap()
    }

    #[test]
    fn vector_round_trip() {
        let mut m = model(true);
        let theta: Vec<f64> = (0..m.num_params()).map(|i| i as f64 * 1e-3).collect();
        m.set_param_vector(&theta).unwrap();
        assert_eq!(m.param_vector(), theta);
        assert!(m.set_param_vector(&theta[1..]).is_err());
    }

    #[test]
    fn keys_are_unique() {
        let layout = model(false).param_layout();
        let keys: std::collections::BTreeSet<_> = layout.iter().map(|(k, _)| k).collect();
        assert_eq!(keys.len(), layout.len());
        assert!(keys.contains(&"layer1.seasonal.raw_delta_s".to_string()));
    }

    #[test]
    fn checkpoint_round_trip() {
        for selective in [false, true] {
            let m = model(selective);
            let json = serde_json::to_string(&m.to_checkpoint()).unwrap();
            let back = ChimeraModel::from_checkpoint(&serde_json::from_str(&json).unwrap()).unwrap();
            assert_eq!(back.param_vector(), m.param_vector());
        }
    }

    #[test]
    fn checkpoint_rejects_missing_and_extra_keys() {
        let mut ck = model(false).to_checkpoint();
        ck.params.insert("bogus".into(), vec![1.0]);
        assert!(ChimeraModel::from_checkpoint(&ck).is_err());
        let mut ck = model(false).to_checkpoint();
        ck.params.remove("gate.w_in");
        assert!(ChimeraModel::from_checkpoint(&ck).is_err());
    }
}
