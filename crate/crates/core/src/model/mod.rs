//! Layered trend/seasonal architecture.
//!
//! Each layer splits its input into a trend estimate and a seasonal
//! residual:
//!
//! ```text
//! Xhat_{l+1}   = trend(Xtilde_l)
//! Xtilde_{l+1} = seasonal(Xtilde_l - Xhat_{l+1})
//! ```
//!
//! The model output is `readout(sum_l Xhat_l + Xtilde_L + gate(X))`, with a
//! SwiGLU gate as a parallel branch. With no layers the SSM path is empty
//! and the output is `readout(gate(X))`.

mod params;
mod train;

pub use params::Checkpoint;
pub use train::{fd_gradient, fd_gradient_fn, fit, forecast, mse_loss, richardson_check, Fit, RichardsonReport};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::discretize::{discretize_all, ContinuousSSM2D, DiscreteSSM2D};
use crate::draws::stable_companion_coeffs;
use crate::error::{shape_err, Error, Result};
use crate::linalg::{companion_from_coeffs, Mat, StructuredMatrix};
use crate::recurrence::{bidirectional_forward_with, forward_recurrence, CellGrid, ParamSource};
use crate::selective::{inverse_softplus, selective_grid, softplus, Affine, SelectiveProjections, Transitions};
use crate::series::SeriesTensor;

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub layers: usize,
    pub state_dim: usize,
    pub channels: usize,
    pub gate_dim: usize,
    /// SSMs chained in each trend block.
    pub trend_depth: usize,
    /// Initial seasonal step.
    pub season_hint: f64,
    pub selective: bool,
    pub bidirectional: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 2,
            state_dim: 4,
            channels: 8,
            gate_dim: 8,
            trend_depth: 1,
            season_hint: 1.0,
            selective: false,
            bidirectional: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("state_dim", self.state_dim),
            ("channels", self.channels),
            ("gate_dim", self.gate_dim),
            ("trend_depth", self.trend_depth),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidParameter(format!("{name} must be positive")));
            }
        }
        if !(self.season_hint > 0.0 && self.season_hint.is_finite()) {
            return Err(Error::InvalidParameter(format!("season_hint must be positive, got {}", self.season_hint)));
        }
        Ok(())
    }
}

/// Trainable coordinates of one 2D SSM: companion `A1`, `A2`, diagonal
/// `A3`, `A4`, and steps stored before softplus.
#[derive(Clone, Debug, PartialEq)]
pub struct Ssm2d {
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    pub a3: Vec<f64>,
    pub a4: Vec<f64>,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    pub raw_delta1: f64,
    pub raw_delta2: f64,
}

impl Ssm2d {
    pub fn zeros(n: usize) -> Self {
        Ssm2d {
            a1: vec![0.0; n],
            a2: vec![0.0; n],
            a3: vec![0.0; n],
            a4: vec![0.0; n],
            b1: vec![0.0; n],
            b2: vec![0.0; n],
            c1: vec![0.0; n],
            c2: vec![0.0; n],
            raw_delta1: inverse_softplus(0.1),
            raw_delta2: inverse_softplus(0.1),
        }
    }

    pub fn init(rng: &mut impl Rng, n: usize) -> Self {
        let mut u = |scale: f64| (0..n).map(|_| rng.gen_range(-scale..scale)).collect::<Vec<_>>();
        let (b1, b2, c1, c2) = (u(0.5), u(0.5), u(0.5), u(0.5));
        Ssm2d {
            a1: stable_companion_coeffs(rng, n, 0.5..1.5),
            a2: stable_companion_coeffs(rng, n, 1.0..3.0),
            a3: (0..n).map(|_| -rng.gen_range(1.0..3.0)).collect(),
            a4: (0..n).map(|_| -rng.gen_range(0.5..1.5)).collect(),
            b1,
            b2,
            c1,
            c2,
            raw_delta1: inverse_softplus(0.1),
            raw_delta2: inverse_softplus(0.1),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.a1.len()
    }

    pub fn transitions(&self) -> Result<Transitions> {
        Ok(Transitions {
            a1: companion_from_coeffs(&self.a1)?,
            a2: companion_from_coeffs(&self.a2)?,
            a3: StructuredMatrix::diagonal(&self.a3)?,
            a4: StructuredMatrix::diagonal(&self.a4)?,
        })
    }

    /// Continuous parameters; `delta1` replaces the stored time step.
    pub fn continuous(&self, delta1: Option<f64>) -> Result<ContinuousSSM2D> {
        let t = self.transitions()?;
        ContinuousSSM2D::new(
            t.a1,
            t.a2,
            t.a3,
            t.a4,
            self.b1.clone(),
            self.b2.clone(),
            self.c1.clone(),
            self.c2.clone(),
            delta1.unwrap_or_else(|| softplus(self.raw_delta1)),
            softplus(self.raw_delta2),
        )
    }
}

/// One scan direction: an SSM and, when selective, the projections that
/// replace its B, C and steps.
#[derive(Clone, Debug, PartialEq)]
pub struct Direction {
    pub ssm: Ssm2d,
    pub projections: Option<SelectiveProjections>,
}

enum Cells {
    Shared(DiscreteSSM2D),
    Grid(CellGrid),
}

impl ParamSource for Cells {
    fn at(&self, v: usize, t: usize) -> &DiscreteSSM2D {
        match self {
            Cells::Shared(dp) => dp,
            Cells::Grid(g) => g.at(v, t),
        }
    }

    fn state_dim(&self) -> usize {
        match self {
            Cells::Shared(dp) => dp.state_dim(),
            Cells::Grid(g) => g.state_dim(),
        }
    }

    fn check_extent(&self, variates: usize, steps: usize) -> Result<()> {
        match self {
            Cells::Shared(_) => Ok(()),
            Cells::Grid(g) => g.check_extent(variates, steps),
        }
    }

    fn is_shared(&self) -> bool {
        matches!(self, Cells::Shared(_))
    }
}

impl Direction {
    fn cells(&self, x: &SeriesTensor, delta1: Option<f64>) -> Result<Cells> {
        match &self.projections {
            None => Ok(Cells::Shared(discretize_all(&self.ssm.continuous(delta1)?)?)),
            Some(proj) => Ok(Cells::Grid(selective_grid(proj, x, &self.ssm.transitions()?)?)),
        }
    }
}

/// A 2D SSM, optionally paired with a second module run over the
/// variate-reversed grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SsmUnit {
    pub forward: Direction,
    pub backward: Option<Direction>,
}

impl SsmUnit {
    fn init(rng: &mut impl Rng, cfg: &ModelConfig, selective: bool) -> Self {
        let direction = |rng: &mut _| {
            let mut ssm = Ssm2d::init(rng, cfg.state_dim);
            if selective {
                // Projections supply B, C and the steps; keep the unused
                // fields at a fixed value so checkpoints determine the model.
                let zeros = Ssm2d::zeros(cfg.state_dim);
                ssm = Ssm2d { a1: ssm.a1, a2: ssm.a2, a3: ssm.a3, a4: ssm.a4, ..zeros };
            }
            Direction {
                ssm,
                projections: selective.then(|| SelectiveProjections::init(rng, cfg.state_dim, cfg.channels)),
            }
        };
        let forward = direction(rng);
        let backward = cfg.bidirectional.then(|| direction(rng));
        SsmUnit { forward, backward }
    }

    /// `delta1` overrides the time step of non-selective directions.
    pub fn apply(&self, x: &SeriesTensor, delta1: Option<f64>) -> Result<SeriesTensor> {
        let fwd = self.forward.cells(x, delta1)?;
        match &self.backward {
            None => Ok(forward_recurrence(&fwd, x)?.0),
            Some(b) => bidirectional_forward_with(&fwd, &b.cells(x, delta1)?, x),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrendBlock {
    pub units: Vec<SsmUnit>,
}

/// Seasonal SSM with its own time step `softplus(raw_delta_s)` and a
/// per-cell re-discretization map.
#[derive(Clone, Debug, PartialEq)]
pub struct SeasonalBlock {
    pub unit: SsmUnit,
    pub raw_delta_s: f64,
    pub redisc: Affine,
}

impl SeasonalBlock {
    pub fn delta_s(&self) -> f64 {
        softplus(self.raw_delta_s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub trend: TrendBlock,
    pub seasonal: SeasonalBlock,
}

/// `W_out (Swish(W_in x) * W_val x)` per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Gate {
    pub w_in: Mat,
    pub w_val: Mat,
    pub w_out: Mat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChimeraModel {
    pub config: ModelConfig,
    pub layers: Vec<Layer>,
    pub gate: Gate,
    pub readout: Affine,
}

fn uniform_mat(rng: &mut impl Rng, rows: usize, cols: usize) -> Mat {
    let bound = 1.0 / (cols as f64).sqrt();
    Mat::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect()).expect("sized")
}

fn identity_affine(d: usize) -> Affine {
    Affine { weight: Mat::identity(d), bias: vec![0.0; d] }
}

pub fn swish(z: f64) -> f64 {
    z / (1.0 + (-z).exp())
}

impl ChimeraModel {
    pub fn init(config: &ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let d = config.channels;
        let layers = (0..config.layers)
            .map(|_| Layer {
                trend: TrendBlock {
                    units: (0..config.trend_depth).map(|_| SsmUnit::init(rng, config, config.selective)).collect(),
                },
                seasonal: SeasonalBlock {
                    unit: SsmUnit::init(rng, config, false),
                    raw_delta_s: inverse_softplus(config.season_hint),
                    redisc: identity_affine(d),
                },
            })
            .collect();
        let gate = Gate {
            w_in: uniform_mat(rng, config.gate_dim, d),
            w_val: uniform_mat(rng, config.gate_dim, d),
            w_out: uniform_mat(rng, d, config.gate_dim),
        };
        Ok(ChimeraModel { config: config.clone(), layers, gate, readout: identity_affine(d) })
    }

    pub fn channels(&self) -> usize {
        self.config.channels
    }

    fn check(&self, x: &SeriesTensor) -> Result<()> {
        if x.channels() != self.channels() {
            return Err(shape_err(format!("model has {} channels, input {}", self.channels(), x.channels())));
        }
        x.ensure_finite()
    }

    pub fn forward(&self, x: &SeriesTensor) -> Result<SeriesTensor> {
        model_forward(self, x)
    }
}

/// Sequential composition of the block's SSMs.
pub fn trend_forward(block: &TrendBlock, x: &SeriesTensor) -> Result<SeriesTensor> {
    let mut out = x.clone();
    for unit in &block.units {
        out = unit.apply(&out, None)?;
    }
    Ok(out)
}

pub fn seasonal_forward(block: &SeasonalBlock, r: &SeriesTensor) -> Result<SeriesTensor> {
    let delta_s = block.delta_s();
    if !(delta_s > 0.0) {
        return Err(Error::InvalidParameter(format!("seasonal step must be positive, got {delta_s}")));
    }
    let y = block.unit.apply(r, Some(delta_s))?;
    if block.redisc.weight.shape() != (r.channels(), r.channels()) {
        return Err(shape_err("re-discretization map must be d x d"));
    }
    Ok(y.map_cells(r.channels(), |cell, out| out.copy_from_slice(&block.redisc.apply(cell))))
}

/// `(Xhat_{l+1}, Xtilde_{l+1})`.
pub fn layer_forward(layer: &Layer, x: &SeriesTensor) -> Result<(SeriesTensor, SeriesTensor)> {
    let hat = trend_forward(&layer.trend, x)?;
    let tilde = seasonal_forward(&layer.seasonal, &x.sub(&hat)?)?;
    Ok((hat, tilde))
}

pub fn gate(g: &Gate, x: &SeriesTensor) -> Result<SeriesTensor> {
    let d = x.channels();
    let dg = g.w_in.rows();
    if g.w_in.shape() != (dg, d) || g.w_val.shape() != (dg, d) || g.w_out.shape() != (d, dg) {
        return Err(shape_err("gate weights do not match the channel count"));
    }
    let mut hidden = vec![0.0; dg];
    Ok(x.map_cells(d, |cell, out| {
        for (k, h) in hidden.iter_mut().enumerate() {
            let dot = |w: &Mat| w.row(k).iter().zip(cell).map(|(a, b)| a * b).sum::<f64>();
            *h = swish(dot(&g.w_in)) * dot(&g.w_val);
        }
        for (r, o) in out.iter_mut().enumerate() {
            *o = g.w_out.row(r).iter().zip(&hidden).map(|(a, b)| a * b).sum();
        }
    }))
}

pub fn model_forward(m: &ChimeraModel, x: &SeriesTensor) -> Result<SeriesTensor> {
    m.check(x)?;
    let (nv, nt, d) = x.shape();
    let mut combined = SeriesTensor::zeros(nv, nt, d);
    let mut tilde = x.clone();
    for layer in &m.layers {
        let (hat, next) = layer_forward(layer, &tilde)?;
        combined.add_assign(&hat)?;
        tilde = next;
    }
    if !m.layers.is_empty() {
        combined.add_assign(&tilde)?;
    }
    combined.add_assign(&gate(&m.gate, x)?)?;
    let out = combined.map_cells(m.readout.outputs(), |cell, out| out.copy_from_slice(&m.readout.apply(cell)));
    if !out.is_finite() {
        return Err(Error::NonFinite("model output"));
    }
    Ok(out)
}
