//! Input-dependent B, C and step sizes.
//!
//! Each cell gets `B_i = W_Bi x + b`, `C_i = W_Ci x + b` and
//! `Delta_i = softplus(w_i . x + b)`, then is discretized with the shared
//! transition matrices. Only the steps make `Abar` input dependent.

use rand::Rng;
use rayon::prelude::*;

use crate::discretize::{discretize_all, ContinuousSSM2D, DiscreteSSM2D};
use crate::error::{shape_err, Error, Result};
use crate::linalg::{Mat, StructuredMatrix};
use crate::recurrence::CellGrid;
use crate::series::SeriesTensor;

pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z + (-z).exp()
    } else {
        z.exp().ln_1p()
    }
}

/// Preactivation whose softplus is `y` (> 0).
pub fn inverse_softplus(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp_m1()).ln()
    } else {
        y.exp_m1().ln()
    }
}

/// `x -> W x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Affine {
    pub weight: Mat,
    pub bias: Vec<f64>,
}

impl Affine {
    pub fn zeros(outputs: usize, inputs: usize) -> Self {
        Affine { weight: Mat::zeros(outputs, inputs), bias: vec![0.0; outputs] }
    }

    /// Weights uniform in `±1/sqrt(inputs)`, zero bias.
    pub fn uniform(rng: &mut impl Rng, outputs: usize, inputs: usize) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let data = (0..outputs * inputs).map(|_| rng.gen_range(-bound..bound)).collect();
        Affine { weight: Mat::from_vec(outputs, inputs, data).expect("sized"), bias: vec![0.0; outputs] }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        self.apply_acc(x, &mut out);
        out
    }

    /// `out += W x` (no bias).
    pub(crate) fn apply_acc(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o += self.weight.row(r).iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
        }
    }

    fn check(&self, inputs: usize, outputs: usize) -> Result<()> {
        if self.weight.shape() != (outputs, inputs) || self.bias.len() != outputs {
            return Err(shape_err(format!(
                "affine map is {:?} + {}, expected {outputs}x{inputs}",
                self.weight.shape(),
                self.bias.len()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectiveProjections {
    pub b1: Affine,
    pub b2: Affine,
    pub c1: Affine,
    pub c2: Affine,
    pub delta1: Affine,
    pub delta2: Affine,
}

/// Initial step size after softplus.
pub const INITIAL_STEP: f64 = 0.1;

impl SelectiveProjections {
    /// All weights and biases zero.
    pub fn zeros(state_dim: usize, channels: usize) -> Self {
        SelectiveProjections {
            b1: Affine::zeros(state_dim, channels),
            b2: Affine::zeros(state_dim, channels),
            c1: Affine::zeros(state_dim, channels),
            c2: Affine::zeros(state_dim, channels),
            delta1: Affine::zeros(1, channels),
            delta2: Affine::zeros(1, channels),
        }
    }

    pub fn init(rng: &mut impl Rng, state_dim: usize, channels: usize) -> Self {
        let mut delta1 = Affine::zeros(1, channels);
        let mut delta2 = Affine::zeros(1, channels);
        delta1.bias[0] = inverse_softplus(INITIAL_STEP);
        delta2.bias[0] = inverse_softplus(INITIAL_STEP);
        SelectiveProjections {
            b1: Affine::uniform(rng, state_dim, channels),
            b2: Affine::uniform(rng, state_dim, channels),
            c1: Affine::uniform(rng, state_dim, channels),
            c2: Affine::uniform(rng, state_dim, channels),
            delta1,
            delta2,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.b1.outputs()
    }

    pub fn channels(&self) -> usize {
        self.b1.inputs()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, d) = (self.state_dim(), self.channels());
        for map in [&self.b1, &self.b2, &self.c1, &self.c2] {
            map.check(d, n)?;
        }
        self.delta1.check(d, 1)?;
        self.delta2.check(d, 1)
    }

    /// Step sizes `(Delta1, Delta2)` for one cell input.
    pub fn steps(&self, x: &[f64]) -> (f64, f64) {
        (softplus(self.delta1.apply(x)[0]), softplus(self.delta2.apply(x)[0]))
    }
}

/// The input-independent transitions shared by every cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Transitions {
    pub a1: StructuredMatrix,
    pub a2: StructuredMatrix,
    pub a3: StructuredMatrix,
    pub a4: StructuredMatrix,
}

impl Transitions {
    pub fn of(p: &ContinuousSSM2D) -> Self {
        Transitions { a1: p.a1.clone(), a2: p.a2.clone(), a3: p.a3.clone(), a4: p.a4.clone() }
    }

    pub fn state_dim(&self) -> usize {
        self.a1.dim()
    }
}

/// Discretized parameters of one cell.
pub fn project_cell_params(proj: &SelectiveProjections, x: &[f64], a: &Transitions) -> Result<DiscreteSSM2D> {
    if x.len() != proj.channels() || a.state_dim() != proj.state_dim() {
        return Err(shape_err(format!(
            "cell of {} channels, N = {} for projections {}x{}",
            x.len(),
            a.state_dim(),
            proj.state_dim(),
            proj.channels()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("selective input"));
    }
    let (delta1, delta2) = proj.steps(x);
    let continuous = ContinuousSSM2D {
        a1: a.a1.clone(),
        a2: a.a2.clone(),
        a3: a.a3.clone(),
        a4: a.a4.clone(),
        b1: proj.b1.apply(x),
        b2: proj.b2.apply(x),
        c1: proj.c1.apply(x),
        c2: proj.c2.apply(x),
        delta1,
        delta2,
    };
    discretize_all(&continuous)
}

/// Per-cell parameters for the whole input grid.
pub fn selective_grid(proj: &SelectiveProjections, x: &SeriesTensor, a: &Transitions) -> Result<CellGrid> {
    proj.validate()?;
    let (nv, nt, _) = x.shape();
    let cells = (0..nv * nt)
        .into_par_iter()
        .map(|i| project_cell_params(proj, x.cell(i / nt, i % nt), a))
        .collect::<Result<Vec<_>>>()?;
    CellGrid::new(nv, nt, cells)
}
