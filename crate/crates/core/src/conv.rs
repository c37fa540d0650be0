//! Convolution form of the data-independent recurrence.
//!
//! With fixed parameters the system is shift invariant on the quadrant, so
//! the state response to a unit impulse at `(0, 0)` is the kernel:
//!
//! ```text
//! y[v,t] = sum_{v' <= v, t' <= t} (C1 K1[v-v', t-t'] + C2 K2[v-v', t-t']) x[v',t']
//! ```
//!
//! `K1`, `K2` are state vectors of length N.

use rayon::prelude::*;

use crate::discretize::DiscreteSSM2D;
use crate::error::{shape_err, Result};
use crate::recurrence::forward_recurrence;
use crate::series::SeriesTensor;

/// Impulse responses of the two hidden states over a `variates x steps` window.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernels {
    variates: usize,
    steps: usize,
    state_dim: usize,
    k1: Vec<f64>,
    k2: Vec<f64>,
}

impl ConvKernels {
    pub fn variates(&self) -> usize {
        self.variates
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// `K1` at offset `(dv, dt)`.
    pub fn k1(&self, dv: usize, dt: usize) -> &[f64] {
        let o = (dv * self.steps + dt) * self.state_dim;
        &self.k1[o..o + self.state_dim]
    }

    pub fn k2(&self, dv: usize, dt: usize) -> &[f64] {
        let o = (dv * self.steps + dt) * self.state_dim;
        &self.k2[o..o + self.state_dim]
    }

    /// Scalar kernel `C1 K1 + C2 K2`, row-major over offsets.
    pub fn combined(&self, c1: &[f64], c2: &[f64]) -> Result<Vec<f64>> {
        if c1.len() != self.state_dim || c2.len() != self.state_dim {
            return Err(shape_err(format!("read-out rows must have length {}", self.state_dim)));
        }
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        Ok((0..self.variates * self.steps)
            .map(|i| {
                let (dv, dt) = (i / self.steps, i % self.steps);
                dot(c1, self.k1(dv, dt)) + dot(c2, self.k2(dv, dt))
            })
            .collect())
    }
}

/// Kernels over a `variates x steps` window by the impulse method.
pub fn impulse_kernels(dp: &DiscreteSSM2D, variates: usize, steps: usize) -> Result<ConvKernels> {
    let mut impulse = SeriesTensor::zeros(variates, steps, 1);
    if variates == 0 || steps == 0 {
        return Err(shape_err("kernel window must be nonempty"));
    }
    impulse.set(0, 0, 0, 1.0);
    let (_, hidden) = forward_recurrence(dp, &impulse)?;
    let n = dp.state_dim();
    let mut k1 = Vec::with_capacity(variates * steps * n);
    let mut k2 = Vec::with_capacity(variates * steps * n);
    for v in 0..variates {
        for t in 0..steps {
            k1.extend_from_slice(hidden.h1(v, t));
            k2.extend_from_slice(hidden.h2(v, t));
        }
    }
    Ok(ConvKernels { variates, steps, state_dim: n, k1, k2 })
}

/// Causal 2D convolution of `x` with the kernels read out through `c1`, `c2`.
pub fn conv_apply(kernels: &ConvKernels, c1: &[f64], c2: &[f64], x: &SeriesTensor) -> Result<SeriesTensor> {
    let (nv, nt, d) = x.shape();
    if nv > kernels.variates || nt > kernels.steps {
        return Err(shape_err(format!(
            "{}x{} kernel for a {nv}x{nt} input",
            kernels.variates, kernels.steps
        )));
    }
    x.ensure_finite()?;
    let g = kernels.combined(c1, c2)?;
    let ks = kernels.steps;
    let mut y = SeriesTensor::zeros(nv, nt, d);
    y.as_mut_slice().par_chunks_mut(d).enumerate().for_each(|(i, out)| {
        let (v, t) = (i / nt, i % nt);
        for vs in 0..=v {
            for ts in 0..=t {
                let w = g[(v - vs) * ks + (t - ts)];
                out.iter_mut().zip(x.cell(vs, ts)).for_each(|(o, xi)| *o += w * xi);
            }
        }
    });
    Ok(y)
}
