//! Sequential reference implementation of the discrete 2D recurrence.
//!
//! For every cell `(v, t)`:
//!
//! ```text
//! h1[v,t] = Abar1 h1[v,t-1] + Abar2 h2[v,t-1] + Bbar1 x[v,t]
//! h2[v,t] = Abar3 h1[v-1,t] + Abar4 h2[v-1,t] + Bbar2 x[v,t]
//! y[v,t]  = C1 h1[v,t] + C2 h2[v,t]
//! ```
//!
//! States outside the grid are zero unless a [`Boundary`] is supplied.
//! Cells are visited row by row, which respects both dependencies.

use crate::discretize::DiscreteSSM2D;
use crate::error::{shape_err, Error, Result};
use crate::series::SeriesTensor;

/// Source of per-cell discrete parameters.
pub trait ParamSource: Sync {
    fn at(&self, v: usize, t: usize) -> &DiscreteSSM2D;
    fn state_dim(&self) -> usize;
    /// Checks that the source covers a `variates x steps` grid.
    fn check_extent(&self, variates: usize, steps: usize) -> Result<()>;
    /// True if every cell uses the same parameters.
    fn is_shared(&self) -> bool {
        false
    }
}

impl ParamSource for DiscreteSSM2D {
    fn at(&self, _v: usize, _t: usize) -> &DiscreteSSM2D {
        self
    }

    fn state_dim(&self) -> usize {
        DiscreteSSM2D::state_dim(self)
    }

    fn check_extent(&self, _variates: usize, _steps: usize) -> Result<()> {
        self.validate()
    }

    fn is_shared(&self) -> bool {
        true
    }
}

/// Per-cell parameters, row-major over `(v, t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CellGrid {
    variates: usize,
    steps: usize,
    cells: Vec<DiscreteSSM2D>,
}

impl CellGrid {
    pub fn new(variates: usize, steps: usize, cells: Vec<DiscreteSSM2D>) -> Result<Self> {
        if cells.len() != variates * steps || cells.is_empty() {
            return Err(shape_err(format!(
                "{} cell parameter sets for a {variates}x{steps} grid",
                cells.len()
            )));
        }
        let n = cells[0].state_dim();
        for c in &cells {
            c.validate()?;
            if c.state_dim() != n {
                return Err(shape_err("cell parameters disagree on the state dimension"));
            }
        }
        Ok(CellGrid { variates, steps, cells })
    }

    /// The same parameters in every cell.
    pub fn constant(variates: usize, steps: usize, dp: &DiscreteSSM2D) -> Result<Self> {
        CellGrid::new(variates, steps, vec![dp.clone(); variates * steps])
    }

    pub fn variates(&self) -> usize {
        self.variates
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn cells(&self) -> &[DiscreteSSM2D] {
        &self.cells
    }
}

impl ParamSource for CellGrid {
    fn at(&self, v: usize, t: usize) -> &DiscreteSSM2D {
        &self.cells[v * self.steps + t]
    }

    fn state_dim(&self) -> usize {
        self.cells[0].state_dim()
    }

    fn check_extent(&self, variates: usize, steps: usize) -> Result<()> {
        if (variates, steps) != (self.variates, self.steps) {
            return Err(shape_err(format!(
                "parameter grid {}x{} does not cover input {variates}x{steps}",
                self.variates, self.steps
            )));
        }
        Ok(())
    }
}

/// View of a parameter source with the variate axis reversed.
pub struct ReversedVariates<'a, P: ParamSource + ?Sized> {
    inner: &'a P,
    variates: usize,
}

impl<'a, P: ParamSource + ?Sized> ReversedVariates<'a, P> {
    pub fn new(inner: &'a P, variates: usize) -> Self {
        ReversedVariates { inner, variates }
    }
}

impl<P: ParamSource + ?Sized> ParamSource for ReversedVariates<'_, P> {
    fn at(&self, v: usize, t: usize) -> &DiscreteSSM2D {
        self.inner.at(self.variates - 1 - v, t)
    }

    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    fn check_extent(&self, variates: usize, steps: usize) -> Result<()> {
        if variates != self.variates {
            return Err(shape_err("reversed view built for a different variate count"));
        }
        self.inner.check_extent(variates, steps)
    }

    fn is_shared(&self) -> bool {
        self.inner.is_shared()
    }
}

/// Hidden state pair for every cell; each block is `N x d`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenGrid {
    variates: usize,
    steps: usize,
    state_dim: usize,
    channels: usize,
    h1: Vec<f64>,
    h2: Vec<f64>,
}

impl HiddenGrid {
    pub fn zeros(variates: usize, steps: usize, state_dim: usize, channels: usize) -> Self {
        let len = variates * steps * state_dim * channels;
        HiddenGrid { variates, steps, state_dim, channels, h1: vec![0.0; len], h2: vec![0.0; len] }
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.variates, self.steps, self.state_dim, self.channels)
    }

    #[inline]
    fn block(&self) -> usize {
        self.state_dim * self.channels
    }

    #[inline]
    fn offset(&self, v: usize, t: usize) -> usize {
        (v * self.steps + t) * self.block()
    }

    pub fn h1(&self, v: usize, t: usize) -> &[f64] {
        let o = self.offset(v, t);
        &self.h1[o..o + self.block()]
    }

    pub fn h2(&self, v: usize, t: usize) -> &[f64] {
        let o = self.offset(v, t);
        &self.h2[o..o + self.block()]
    }

    pub(crate) fn h1_mut(&mut self, v: usize, t: usize) -> &mut [f64] {
        let o = self.offset(v, t);
        let b = self.block();
        &mut self.h1[o..o + b]
    }

    pub(crate) fn h2_mut(&mut self, v: usize, t: usize) -> &mut [f64] {
        let o = self.offset(v, t);
        let b = self.block();
        &mut self.h2[o..o + b]
    }

    /// Raw storage of row `v` (mutable) and of row `v - 1` (empty when
    /// `v == 0`): `(prev_h1, prev_h2, h1, h2)`, each `steps * N * d`.
    #[allow(clippy::type_complexity)]
    pub(crate) fn row_with_prev(&mut self, v: usize) -> (&[f64], &[f64], &mut [f64], &mut [f64]) {
        let len = self.steps * self.block();
        let (before1, rest1) = self.h1.split_at_mut(v * len);
        let (before2, rest2) = self.h2.split_at_mut(v * len);
        let prev1 = &before1[before1.len().saturating_sub(len)..];
        let prev2 = &before2[before2.len().saturating_sub(len)..];
        (prev1, prev2, &mut rest1[..len], &mut rest2[..len])
    }

    pub fn max_abs_diff(&self, other: &HiddenGrid) -> f64 {
        if self.shape() != other.shape() {
            return f64::INFINITY;
        }
        crate::linalg::max_abs_diff(&self.h1, &other.h1).max(crate::linalg::max_abs_diff(&self.h2, &other.h2))
    }

    pub fn is_zero(&self) -> bool {
        self.h1.iter().chain(&self.h2).all(|&v| v == 0.0)
    }
}

/// Optional non-zero states just outside the grid.
///
/// `left_*[v]` plays the role of `h[v, -1]` and `top_*[t]` of `h[-1, t]`.
/// Each entry is an `N x d` block, row-major.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Boundary {
    pub left_h1: Vec<Vec<f64>>,
    pub left_h2: Vec<Vec<f64>>,
    pub top_h1: Vec<Vec<f64>>,
    pub top_h2: Vec<Vec<f64>>,
}

impl Boundary {
    fn check(&self, variates: usize, steps: usize, block: usize) -> Result<()> {
        for (side, len) in [
            (&self.left_h1, variates),
            (&self.left_h2, variates),
            (&self.top_h1, steps),
            (&self.top_h2, steps),
        ] {
            if !side.is_empty() && (side.len() != len || side.iter().any(|b| b.len() != block)) {
                return Err(shape_err("boundary blocks do not match the grid"));
            }
        }
        Ok(())
    }
}

fn pick(side: &[Vec<f64>], i: usize) -> Option<&[f64]> {
    side.get(i).map(Vec::as_slice)
}

/// Writes `Bbar ⊗ x` (outer product, `N x d`) into `out`, adding.
#[inline]
pub(crate) fn inject_acc(bbar: &[f64], x: &[f64], out: &mut [f64]) {
    let d = x.len();
    for (i, &b) in bbar.iter().enumerate() {
        if b == 0.0 {
            continue;
        }
        for (o, xv) in out[i * d..(i + 1) * d].iter_mut().zip(x) {
            *o += b * xv;
        }
    }
}

/// `out = c h` for a row vector `c` (length N) and an `N x d` block.
#[inline]
pub(crate) fn readout_acc(c: &[f64], h: &[f64], out: &mut [f64]) {
    let d = out.len();
    for (i, &ci) in c.iter().enumerate() {
        if ci == 0.0 {
            continue;
        }
        for (o, hv) in out.iter_mut().zip(&h[i * d..(i + 1) * d]) {
            *o += ci * hv;
        }
    }
}

pub(crate) fn check_input<P: ParamSource + ?Sized>(params: &P, x: &SeriesTensor) -> Result<()> {
    if x.variates() == 0 || x.steps() == 0 || x.channels() == 0 {
        return Err(shape_err("input series has an empty axis"));
    }
    x.ensure_finite()?;
    params.check_extent(x.variates(), x.steps())
}

/// Runs the recurrence over the whole grid with zero boundary states.
pub fn forward_recurrence<P: ParamSource + ?Sized>(params: &P, x: &SeriesTensor) -> Result<(SeriesTensor, HiddenGrid)> {
    forward_recurrence_with_boundary(params, x, &Boundary::default())
}

pub fn forward_recurrence_with_boundary<P: ParamSource + ?Sized>(
    params: &P,
    x: &SeriesTensor,
    boundary: &Boundary,
) -> Result<(SeriesTensor, HiddenGrid)> {
    check_input(params, x)?;
    let (nv, nt, d) = x.shape();
    let n = params.state_dim();
    let block = n * d;
    boundary.check(nv, nt, block)?;

    let mut hidden = HiddenGrid::zeros(nv, nt, n, d);
    let mut y = SeriesTensor::zeros(nv, nt, d);
    let zero = vec![0.0; block];
    let mut h1 = vec![0.0; block];
    let mut h2 = vec![0.0; block];
    for v in 0..nv {
        for t in 0..nt {
            let p = params.at(v, t);
            h1.fill(0.0);
            h2.fill(0.0);
            let (left1, left2) = if t == 0 {
                (pick(&boundary.left_h1, v).unwrap_or(&zero), pick(&boundary.left_h2, v).unwrap_or(&zero))
            } else {
                (hidden.h1(v, t - 1), hidden.h2(v, t - 1))
            };
            p.abar1.apply_acc(left1, d, &mut h1);
            p.abar2.apply_acc(left2, d, &mut h1);
            let (up1, up2) = if v == 0 {
                (pick(&boundary.top_h1, t).unwrap_or(&zero), pick(&boundary.top_h2, t).unwrap_or(&zero))
            } else {
                (hidden.h1(v - 1, t), hidden.h2(v - 1, t))
            };
            p.abar3.apply_acc(up1, d, &mut h2);
            p.abar4.apply_acc(up2, d, &mut h2);
            let xc = x.cell(v, t);
            inject_acc(&p.bbar1, xc, &mut h1);
            inject_acc(&p.bbar2, xc, &mut h2);
            let out = y.cell_mut(v, t);
            readout_acc(&p.c1, &h1, out);
            readout_acc(&p.c2, &h2, out);
            hidden.h1_mut(v, t).copy_from_slice(&h1);
            hidden.h2_mut(v, t).copy_from_slice(&h2);
        }
    }
    if !y.is_finite() {
        return Err(Error::NonFinite("recurrence output"));
    }
    Ok((y, hidden))
}

/// Sum of a forward pass and a pass over the variate-reversed input.
pub fn bidirectional_forward(
    forward: &DiscreteSSM2D,
    backward: &DiscreteSSM2D,
    x: &SeriesTensor,
) -> Result<SeriesTensor> {
    bidirectional_forward_with(forward, backward, x)
}

/// Bidirectional pass for arbitrary parameter sources. `backward` is
/// indexed in the original (unreversed) cell coordinates.
pub fn bidirectional_forward_with<F, B>(forward: &F, backward: &B, x: &SeriesTensor) -> Result<SeriesTensor>
where
    F: ParamSource + ?Sized,
    B: ParamSource + ?Sized,
{
    if forward.state_dim() != backward.state_dim() {
        return Err(shape_err("forward and backward modules disagree on N"));
    }
    let (yf, _) = forward_recurrence(forward, x)?;
    let reversed = ReversedVariates::new(backward, x.variates());
    let (yb, _) = forward_recurrence(&reversed, &x.reverse_variates())?;
    yf.add(&yb.reverse_variates())
}

/// Closed-loop rollout: after the context, each new time column is fed the
/// input `u[v] = D1 h1[v,t] + D2 h2[v,t]` predicted from the previous column.
///
/// Returns the outputs `y` of the `horizon` generated columns and the inputs
/// that produced them.
pub fn closed_loop_rollout(
    dp: &DiscreteSSM2D,
    d1: &[f64],
    d2: &[f64],
    context: &SeriesTensor,
    horizon: usize,
) -> Result<(SeriesTensor, SeriesTensor)> {
    let n = dp.state_dim();
    if d1.len() != n || d2.len() != n {
        return Err(shape_err(format!("decoder rows must have length {n}")));
    }
    let (_, hidden) = forward_recurrence(dp, context)?;
    let (nv, nt, d) = context.shape();
    let block = n * d;
    let mut outputs = SeriesTensor::zeros(nv, horizon, d);
    let mut inputs = SeriesTensor::zeros(nv, horizon, d);
    let mut last_h1: Vec<Vec<f64>> = (0..nv).map(|v| hidden.h1(v, nt - 1).to_vec()).collect();
    let mut last_h2: Vec<Vec<f64>> = (0..nv).map(|v| hidden.h2(v, nt - 1).to_vec()).collect();

    for step in 0..horizon {
        let mut next_h1 = vec![vec![0.0; block]; nv];
        let mut next_h2 = vec![vec![0.0; block]; nv];
        for v in 0..nv {
            let mut u = vec![0.0; d];
            readout_acc(d1, &last_h1[v], &mut u);
            readout_acc(d2, &last_h2[v], &mut u);

            let h1 = &mut next_h1[v];
            dp.abar1.apply_acc(&last_h1[v], d, h1);
            dp.abar2.apply_acc(&last_h2[v], d, h1);
            inject_acc(&dp.bbar1, &u, h1);
            let mut h2 = vec![0.0; block];
            if v > 0 {
                dp.abar3.apply_acc(&next_h1[v - 1], d, &mut h2);
                dp.abar4.apply_acc(&next_h2[v - 1], d, &mut h2);
            }
            inject_acc(&dp.bbar2, &u, &mut h2);

            let out = outputs.cell_mut(v, step);
            readout_acc(&dp.c1, &next_h1[v], out);
            readout_acc(&dp.c2, &h2, out);
            next_h2[v] = h2;
            inputs.cell_mut(v, step).copy_from_slice(&u);
        }
        last_h1 = next_h1;
        last_h2 = next_h2;
    }
    if !outputs.is_finite() {
        return Err(Error::NonFinite("closed-loop rollout"));
    }
    Ok((outputs, inputs))
}

/// Closed-loop forecast of `horizon` output columns (`V x H x d`).
pub fn closed_loop_decode(
    dp: &DiscreteSSM2D,
    d1: &[f64],
    d2: &[f64],
    context: &SeriesTensor,
    horizon: usize,
) -> Result<SeriesTensor> {
    closed_loop_rollout(dp, d1, d2, context, horizon).map(|(y, _)| y)
}
