//! The decoupled 2D SSM (`Abar2 = Abar3 = 0`) and its matrix form.
//!
//! With the cross blocks removed, h1 runs along time within each variate and
//! h2 runs along variates within each time step. A bidirectional pass is
//! then a per-variate lower-triangular time matrix plus a per-step variate
//! matrix whose lower triangle comes from the forward module, upper
//! triangle from the backward module, and diagonal from both.

use crate::discretize::DiscreteSSM2D;
use crate::error::{shape_err, Error, Result};
use crate::linalg::{Mat, StructuredMatrix};
use crate::recurrence::{check_input, inject_acc, readout_acc, ParamSource, ReversedVariates};
use crate::series::SeriesTensor;

/// Largest `V * T` accepted by [`materialize_matrices`].
pub const MATERIALIZE_BOUND: usize = 64;

fn check_decoupled<P: ParamSource + ?Sized>(params: &P, variates: usize, steps: usize) -> Result<()> {
    for v in 0..variates {
        for t in 0..steps {
            if !params.at(v, t).is_decoupled() {
                return Err(Error::InvalidParameter(format!("cell ({v},{t}) has nonzero Abar2 or Abar3")));
            }
        }
    }
    Ok(())
}

/// Forward pass of the decoupled model as two independent 1D recurrences.
pub fn mamba2d_forward<P: ParamSource + ?Sized>(params: &P, x: &SeriesTensor) -> Result<SeriesTensor> {
    check_input(params, x)?;
    let (nv, nt, d) = x.shape();
    check_decoupled(params, nv, nt)?;
    let block = params.state_dim() * d;
    let mut y = SeriesTensor::zeros(nv, nt, d);

    // Time pass: h1 per variate.
    for v in 0..nv {
        let mut h = vec![0.0; block];
        for t in 0..nt {
            let p = params.at(v, t);
            h = step(&p.abar1, &h, &p.bbar1, x.cell(v, t), d);
            readout_acc(&p.c1, &h, y.cell_mut(v, t));
        }
    }
    // Variate pass: h2 per time step.
    for t in 0..nt {
        let mut h = vec![0.0; block];
        for v in 0..nv {
            let p = params.at(v, t);
            h = step(&p.abar4, &h, &p.bbar2, x.cell(v, t), d);
            readout_acc(&p.c2, &h, y.cell_mut(v, t));
        }
    }
    y.ensure_finite()?;
    Ok(y)
}

fn step(a: &StructuredMatrix, h: &[f64], b: &[f64], x: &[f64], d: usize) -> Vec<f64> {
    let mut next = vec![0.0; h.len()];
    a.apply_acc(h, d, &mut next);
    inject_acc(b, x, &mut next);
    next
}

/// Forward pass plus the backward module over the variate-reversed grid.
/// `backward` is indexed in the original cell coordinates.
pub fn mamba2d_bidirectional<F, B>(forward: &F, backward: &B, x: &SeriesTensor) -> Result<SeriesTensor>
where
    F: ParamSource + ?Sized,
    B: ParamSource + ?Sized,
{
    let yf = mamba2d_forward(forward, x)?;
    let reversed = ReversedVariates::new(backward, x.variates());
    let yb = mamba2d_forward(&reversed, &x.reverse_variates())?;
    yf.add(&yb.reverse_variates())
}

/// Matrix form over a `V x T` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Materialized {
    /// `T x T` per variate, lower triangular.
    pub time: Vec<Mat>,
    /// `V x V` per time step.
    pub variate: Vec<Mat>,
}

impl Materialized {
    /// `y[v,t] = sum_t' time[v][t,t'] x[v,t'] + sum_v' variate[t][v,v'] x[v',t]`.
    pub fn apply(&self, x: &SeriesTensor) -> Result<SeriesTensor> {
        let (nv, nt, d) = x.shape();
        if self.time.len() != nv || self.variate.len() != nt {
            return Err(shape_err(format!(
                "matrices for {}x{}, input {nv}x{nt}",
                self.time.len(),
                self.variate.len()
            )));
        }
        let mut y = SeriesTensor::zeros(nv, nt, d);
        for v in 0..nv {
            for t in 0..nt {
                let out = y.cell_mut(v, t);
                for ts in 0..nt {
                    let w = self.time[v][(t, ts)];
                    out.iter_mut().zip(x.cell(v, ts)).for_each(|(o, xi)| *o += w * xi);
                }
                for vs in 0..nv {
                    let w = self.variate[t][(v, vs)];
                    out.iter_mut().zip(x.cell(vs, t)).for_each(|(o, xi)| *o += w * xi);
                }
            }
        }
        Ok(y)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `c . (a_k ... a_1) b` for transitions listed in application order.
fn chain<'a>(c: &[f64], transitions: impl Iterator<Item = &'a StructuredMatrix>, b: &[f64]) -> f64 {
    let mut state = b.to_vec();
    for a in transitions {
        state = a.apply_vec(&state);
    }
    dot(c, &state)
}

/// Builds the matrix form of the decoupled model, with an optional backward
/// module (original cell coordinates).
pub fn materialize_matrices(
    forward: &dyn ParamSource,
    backward: Option<&dyn ParamSource>,
    variates: usize,
    steps: usize,
) -> Result<Materialized> {
    if variates == 0 || steps == 0 {
        return Err(shape_err("grid extents must be positive"));
    }
    let size = variates * steps;
    if size > MATERIALIZE_BOUND {
        return Err(Error::TooLarge { size, bound: MATERIALIZE_BOUND });
    }
    forward.check_extent(variates, steps)?;
    check_decoupled(forward, variates, steps)?;
    if let Some(b) = backward {
        b.check_extent(variates, steps)?;
        check_decoupled(b, variates, steps)?;
        if b.state_dim() != forward.state_dim() {
            return Err(shape_err("forward and backward modules disagree on N"));
        }
    }
    let modules: Vec<&dyn ParamSource> = std::iter::once(forward).chain(backward).collect();

    // Time matrices: every module runs forward in time.
    let time = (0..variates)
        .map(|v| {
            let mut m = Mat::zeros(steps, steps);
            for t in 0..steps {
                for ts in 0..=t {
                    m[(t, ts)] = modules
                        .iter()
                        .map(|p| {
                            let cell: &DiscreteSSM2D = p.at(v, t);
                            chain(&cell.c1, (ts + 1..=t).map(|k| &p.at(v, k).abar1), &p.at(v, ts).bbar1)
                        })
                        .sum();
                }
            }
            m
        })
        .collect();

    // Variate matrices: forward below the diagonal, backward above.
    let variate = (0..steps)
        .map(|t| {
            let mut m = Mat::zeros(variates, variates);
            for v in 0..variates {
                for vs in 0..variates {
                    let fwd = (vs <= v).then(|| {
                        chain(&forward.at(v, t).c2, (vs + 1..=v).map(|k| &forward.at(k, t).abar4), &forward.at(vs, t).bbar2)
                    });
                    let bwd = backward.filter(|_| vs >= v).map(|b| {
                        chain(&b.at(v, t).c2, (v..vs).rev().map(|k| &b.at(k, t).abar4), &b.at(vs, t).bbar2)
                    });
                    m[(v, vs)] = fwd.unwrap_or(0.0) + bwd.unwrap_or(0.0);
                }
            }
            m
        })
        .collect();
    Ok(Materialized { time, variate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::draws::{random_continuous, random_discrete, random_series};
    use crate::linalg::matrix_power;
    use crate::recurrence::{bidirectional_forward_with, forward_recurrence, CellGrid};
    use crate::selective::{selective_grid, SelectiveProjections, Transitions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn decoupled(rng: &mut impl Rng, n: usize) -> DiscreteSSM2D {
        let mut dp = random_discrete(rng, n);
        dp.abar2 = StructuredMatrix::zeros(n);
        dp.abar3 = StructuredMatrix::zeros(n);
        dp
    }

    fn decoupled_grid(rng: &mut ChaCha8Rng, v: usize, t: usize, x: &SeriesTensor) -> CellGrid {
        let mut base = random_continuous(rng, 2);
        base.a2 = StructuredMatrix::Companion(vec![0.0; 2]);
        base.a3 = StructuredMatrix::zeros(2);
        let proj = SelectiveProjections::init(rng, 2, x.channels());
        let grid = selective_grid(&proj, x, &Transitions::of(&base)).unwrap();
        // expm of the zero blocks is the identity; zero them after discretizing.
        let cells = grid
            .cells()
            .iter()
            .map(|c| DiscreteSSM2D { abar2: StructuredMatrix::zeros(2), abar3: StructuredMatrix::zeros(2), ..c.clone() })
            .collect();
        CellGrid::new(v, t, cells).unwrap()
    }

    #[test]
    fn equals_recurrence_and_rejects_coupling() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dp = decoupled(&mut rng, 3);
        let x = random_series(&mut rng, 5, 6, 2);
        let (oracle, _) = forward_recurrence(&dp, &x).unwrap();
        assert!(mamba2d_forward(&dp, &x).unwrap().max_abs_diff(&oracle) < 1e-12);
        assert!(mamba2d_forward(&random_discrete(&mut rng, 3), &x).is_err());
        assert_eq!(mamba2d_forward(&dp, &SeriesTensor::zeros(5, 6, 2)).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn without_c2_is_time_ssm() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut dp = decoupled(&mut rng, 2);
        dp.c2 = vec![0.0; 2];
        let x = random_series(&mut rng, 3, 5, 1);
        let y = mamba2d_forward(&dp, &x).unwrap();
        for v in 0..3 {
            let mut h = vec![0.0; 2];
            for t in 0..5 {
                h = dp.abar1.apply_vec(&h);
                h.iter_mut().zip(&dp.bbar1).for_each(|(hi, b)| *hi += b * x.get(v, t, 0));
                assert!((y.get(v, t, 0) - dot(&dp.c1, &h)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_step_time_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dp = decoupled(&mut rng, 3);
        let m = materialize_matrices(&dp, None, 4, 1).unwrap();
        for v in 0..4 {
            assert!((m.time[v][(0, 0)] - dot(&dp.c1, &dp.bbar1)).abs() < 1e-14);
        }
    }

    #[test]
    fn time_matrix_is_convolution_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dp = decoupled(&mut rng, 3);
        let m = materialize_matrices(&dp, None, 1, 7).unwrap();
        for t in 0..7 {
            for ts in 0..7 {
                let expect = if ts <= t {
                    dot(&dp.c1, &matrix_power(&dp.abar1, (t - ts) as u32).apply_vec(&dp.bbar1))
                } else {
                    0.0
                };
                assert!((m.time[0][(t, ts)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matrix_form_reproduces_bidirectional_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (v, t) in [(1, 1), (3, 4), (8, 8), (2, 7)] {
            let f = decoupled(&mut rng, 3);
            let b = decoupled(&mut rng, 3);
            let x = random_series(&mut rng, v, t, 2);
            let m = materialize_matrices(&f, Some(&b), v, t).unwrap();
            let oracle = bidirectional_forward_with(&f, &b, &x).unwrap();
            assert!(m.apply(&x).unwrap().max_abs_diff(&oracle) < 1e-9);
            assert!(mamba2d_bidirectional(&f, &b, &x).unwrap().max_abs_diff(&oracle) < 1e-10);
        }
    }

    #[test]
    fn selective_matrix_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_series(&mut rng, 4, 5, 1);
        let f = decoupled_grid(&mut rng, 4, 5, &x);
        let b = decoupled_grid(&mut rng, 4, 5, &x);
        let m = materialize_matrices(&f, Some(&b), 4, 5).unwrap();
        let oracle = bidirectional_forward_with(&f, &b, &x).unwrap();
        assert!(m.apply(&x).unwrap().max_abs_diff(&oracle) < 1e-9);
    }

    #[test]
    fn diagonal_is_local_response() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = decoupled(&mut rng, 2);
        let b = decoupled(&mut rng, 2);
        let m = materialize_matrices(&f, Some(&b), 3, 2).unwrap();
        let gamma = dot(&f.c2, &f.bbar2) + dot(&b.c2, &b.bbar2);
        // The v = v' response of the bidirectional pass minus its time part.
        let mut x = SeriesTensor::zeros(3, 2, 1);
        x.set(1, 1, 0, 1.0);
        let y = bidirectional_forward_with(&f, &b, &x).unwrap();
        let time_part = dot(&f.c1, &f.bbar1) + dot(&b.c1, &b.bbar1);
        for t in 0..2 {
            assert!((m.variate[t][(1, 1)] - gamma).abs() < 1e-14);
        }
        assert!((y.get(1, 1, 0) - time_part - gamma).abs() < 1e-12);
    }

    #[test]
    fn rejects_large_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dp = decoupled(&mut rng, 2);
        assert!(matches!(materialize_matrices(&dp, None, 8, 9), Err(Error::TooLarge { size: 72, .. })));
    }
}
