//! Zero-order-hold discretization of the continuous 2D SSM.
//!
//! The time-axis transitions `A1`, `A2` are discretized with `delta1`, the
//! variate-axis transitions `A3`, `A4` with `delta2`. The h1 head injects
//! input through `(A1, B1, delta1)` and the h2 head through `(A4, B2, delta2)`.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::linalg::{expm, expm_dense, lu_solve, min_singular_value, Mat, StructuredMatrix};

/// Below this smallest singular value the inverse formula is abandoned for
/// the `phi_1` series.
pub const SINGULAR_THRESHOLD: f64 = 1e-8;

/// Continuous-time parameters of a 2D SSM.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousSSM2D {
    pub a1: StructuredMatrix,
    pub a2: StructuredMatrix,
    pub a3: StructuredMatrix,
    pub a4: StructuredMatrix,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    pub delta1: f64,
    pub delta2: f64,
}

impl ContinuousSSM2D {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a1: StructuredMatrix,
        a2: StructuredMatrix,
        a3: StructuredMatrix,
        a4: StructuredMatrix,
        b1: Vec<f64>,
        b2: Vec<f64>,
        c1: Vec<f64>,
        c2: Vec<f64>,
        delta1: f64,
        delta2: f64,
    ) -> Result<Self> {
        let p = ContinuousSSM2D { a1, a2, a3, a4, b1, b2, c1, c2, delta1, delta2 };
        p.validate()?;
        Ok(p)
    }

    pub fn state_dim(&self) -> usize {
        self.a1.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a1.dim();
        if n == 0 {
            return Err(Error::Empty("state dimension"));
        }
        let dims = [self.a2.dim(), self.a3.dim(), self.a4.dim()];
        let lens = [self.b1.len(), self.b2.len(), self.c1.len(), self.c2.len()];
        if dims.iter().chain(&lens).any(|&k| k != n) {
            return Err(shape_err(format!(
                "all parameters must share N = {n}; got transitions {dims:?}, vectors {lens:?}"
            )));
        }
        for (name, delta) in [("delta1", self.delta1), ("delta2", self.delta2)] {
            if !(delta > 0.0 && delta.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {delta}")));
            }
        }
        Ok(())
    }
}

/// Discrete parameter set driving the 2D recurrence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSSM2D {
    #[serde(with = "structured_serde")]
    pub abar1: StructuredMatrix,
    #[serde(with = "structured_serde")]
    pub abar2: StructuredMatrix,
    #[serde(with = "structured_serde")]
    pub abar3: StructuredMatrix,
    #[serde(with = "structured_serde")]
    pub abar4: StructuredMatrix,
    pub bbar1: Vec<f64>,
    pub bbar2: Vec<f64>,
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
}

impl DiscreteSSM2D {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        abar1: StructuredMatrix,
        abar2: StructuredMatrix,
        abar3: StructuredMatrix,
        abar4: StructuredMatrix,
        bbar1: Vec<f64>,
        bbar2: Vec<f64>,
        c1: Vec<f64>,
        c2: Vec<f64>,
    ) -> Result<Self> {
        let dp = DiscreteSSM2D { abar1, abar2, abar3, abar4, bbar1, bbar2, c1, c2 };
        dp.validate()?;
        Ok(dp)
    }

    pub fn state_dim(&self) -> usize {
        self.abar1.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.abar1.dim();
        if n == 0 {
            return Err(Error::Empty("state dimension"));
        }
        let dims = [self.abar2.dim(), self.abar3.dim(), self.abar4.dim()];
        let lens = [self.bbar1.len(), self.bbar2.len(), self.c1.len(), self.c2.len()];
        if dims.iter().chain(&lens).any(|&k| k != n) {
            return Err(shape_err(format!(
                "discrete parameters must share N = {n}; got {dims:?}, {lens:?}"
            )));
        }
        let finite = [&self.abar1, &self.abar2, &self.abar3, &self.abar4].iter().all(|m| m.is_finite())
            && [&self.bbar1, &self.bbar2, &self.c1, &self.c2]
                .iter()
                .all(|v| v.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(Error::NonFinite("discrete parameters"));
        }
        Ok(())
    }

    /// True when the cross-axis transitions vanish (the decoupled variant).
    pub fn is_decoupled(&self) -> bool {
        self.abar2.is_zero() && self.abar3.is_zero()
    }
}

/// Discretizes one `(A, B)` pair with step `delta`.
///
/// `Abar = exp(delta A)`. `Bbar = A^-1 (Abar - I) B` when `A` is well
/// conditioned, otherwise `delta * phi_1(delta A) B`.
pub fn zoh_pair(a: &StructuredMatrix, b: &[f64], delta: f64) -> Result<(StructuredMatrix, Vec<f64>)> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!("step size must be positive, got {delta}")));
    }
    if b.len() != a.dim() {
        return Err(shape_err(format!("B has length {}, A is {}x{}", b.len(), a.dim(), a.dim())));
    }
    let abar = expm(&a.scaled(delta))?;
    let bbar = match a {
        StructuredMatrix::Diagonal(diag) => diag
            .iter()
            .zip(b)
            .map(|(&ai, &bi)| {
                if ai.abs() < SINGULAR_THRESHOLD {
                    delta * phi1_scalar(delta * ai) * bi
                } else {
                    (delta * ai).exp_m1() / ai * bi
                }
            })
            .collect(),
        _ => {
            let dense = a.to_dense();
            if min_singular_value(&dense) < SINGULAR_THRESHOLD {
                phi1_input(a, b, delta)?
            } else {
                inverse_input(&dense, &abar.to_dense(), b)
                    .map_or_else(|| phi1_input(a, b, delta), Ok)?
            }
        }
    };
    Ok((abar, bbar))
}

/// `A^-1 (Abar - I) B`; `None` when `A` is singular.
pub fn inverse_input(a: &Mat, abar: &Mat, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.rows();
    let rhs = abar.sub(&Mat::identity(n)).ok()?.matmul(&Mat::column(b)).ok()?;
    lu_solve(a, &rhs).map(Mat::into_vec)
}

/// `delta * phi_1(delta A) B` with `phi_1(z) = (e^z - 1) / z`.
///
/// Summed as a power series while `||delta A||_1 <= 1`; beyond that the
/// top-right block of `exp([[dA, dB], [0, 0]])` is used instead.
pub fn phi1_input(a: &StructuredMatrix, b: &[f64], delta: f64) -> Result<Vec<f64>> {
    let n = a.dim();
    let da = a.scaled(delta);
    if da.to_dense().norm1() <= 1.0 {
        let mut term: Vec<f64> = b.iter().map(|v| v * delta).collect();
        let mut sum = term.clone();
        for k in 1..200 {
            term = da.apply_vec(&term).into_iter().map(|v| v / (k as f64 + 1.0)).collect();
            let term_norm = term.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let sum_norm = sum.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            sum.iter_mut().zip(&term).for_each(|(s, t)| *s += t);
            if term_norm <= 1e-16 * sum_norm || term_norm == 0.0 {
                break;
            }
        }
        return Ok(sum);
    }
    let mut aug = Mat::zeros(n + 1, n + 1);
    let dense = da.to_dense();
    for i in 0..n {
        for j in 0..n {
            aug[(i, j)] = dense[(i, j)];
        }
        aug[(i, n)] = delta * b[i];
    }
    let e = expm_dense(&aug)?;
    Ok((0..n).map(|i| e[(i, n)]).collect())
}

fn phi1_scalar(z: f64) -> f64 {
    if z.abs() > 1e-5 {
        return z.exp_m1() / z;
    }
    1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0
}

/// Discretizes every transition and both input vectors.
pub fn discretize_all(p: &ContinuousSSM2D) -> Result<DiscreteSSM2D> {
    p.validate()?;
    let (abar1, bbar1) = zoh_pair(&p.a1, &p.b1, p.delta1)?;
    let abar2 = expm(&p.a2.scaled(p.delta1))?;
    let abar3 = expm(&p.a3.scaled(p.delta2))?;
    let (abar4, bbar2) = zoh_pair(&p.a4, &p.b2, p.delta2)?;
    DiscreteSSM2D::new(abar1, abar2, abar3, abar4, bbar1, bbar2, p.c1.clone(), p.c2.clone())
}

/// Serde adapter storing a [`StructuredMatrix`] as a tagged JSON object.
pub(crate) mod structured_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::linalg::{Mat, StructuredMatrix};

    #[derive(Serialize, Deserialize)]
    #[serde(tag = "kind", rename_all = "snake_case")]
    enum Repr {
        Companion { coeffs: Vec<f64> },
        Diagonal { diag: Vec<f64> },
        Dense { n: usize, entries: Vec<f64> },
    }

    pub fn serialize<S: Serializer>(m: &StructuredMatrix, s: S) -> Result<S::Ok, S::Error> {
        let repr = match m {
            StructuredMatrix::Companion(a) => Repr::Companion { coeffs: a.clone() },
            StructuredMatrix::Diagonal(d) => Repr::Diagonal { diag: d.clone() },
            StructuredMatrix::Dense(m) => Repr::Dense { n: m.rows(), entries: m.as_slice().to_vec() },
        };
        repr.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<StructuredMatrix, D::Error> {
        Ok(match Repr::deserialize(d)? {
            Repr::Companion { coeffs } => StructuredMatrix::Companion(coeffs),
            Repr::Diagonal { diag } => StructuredMatrix::Diagonal(diag),
            Repr::Dense { n, entries } => StructuredMatrix::Dense(
                Mat::from_vec(n, n, entries).map_err(serde::de::Error::custom)?,
            ),
        })
    }
}
