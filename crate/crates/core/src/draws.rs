//! Seeded random parameter and input draws shared by tests, examples,
//! the benchmark and the self-test.

use rand::Rng;

use crate::discretize::{discretize_all, ContinuousSSM2D, DiscreteSSM2D};
use crate::linalg::{Mat, StructuredMatrix};
use crate::scan::ScanElement;
use crate::series::SeriesTensor;

fn uniform(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Companion `A1`, `A2` with small coefficients, stable diagonal `A3`, `A4`.
pub fn random_continuous(rng: &mut impl Rng, n: usize) -> ContinuousSSM2D {
    let a1 = StructuredMatrix::Companion(uniform(rng, n, 0.5));
    let a2 = StructuredMatrix::Companion(uniform(rng, n, 0.5));
    let a3 = StructuredMatrix::Diagonal((0..n).map(|_| -rng.gen_range(0.1..1.5)).collect());
    let a4 = StructuredMatrix::Diagonal((0..n).map(|_| -rng.gen_range(0.1..1.5)).collect());
    let delta1 = rng.gen_range(0.05..0.5);
    let delta2 = rng.gen_range(0.05..0.5);
    ContinuousSSM2D::new(
        a1,
        a2,
        a3,
        a4,
        uniform(rng, n, 1.0),
        uniform(rng, n, 1.0),
        uniform(rng, n, 1.0),
        uniform(rng, n, 1.0),
        delta1,
        delta2,
    )
    .expect("well-formed draw")
}

/// ZOH discretization of [`random_continuous`].
pub fn random_discrete(rng: &mut impl Rng, n: usize) -> DiscreteSSM2D {
    discretize_all(&random_continuous(rng, n)).expect("finite draw")
}

/// Dense random discrete parameters with every block scaled to keep the
/// 2D path sums bounded.
pub fn random_dense_discrete(rng: &mut impl Rng, n: usize) -> DiscreteSSM2D {
    let scale = 0.5 / (n as f64).sqrt();
    let dense = |rng: &mut _| {
        let v = uniform(rng, n * n, scale);
        StructuredMatrix::Dense(Mat::from_vec(n, n, v).expect("square"))
    };
    let (a1, a2, a3, a4) = (dense(rng), dense(rng), dense(rng), dense(rng));
    DiscreteSSM2D::new(
        a1,
        a2,
        a3,
        a4,
        uniform(rng, n, 1.0),
        uniform(rng, n, 1.0),
        uniform(rng, n, 1.0),
        uniform(rng, n, 1.0),
    )
    .expect("well-formed draw")
}

pub fn random_series(rng: &mut impl Rng, variates: usize, steps: usize, channels: usize) -> SeriesTensor {
    SeriesTensor::from_vec(variates, steps, channels, uniform(rng, variates * steps * channels, 1.0))
        .expect("positive extents")
}

/// Companion coefficients whose characteristic polynomial has real roots
/// `-r`, `r` uniform in `roots`, so `exp(delta A)` decays for any step.
pub fn stable_companion_coeffs(rng: &mut impl Rng, n: usize, roots: std::ops::Range<f64>) -> Vec<f64> {
    // poly[k] is the coefficient of lambda^k; monic.
    let mut poly = vec![1.0];
    for _ in 0..n {
        let r = rng.gen_range(roots.clone());
        let mut next = vec![0.0; poly.len() + 1];
        for (k, &c) in poly.iter().enumerate() {
            next[k + 1] += c;
            next[k] += r * c;
        }
        poly = next;
    }
    poly[..n].iter().map(|c| -c).collect()
}

/// Parameters whose time and variate evolutions both decay: Hurwitz
/// companion `A1`, `A2`, negative diagonals. Safe for long sequences.
pub fn stable_continuous(rng: &mut impl Rng, n: usize) -> ContinuousSSM2D {
    let a1 = StructuredMatrix::Companion(stable_companion_coeffs(rng, n, 0.5..1.5));
    let a2 = StructuredMatrix::Companion(stable_companion_coeffs(rng, n, 1.0..3.0));
    let a3 = StructuredMatrix::Diagonal((0..n).map(|_| -rng.gen_range(1.0..3.0)).collect());
    let a4 = StructuredMatrix::Diagonal((0..n).map(|_| -rng.gen_range(0.5..1.5)).collect());
    let delta1 = rng.gen_range(0.05..0.5);
    let delta2 = rng.gen_range(0.05..0.5);
    ContinuousSSM2D::new(
        a1,
        a2,
        a3,
        a4,
        uniform(rng, n, 1.0),
        uniform(rng, n, 1.0),
        uniform(rng, n, 1.0),
        uniform(rng, n, 1.0),
        delta1,
        delta2,
    )
    .expect("well-formed draw")
}

/// Discrete parameters with the cross blocks `Abar2`, `Abar3` zeroed.
pub fn random_decoupled_discrete(rng: &mut impl Rng, n: usize) -> DiscreteSSM2D {
    let mut dp = random_discrete(rng, n);
    dp.abar2 = StructuredMatrix::zeros(n);
    dp.abar3 = StructuredMatrix::zeros(n);
    dp
}

pub fn random_mat(rng: &mut impl Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_vec(rows, cols, uniform(rng, rows * cols, 1.0)).expect("sized")
}

/// Scan element with entries uniform in `[-1, 1)`; `decoupled` zeroes the
/// cross blocks `p2` and `p4`.
pub fn random_scan_element(rng: &mut impl Rng, n: usize, d: usize, decoupled: bool) -> ScanElement {
    let cross = |rng: &mut _| if decoupled { Mat::zeros(n, n) } else { random_mat(rng, n, n) };
    let p1 = random_mat(rng, n, n);
    let p2 = cross(rng);
    let p3 = random_mat(rng, n, d);
    let p4 = cross(rng);
    let p5 = random_mat(rng, n, n);
    let p6 = random_mat(rng, n, d);
    ScanElement::new(p1, p2, p3, p4, p5, p6).expect("conforming blocks")
}
