//! Small dense matrices and the structured transition matrices built on them.
//!
//! Every transition in the model is one of three shapes: a companion matrix
//! (shift matrix plus a rank-1 last column), a diagonal matrix, or a general
//! dense matrix. [`StructuredMatrix`] keeps the tag so that products, powers
//! and exponentials can take the cheap path where one exists.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{shape_err, Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(shape_err(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(shape_err("ragged rows"));
        }
        Mat::from_vec(r, c, rows.concat())
    }

    /// Column vector (n x 1).
    pub fn column(values: &[f64]) -> Self {
        Mat { rows: values.len(), cols: 1, data: values.to_vec() }
    }

    /// Outer product `u v^T`.
    pub fn outer(u: &[f64], v: &[f64]) -> Self {
        let mut m = Mat::zeros(u.len(), v.len());
        for (i, ui) in u.iter().enumerate() {
            for (j, vj) in v.iter().enumerate() {
                m[(i, j)] = ui * vj;
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Mat) -> Result<Mat> {
        if self.cols != rhs.rows {
            return Err(shape_err(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Mat::zeros(self.rows, rhs.cols);
        gemm_acc(&self.data, self.rows, self.cols, &rhs.data, rhs.cols, &mut out.data);
        Ok(out)
    }

    pub fn add(&self, rhs: &Mat) -> Result<Mat> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Mat) -> Result<Mat> {
        self.zip_with(rhs, |a, b| a - b)
    }

    fn zip_with(&self, rhs: &Mat, f: impl Fn(f64, f64) -> f64) -> Result<Mat> {
        if self.shape() != rhs.shape() {
            return Err(shape_err(format!(
                "elementwise op on {:?} and {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Mat { rows: self.rows, cols: self.cols, data })
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest elementwise absolute difference; infinite on shape mismatch.
    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        if self.shape() != other.shape() {
            return f64::INFINITY;
        }
        max_abs_diff(&self.data, &other.data)
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// `out += a (m x k) * b (k x n)`, all row-major.
#[inline]
pub(crate) fn gemm_acc(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, bv) in out_row.iter_mut().zip(b_row) {
                *o += aip * bv;
            }
        }
    }
}

/// Square transition matrix with its structure kept explicit.
#[derive(Clone, Debug, PartialEq)]
pub enum StructuredMatrix {
    /// Shift matrix plus the given last column.
    Companion(Vec<f64>),
    Diagonal(Vec<f64>),
    Dense(Mat),
}

/// Builds the companion matrix whose last column is `coeffs`.
pub fn companion_from_coeffs(coeffs: &[f64]) -> Result<StructuredMatrix> {
    if coeffs.is_empty() {
        return Err(Error::Empty("companion coefficients"));
    }
    Ok(StructuredMatrix::Companion(coeffs.to_vec()))
}

impl StructuredMatrix {
    pub fn diagonal(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("diagonal entries"));
        }
        Ok(StructuredMatrix::Diagonal(values.to_vec()))
    }

    pub fn dense(m: Mat) -> Result<Self> {
        if m.rows() != m.cols() || m.rows() == 0 {
            return Err(shape_err(format!("transition must be square and nonempty, got {:?}", m.shape())));
        }
        Ok(StructuredMatrix::Dense(m))
    }

    pub fn identity(n: usize) -> Self {
        StructuredMatrix::Diagonal(vec![1.0; n])
    }

    pub fn zeros(n: usize) -> Self {
        StructuredMatrix::Diagonal(vec![0.0; n])
    }

    pub fn dim(&self) -> usize {
        match self {
            StructuredMatrix::Companion(a) => a.len(),
            StructuredMatrix::Diagonal(d) => d.len(),
            StructuredMatrix::Dense(m) => m.rows(),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            StructuredMatrix::Companion(v) | StructuredMatrix::Diagonal(v) => {
                v.iter().all(|x| x.is_finite())
            }
            StructuredMatrix::Dense(m) => m.is_finite(),
        }
    }

    /// True when every entry of the materialized matrix is zero.
    pub fn is_zero(&self) -> bool {
        match self {
            StructuredMatrix::Companion(_) => false,
            StructuredMatrix::Diagonal(d) => d.iter().all(|&v| v == 0.0),
            StructuredMatrix::Dense(m) => m.is_zero(),
        }
    }

    pub fn to_dense(&self) -> Mat {
        match self {
            StructuredMatrix::Companion(a) => {
                let n = a.len();
                let mut m = Mat::zeros(n, n);
                for i in 1..n {
                    m[(i, i - 1)] = 1.0;
                }
                for (i, ai) in a.iter().enumerate() {
                    m[(i, n - 1)] += ai;
                }
                m
            }
            StructuredMatrix::Diagonal(d) => {
                let mut m = Mat::zeros(d.len(), d.len());
                for (i, v) in d.iter().enumerate() {
                    m[(i, i)] = *v;
                }
                m
            }
            StructuredMatrix::Dense(m) => m.clone(),
        }
    }

    pub fn scaled(&self, s: f64) -> StructuredMatrix {
        match self {
            StructuredMatrix::Diagonal(d) => {
                StructuredMatrix::Diagonal(d.iter().map(|v| v * s).collect())
            }
            // s * companion is no longer a companion (the shift part scales too).
            StructuredMatrix::Companion(_) => StructuredMatrix::Dense(self.to_dense().scale(s)),
            StructuredMatrix::Dense(m) => StructuredMatrix::Dense(m.scale(s)),
        }
    }

    /// `M X` for an `N x d` matrix `X`.
    pub fn apply(&self, x: &Mat) -> Result<Mat> {
        if x.rows() != self.dim() {
            return Err(shape_err(format!(
                "apply {}x{} transition to {:?}",
                self.dim(),
                self.dim(),
                x.shape()
            )));
        }
        let mut out = Mat::zeros(x.rows(), x.cols());
        self.apply_acc(x.as_slice(), x.cols(), out.as_mut_slice());
        Ok(out)
    }

    /// `out += M x` where `x` and `out` are row-major `N x d` blocks.
    #[inline]
    pub(crate) fn apply_acc(&self, x: &[f64], d: usize, out: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(x.len(), n * d);
        debug_assert_eq!(out.len(), n * d);
        match self {
            StructuredMatrix::Companion(a) => {
                let last = &x[(n - 1) * d..n * d];
                for i in 0..n {
                    let row = &mut out[i * d..(i + 1) * d];
                    if i > 0 {
                        let prev = &x[(i - 1) * d..i * d];
                        for (o, p) in row.iter_mut().zip(prev) {
                            *o += p;
                        }
                    }
                    let ai = a[i];
                    if ai != 0.0 {
                        for (o, l) in row.iter_mut().zip(last) {
                            *o += ai * l;
                        }
                    }
                }
            }
            StructuredMatrix::Diagonal(diag) => {
                for (i, &di) in diag.iter().enumerate() {
                    if di == 0.0 {
                        continue;
                    }
                    for (o, xv) in out[i * d..(i + 1) * d].iter_mut().zip(&x[i * d..(i + 1) * d]) {
                        *o += di * xv;
                    }
                }
            }
            StructuredMatrix::Dense(m) => gemm_acc(m.as_slice(), n, n, x, d, out),
        }
    }

    /// `M v` for a vector.
    pub fn apply_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        self.apply_acc(v, 1, &mut out);
        out
    }

    /// Product `self * rhs`, keeping diagonal structure when both are diagonal.
    pub fn compose(&self, rhs: &StructuredMatrix) -> Result<StructuredMatrix> {
        if self.dim() != rhs.dim() {
            return Err(shape_err(format!("compose {}x{} with {}x{}", self.dim(), self.dim(), rhs.dim(), rhs.dim())));
        }
        if let (StructuredMatrix::Diagonal(a), StructuredMatrix::Diagonal(b)) = (self, rhs) {
            return Ok(StructuredMatrix::Diagonal(a.iter().zip(b).map(|(x, y)| x * y).collect()));
        }
        Ok(StructuredMatrix::Dense(self.apply(&rhs.to_dense())?))
    }
}

/// `M^k`. Diagonal powers stay diagonal; companion powers use the
/// shift + rank-1 product, O(N^2) per factor.
pub fn matrix_power(m: &StructuredMatrix, k: u32) -> StructuredMatrix {
    match m {
        StructuredMatrix::Diagonal(d) => {
            StructuredMatrix::Diagonal(d.iter().map(|v| v.powi(k as i32)).collect())
        }
        StructuredMatrix::Companion(_) => {
            let mut acc = Mat::identity(m.dim());
            for _ in 0..k {
                acc = m.apply(&acc).expect("square");
            }
            StructuredMatrix::Dense(acc)
        }
        StructuredMatrix::Dense(a) => {
            let mut result = Mat::identity(a.rows());
            let mut base = a.clone();
            let mut e = k;
            while e > 0 {
                if e & 1 == 1 {
                    result = result.matmul(&base).expect("square");
                }
                e >>= 1;
                if e > 0 {
                    base = base.matmul(&base).expect("square");
                }
            }
            StructuredMatrix::Dense(result)
        }
    }
}

/// Matrix exponential. Diagonal input stays diagonal.
pub fn expm(m: &StructuredMatrix) -> Result<StructuredMatrix> {
    if !m.is_finite() {
        return Err(Error::NonFinite("matrix exponential argument"));
    }
    match m {
        StructuredMatrix::Diagonal(d) => Ok(StructuredMatrix::Diagonal(d.iter().map(|v| v.exp()).collect())),
        _ => Ok(StructuredMatrix::Dense(expm_dense(&m.to_dense())?)),
    }
}

/// Scaling and squaring around a truncated Taylor series.
///
/// The argument is scaled until its 1-norm is at most 1/2; the series is
/// then summed until the next term drops below `1e-18` of the partial sum.
pub fn expm_dense(a: &Mat) -> Result<Mat> {
    if a.rows() != a.cols() {
        return Err(shape_err("expm of a non-square matrix"));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("matrix exponential argument"));
    }
    let n = a.rows();
    let norm = a.norm1();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a.scale(0.5f64.powi(squarings));

    let mut sum = Mat::identity(n);
    let mut term = Mat::identity(n);
    for k in 1..64 {
        term = term.matmul(&scaled)?.scale(1.0 / k as f64);
        sum = sum.add(&term)?;
        if term.max_abs() <= 1e-18 * sum.max_abs() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum.matmul(&sum)?;
    }
    Ok(sum)
}

/// Solves `A X = B` with partial pivoting. `None` if a pivot vanishes.
pub fn lu_solve(a: &Mat, b: &Mat) -> Option<Mat> {
    let n = a.rows();
    if a.cols() != n || b.rows() != n {
        return None;
    }
    let mut m = a.clone();
    let mut x = b.clone();
    let k = b.cols();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs()))
            .unwrap_or(col);
        if m[(pivot, col)] == 0.0 {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                let t = m[(col, j)];
                m[(col, j)] = m[(pivot, j)];
                m[(pivot, j)] = t;
            }
            for j in 0..k {
                let t = x[(col, j)];
                x[(col, j)] = x[(pivot, j)];
                x[(pivot, j)] = t;
            }
        }
        let p = m[(col, col)];
        for row in col + 1..n {
            let f = m[(row, col)] / p;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                m[(row, j)] -= f * m[(col, j)];
            }
            for j in 0..k {
                x[(row, j)] -= f * x[(col, j)];
            }
        }
    }
    for col in (0..n).rev() {
        let p = m[(col, col)];
        for j in 0..k {
            let mut s = x[(col, j)];
            for c in col + 1..n {
                s -= m[(col, c)] * x[(c, j)];
            }
            x[(col, j)] = s / p;
        }
    }
    x.is_finite().then_some(x)
}

/// Smallest singular value, via power iteration on `(A^-1)^T A^-1`.
/// Returns 0 for numerically singular input.
pub fn min_singular_value(a: &Mat) -> f64 {
    let n = a.rows();
    let Some(inv) = lu_solve(a, &Mat::identity(n)) else {
        return 0.0;
    };
    let gram = inv.transpose().matmul(&inv).expect("square");
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut lambda = 0.0;
    for _ in 0..200 {
        let mut w = vec![0.0; n];
        gemm_acc(gram.as_slice(), n, n, &v, 1, &mut w);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return 0.0;
        }
        let next = norm;
        v = w.into_iter().map(|x| x / norm).collect();
        if (next - lambda).abs() <= 1e-12 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    1.0 / lambda.sqrt()
}
