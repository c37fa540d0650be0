//! The 2x3 block operator ⊛, inclusive prefix scans, and the scan-based
//! evaluation of the 2D recurrence.
//!
//! For `p = (p1 p2 p3; p4 p5 p6)` and `q` of the same layout,
//!
//! ```text
//! p ⊛ q = ( q1 p1   q2 p2   q1 p3 + q2 p6 + q3 )
//!         ( q4 p4   q5 p5   q4 p3 + q5 p6 + q6 )
//! ```
//!
//! where `p1, p2, p4, p5` are `N x N` and `p3, p6` are `N x d`.
//!
//! ⊛ is associative on elements whose cross blocks `p2`, `p4` vanish, but
//! not in general. [`Schedule::RowScan`] therefore evaluates the coupled
//! recurrence one variate row at a time: the h2 row is filled elementwise
//! from the row above, and the h1 row is an inclusive scan over time-affine
//! elements `(Abar1, 0, u; 0, 0, 0)`, a subset on which ⊛ is associative.

use rayon::prelude::*;

use crate::discretize::DiscreteSSM2D;
use crate::error::{shape_err, Error, Result};
use crate::linalg::{gemm_acc, matrix_power, Mat, StructuredMatrix};
use crate::recurrence::{check_input, inject_acc, readout_acc, HiddenGrid, ParamSource};
use crate::series::SeriesTensor;

/// Six-block scan element.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanElement {
    pub p1: Mat,
    pub p2: Mat,
    pub p3: Mat,
    pub p4: Mat,
    pub p5: Mat,
    pub p6: Mat,
}

impl ScanElement {
    pub fn new(p1: Mat, p2: Mat, p3: Mat, p4: Mat, p5: Mat, p6: Mat) -> Result<Self> {
        let e = ScanElement { p1, p2, p3, p4, p5, p6 };
        e.check()?;
        Ok(e)
    }

    /// `(I, I, 0; I, I, 0)`, a left identity for ⊛.
    pub fn left_identity(n: usize, d: usize) -> Self {
        ScanElement {
            p1: Mat::identity(n),
            p2: Mat::identity(n),
            p3: Mat::zeros(n, d),
            p4: Mat::identity(n),
            p5: Mat::identity(n),
            p6: Mat::zeros(n, d),
        }
    }

    /// The per-cell element `(Abar1, Abar2, Bbar1 x; Abar3, Abar4, Bbar2 x)`.
    pub fn from_cell(dp: &DiscreteSSM2D, x: &[f64]) -> Self {
        let n = dp.state_dim();
        let d = x.len();
        let mut p3 = Mat::zeros(n, d);
        let mut p6 = Mat::zeros(n, d);
        inject_acc(&dp.bbar1, x, p3.as_mut_slice());
        inject_acc(&dp.bbar2, x, p6.as_mut_slice());
        ScanElement {
            p1: dp.abar1.to_dense(),
            p2: dp.abar2.to_dense(),
            p3,
            p4: dp.abar3.to_dense(),
            p5: dp.abar4.to_dense(),
            p6,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.p1.rows()
    }

    pub fn channels(&self) -> usize {
        self.p3.cols()
    }

    fn check(&self) -> Result<()> {
        let n = self.p1.rows();
        let d = self.p3.cols();
        let square_ok = [&self.p1, &self.p2, &self.p4, &self.p5].iter().all(|m| m.shape() == (n, n));
        let state_ok = [&self.p3, &self.p6].iter().all(|m| m.shape() == (n, d));
        if n == 0 || !square_ok || !state_ok {
            return Err(shape_err("scan element blocks do not share N and d"));
        }
        if !self.blocks().iter().all(|m| m.is_finite()) {
            return Err(Error::NonFinite("scan element"));
        }
        Ok(())
    }

    fn same_shape(&self, other: &ScanElement) -> bool {
        self.p1.shape() == other.p1.shape() && self.p3.shape() == other.p3.shape()
    }

    pub fn blocks(&self) -> [&Mat; 6] {
        [&self.p1, &self.p2, &self.p3, &self.p4, &self.p5, &self.p6]
    }

    /// Largest blockwise relative difference.
    pub fn max_rel_diff(&self, other: &ScanElement) -> f64 {
        self.blocks()
            .iter()
            .zip(other.blocks())
            .map(|(a, b)| {
                let scale = a.max_abs().max(b.max_abs()).max(f64::MIN_POSITIVE);
                a.max_abs_diff(b) / scale
            })
            .fold(0.0, f64::max)
    }
}

/// `p ⊛ q`.
pub fn op_star(p: &ScanElement, q: &ScanElement) -> Result<ScanElement> {
    if !p.same_shape(q) {
        return Err(shape_err(format!(
            "op_star on N={},d={} and N={},d={}",
            p.state_dim(),
            p.channels(),
            q.state_dim(),
            q.channels()
        )));
    }
    Ok(op_star_unchecked(p, q))
}

fn op_star_unchecked(p: &ScanElement, q: &ScanElement) -> ScanElement {
    let mm = |a: &Mat, b: &Mat| a.matmul(b).expect("conforming blocks");
    let top = mm(&q.p1, &p.p3).add(&mm(&q.p2, &p.p6)).and_then(|m| m.add(&q.p3)).expect("conforming");
    let bottom = mm(&q.p4, &p.p3).add(&mm(&q.p5, &p.p6)).and_then(|m| m.add(&q.p6)).expect("conforming");
    ScanElement {
        p1: mm(&q.p1, &p.p1),
        p2: mm(&q.p2, &p.p2),
        p3: top,
        p4: mm(&q.p4, &p.p4),
        p5: mm(&q.p5, &p.p5),
        p6: bottom,
    }
}

/// A binary operator that the prefix scans may regroup.
///
/// `a.combine(b)` applies `a` first, then `b`.
pub trait Associative: Clone + Send + Sync {
    fn combine(&self, rhs: &Self) -> Self;
}

impl Associative for ScanElement {
    fn combine(&self, rhs: &Self) -> Self {
        op_star_unchecked(self, rhs)
    }
}

/// Time-affine map `h -> A h + b`: the ⊛ element `(A, 0, b; 0, 0, 0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeAffine {
    pub transition: Mat,
    pub offset: Mat,
}

impl TimeAffine {
    pub fn to_scan_element(&self) -> ScanElement {
        let n = self.transition.rows();
        let d = self.offset.cols();
        ScanElement {
            p1: self.transition.clone(),
            p2: Mat::zeros(n, n),
            p3: self.offset.clone(),
            p4: Mat::zeros(n, n),
            p5: Mat::zeros(n, n),
            p6: Mat::zeros(n, d),
        }
    }
}

impl Associative for TimeAffine {
    fn combine(&self, rhs: &Self) -> Self {
        let transition = rhs.transition.matmul(&self.transition).expect("conforming");
        let offset = rhs.transition.matmul(&self.offset).and_then(|m| m.add(&rhs.offset)).expect("conforming");
        TimeAffine { transition, offset }
    }
}

/// How an inclusive scan is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScanMode {
    /// Left-to-right fold.
    Sequential,
    /// Blocked tree scan: blocks of `chunk` elements are scanned
    /// independently (in parallel), their totals are scanned recursively,
    /// and each block is then offset by the total of everything before it.
    Tree { chunk: usize },
}

impl Default for ScanMode {
    fn default() -> Self {
        ScanMode::Tree { chunk: 64 }
    }
}

/// Inclusive prefix scan: `out[i] = elems[0] ⊛ ... ⊛ elems[i]`.
///
/// Never pads with an identity, so operators with only a left identity
/// are fine.
pub fn inclusive_scan<E: Associative>(elems: &[E], mode: ScanMode) -> Result<Vec<E>> {
    if elems.is_empty() {
        return Err(Error::Empty("scan input"));
    }
    Ok(match mode {
        ScanMode::Sequential => sequential_scan(elems),
        ScanMode::Tree { chunk } => tree_scan(elems, chunk.max(2)),
    })
}

/// [`inclusive_scan`] over [`ScanElement`]s with a shape check.
pub fn scan_elements(elems: &[ScanElement], mode: ScanMode) -> Result<Vec<ScanElement>> {
    if let Some(first) = elems.first() {
        first.check()?;
        if elems.iter().any(|e| !e.same_shape(first)) {
            return Err(shape_err("scan elements do not share a shape"));
        }
    }
    inclusive_scan(elems, mode)
}

fn sequential_scan<E: Associative>(elems: &[E]) -> Vec<E> {
    let mut out: Vec<E> = Vec::with_capacity(elems.len());
    for e in elems {
        let next = match out.last() {
            Some(acc) => acc.combine(e),
            None => e.clone(),
        };
        out.push(next);
    }
    out
}

fn tree_scan<E: Associative>(elems: &[E], chunk: usize) -> Vec<E> {
    if elems.len() <= chunk {
        return sequential_scan(elems);
    }
    let mut blocks: Vec<Vec<E>> = elems.par_chunks(chunk).map(sequential_scan).collect();
    let totals: Vec<E> = blocks.iter().map(|b| b.last().expect("nonempty block").clone()).collect();
    let carries = tree_scan(&totals, chunk);
    blocks.par_iter_mut().skip(1).zip(carries.par_iter()).for_each(|(block, carry)| {
        for e in block.iter_mut() {
            *e = carry.combine(e);
        }
    });
    blocks.into_iter().flatten().collect()
}

/// Evaluation order for [`scan_forward`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    /// Rows in order; h2 elementwise from the row above, h1 by a
    /// time-affine scan. Exact for the fully coupled recurrence.
    RowScan,
    /// Anti-diagonals in order; cells of one anti-diagonal in parallel.
    Wavefront,
    /// One linear ⊛ scan over the per-cell elements in anti-diagonal order.
    /// Only reproduces the recurrence on degenerate grids; kept to measure
    /// that limitation.
    LinearWavefront,
}

/// Scan-based forward pass.
pub fn scan_forward<P: ParamSource + ?Sized>(
    params: &P,
    x: &SeriesTensor,
    schedule: Schedule,
    mode: ScanMode,
) -> Result<(SeriesTensor, HiddenGrid)> {
    check_input(params, x)?;
    let (y, hidden) = match schedule {
        Schedule::RowScan => row_scan(params, x, mode),
        Schedule::Wavefront => wavefront(params, x),
        Schedule::LinearWavefront => linear_wavefront(params, x, mode)?,
    };
    if !y.is_finite() {
        return Err(Error::NonFinite("scan output"));
    }
    Ok((y, hidden))
}

fn readout_grid<P: ParamSource + ?Sized>(params: &P, hidden: &HiddenGrid, y: &mut SeriesTensor) {
    let (nv, nt, d) = y.shape();
    y.as_mut_slice().par_chunks_mut(d).enumerate().for_each(|(i, out)| {
        let (v, t) = (i / nt, i % nt);
        let p = params.at(v, t);
        out.fill(0.0);
        readout_acc(&p.c1, hidden.h1(v, t), out);
        readout_acc(&p.c2, hidden.h2(v, t), out);
    });
    debug_assert_eq!(y.as_slice().len(), nv * nt * d);
}

fn row_scan<P: ParamSource + ?Sized>(params: &P, x: &SeriesTensor, mode: ScanMode) -> (SeriesTensor, HiddenGrid) {
    let (nv, nt, d) = x.shape();
    let n = params.state_dim();
    let block = n * d;
    let chunk = match mode {
        ScanMode::Sequential => nt,
        ScanMode::Tree { chunk } => chunk.max(1),
    };
    // Chunk-length power of the shared transition, for carrying across blocks.
    let shared_power = (params.is_shared() && chunk < nt)
        .then(|| matrix_power(&params.at(0, 0).abar1, chunk as u32));

    let mut hidden = HiddenGrid::zeros(nv, nt, n, d);
    for v in 0..nv {
        let (prev_h1, prev_h2, h1_row, h2_row) = hidden.row_with_prev(v);

        // h2 from the row above, elementwise.
        h2_row.par_chunks_mut(block).enumerate().for_each(|(t, h2)| {
            let p = params.at(v, t);
            if v > 0 {
                p.abar3.apply_acc(&prev_h1[t * block..(t + 1) * block], d, h2);
                p.abar4.apply_acc(&prev_h2[t * block..(t + 1) * block], d, h2);
            }
            inject_acc(&p.bbar2, x.cell(v, t), h2);
        });

        // Offsets u_t = Abar2 h2[t-1] + Bbar1 x_t.
        let h2_ro: &[f64] = h2_row;
        h1_row.par_chunks_mut(block).enumerate().for_each(|(t, u)| {
            let p = params.at(v, t);
            if t > 0 {
                p.abar2.apply_acc(&h2_ro[(t - 1) * block..t * block], d, u);
            }
            inject_acc(&p.bbar1, x.cell(v, t), u);
        });

        time_affine_scan(params, v, h1_row, block, d, chunk, shared_power.as_ref());
    }
    let mut y = SeriesTensor::zeros(nv, nt, d);
    readout_grid(params, &hidden, &mut y);
    (y, hidden)
}

/// In-place blocked inclusive scan of `h_t <- Abar1_t h_{t-1} + h_t` over one
/// row. `row` holds the offsets on entry and the states on exit.
fn time_affine_scan<P: ParamSource + ?Sized>(
    params: &P,
    v: usize,
    row: &mut [f64],
    block: usize,
    d: usize,
    chunk: usize,
    shared_power: Option<&StructuredMatrix>,
) {
    let nt = row.len() / block;
    let n = block / d;
    let span = chunk * block;

    // Local scans from a zero carry; per-cell transitions also accumulate
    // the block's transition product.
    let products: Vec<Option<Mat>> = row
        .par_chunks_mut(span)
        .enumerate()
        .map(|(k, part)| {
            let start = k * chunk;
            let len = part.len() / block;
            let mut scratch = vec![0.0; block];
            let mut product = (shared_power.is_none() && start + len < nt).then(|| Mat::identity(n));
            for j in 0..len {
                let a = &params.at(v, start + j).abar1;
                if j > 0 {
                    scratch.fill(0.0);
                    a.apply_acc(&part[(j - 1) * block..j * block], d, &mut scratch);
                    part[j * block..(j + 1) * block].iter_mut().zip(&scratch).for_each(|(h, s)| *h += s);
                }
                if let Some(prod) = product.as_mut() {
                    *prod = a.apply(prod).expect("square");
                }
            }
            product
        })
        .collect();

    let blocks = products.len();
    if blocks <= 1 {
        return;
    }

    // Sequential pass over block totals: carry[k] is the true state at the
    // end of block k.
    let mut carries: Vec<Vec<f64>> = Vec::with_capacity(blocks - 1);
    let mut carry = row[(chunk - 1) * block..chunk * block].to_vec();
    carries.push(carry.clone());
    for (k, product) in products.iter().enumerate().take(blocks - 1).skip(1) {
        let end = ((k + 1) * chunk - 1) * block;
        let mut next = row[end..end + block].to_vec();
        match (shared_power, product) {
            (Some(power), _) => power.apply_acc(&carry, d, &mut next),
            (None, Some(prod)) => gemm_acc(prod.as_slice(), n, n, &carry, d, &mut next),
            (None, None) => unreachable!("inner blocks carry a product"),
        }
        carry = next;
        carries.push(carry.clone());
    }

    // Offset every later block by the propagated carry.
    row.par_chunks_mut(span).enumerate().skip(1).for_each(|(k, part)| {
        let start = k * chunk;
        let len = part.len() / block;
        let mut c = carries[k - 1].clone();
        let mut next = vec![0.0; block];
        for j in 0..len {
            next.fill(0.0);
            params.at(v, start + j).abar1.apply_acc(&c, d, &mut next);
            part[j * block..(j + 1) * block].iter_mut().zip(&next).for_each(|(h, s)| *h += s);
            std::mem::swap(&mut c, &mut next);
        }
    });
}

fn wavefront<P: ParamSource + ?Sized>(params: &P, x: &SeriesTensor) -> (SeriesTensor, HiddenGrid) {
    let (nv, nt, d) = x.shape();
    let n = params.state_dim();
    let block = n * d;
    let mut hidden = HiddenGrid::zeros(nv, nt, n, d);
    for diag in 0..nv + nt - 1 {
        let v_lo = diag.saturating_sub(nt - 1);
        let v_hi = diag.min(nv - 1);
        let cells: Vec<(usize, Vec<f64>, Vec<f64>)> = (v_lo..=v_hi)
            .into_par_iter()
            .map(|v| {
                let t = diag - v;
                let p = params.at(v, t);
                let mut h1 = vec![0.0; block];
                let mut h2 = vec![0.0; block];
                if t > 0 {
                    p.abar1.apply_acc(hidden.h1(v, t - 1), d, &mut h1);
                    p.abar2.apply_acc(hidden.h2(v, t - 1), d, &mut h1);
                }
                if v > 0 {
                    p.abar3.apply_acc(hidden.h1(v - 1, t), d, &mut h2);
                    p.abar4.apply_acc(hidden.h2(v - 1, t), d, &mut h2);
                }
                inject_acc(&p.bbar1, x.cell(v, t), &mut h1);
                inject_acc(&p.bbar2, x.cell(v, t), &mut h2);
                (v, h1, h2)
            })
            .collect();
        for (v, h1, h2) in cells {
            let t = diag - v;
            hidden.h1_mut(v, t).copy_from_slice(&h1);
            hidden.h2_mut(v, t).copy_from_slice(&h2);
        }
    }
    let mut y = SeriesTensor::zeros(nv, nt, d);
    readout_grid(params, &hidden, &mut y);
    (y, hidden)
}

/// Cells in anti-diagonal order, ties broken by variate.
pub fn wavefront_order(variates: usize, steps: usize) -> Vec<(usize, usize)> {
    let mut order = Vec::with_capacity(variates * steps);
    for diag in 0..variates + steps - 1 {
        for v in diag.saturating_sub(steps - 1)..=diag.min(variates - 1) {
            order.push((v, diag - v));
        }
    }
    order
}

fn linear_wavefront<P: ParamSource + ?Sized>(
    params: &P,
    x: &SeriesTensor,
    mode: ScanMode,
) -> Result<(SeriesTensor, HiddenGrid)> {
    let (nv, nt, d) = x.shape();
    let n = params.state_dim();
    let order = wavefront_order(nv, nt);
    let elems: Vec<ScanElement> =
        order.iter().map(|&(v, t)| ScanElement::from_cell(params.at(v, t), x.cell(v, t))).collect();
    let prefix = inclusive_scan(&elems, mode)?;
    let mut hidden = HiddenGrid::zeros(nv, nt, n, d);
    for (&(v, t), s) in order.iter().zip(&prefix) {
        hidden.h1_mut(v, t).copy_from_slice(s.p3.as_slice());
        hidden.h2_mut(v, t).copy_from_slice(s.p6.as_slice());
    }
    let mut y = SeriesTensor::zeros(nv, nt, d);
    readout_grid(params, &hidden, &mut y);
    Ok((y, hidden))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::draws::{random_dense_discrete, random_discrete, random_mat, random_scan_element, random_series};
    use crate::recurrence::{forward_recurrence, CellGrid};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> Mat {
        Mat::from_vec(1, 1, vec![v]).unwrap()
    }

    fn scalar_element(v: [f64; 6]) -> ScanElement {
        ScanElement::new(scalar(v[0]), scalar(v[1]), scalar(v[2]), scalar(v[3]), scalar(v[4]), scalar(v[5])).unwrap()
    }

    #[test]
    fn scalar_formula() {
        let p = scalar_element([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let q = scalar_element([7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        assert_eq!(op_star(&p, &q).unwrap(), scalar_element([7.0, 16.0, 78.0, 40.0, 55.0, 108.0]));
    }

    #[test]
    fn left_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let q = random_scan_element(&mut rng, 3, 2, false);
        let id = ScanElement::left_identity(3, 2);
        assert_eq!(op_star(&id, &q).unwrap(), q);
        // Not a right identity: q ⊛ id mixes q's third column.
        assert_ne!(op_star(&q, &id).unwrap(), q);
    }

    #[test]
    fn coupled_operator_is_not_associative() {
        let p = scalar_element([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let q = scalar_element([7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let r = scalar_element([13.0, 14.0, 15.0, 16.0, 17.0, 18.0]);
        let left = op_star(&op_star(&p, &q).unwrap(), &r).unwrap();
        let right = op_star(&p, &op_star(&q, &r).unwrap()).unwrap();
        assert_eq!(left.p3[(0, 0)], 2541.0);
        assert_eq!(right.p3[(0, 0)], 1245.0);
    }

    #[test]
    fn decoupled_operator_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let [p, q, r] = [0, 1, 2].map(|_| random_scan_element(&mut rng, 2, 2, true));
            let left = op_star(&op_star(&p, &q).unwrap(), &r).unwrap();
            let right = op_star(&p, &op_star(&q, &r).unwrap()).unwrap();
            assert!(left.max_rel_diff(&right) < 1e-9);
        }
    }

    #[test]
    fn shape_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_scan_element(&mut rng, 2, 1, false);
        let b = random_scan_element(&mut rng, 3, 1, false);
        assert!(op_star(&a, &b).is_err());
        assert!(scan_elements(&[a, b], ScanMode::Sequential).is_err());
        assert!(matches!(inclusive_scan::<ScanElement>(&[], ScanMode::Sequential), Err(Error::Empty(_))));
    }

    #[test]
    fn scan_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = random_scan_element(&mut rng, 2, 2, false);
        assert_eq!(scan_elements(std::slice::from_ref(&e), ScanMode::Tree { chunk: 2 }).unwrap(), vec![e]);

        let id = ScanElement::left_identity(2, 3);
        let ids = vec![id.clone(); 9];
        for mode in [ScanMode::Sequential, ScanMode::Tree { chunk: 2 }] {
            assert!(scan_elements(&ids, mode).unwrap().iter().all(|s| *s == id));
        }

        let elems: Vec<_> = (0..8).map(|_| random_scan_element(&mut rng, 2, 2, true)).collect();
        let seq = scan_elements(&elems, ScanMode::Sequential).unwrap();
        let tree = scan_elements(&elems, ScanMode::Tree { chunk: 2 }).unwrap();
        for (a, b) in seq.iter().zip(&tree) {
            assert!(a.max_rel_diff(b) < 1e-9);
        }
    }

    #[test]
    fn time_affine_is_restricted_op_star() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = TimeAffine { transition: random_mat(&mut rng, 3, 3), offset: random_mat(&mut rng, 3, 2) };
        let b = TimeAffine { transition: random_mat(&mut rng, 3, 3), offset: random_mat(&mut rng, 3, 2) };
        let direct = a.combine(&b).to_scan_element();
        let embedded = op_star(&a.to_scan_element(), &b.to_scan_element()).unwrap();
        assert!(direct.max_rel_diff(&embedded) < 1e-14);
    }

    #[test]
    fn row_scan_kernel_matches_generic_scan() {
        // One row (V = 1) with Abar2 = 0: h1 is exactly the time-affine scan.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut dp = random_discrete(&mut rng, 3);
        dp.abar2 = StructuredMatrix::zeros(3);
        let x = random_series(&mut rng, 1, 23, 2);
        let elems: Vec<TimeAffine> = (0..23)
            .map(|t| {
                let mut offset = Mat::zeros(3, 2);
                inject_acc(&dp.bbar1, x.cell(0, t), offset.as_mut_slice());
                TimeAffine { transition: dp.abar1.to_dense(), offset }
            })
            .collect();
        let generic = inclusive_scan(&elems, ScanMode::Tree { chunk: 4 }).unwrap();
        for chunk in [1, 3, 5, 23, 64] {
            let (_, hidden) = scan_forward(&dp, &x, Schedule::RowScan, ScanMode::Tree { chunk }).unwrap();
            for (t, g) in generic.iter().enumerate() {
                assert!(crate::linalg::max_abs_diff(hidden.h1(0, t), g.offset.as_slice()) < 1e-12);
            }
        }
    }

    #[test]
    fn one_dimensional_reductions() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut dp = random_discrete(&mut rng, 3);
        dp.abar2 = StructuredMatrix::zeros(3);
        dp.abar3 = StructuredMatrix::zeros(3);
        for (v, t) in [(1, 12), (9, 1)] {
            let x = random_series(&mut rng, v, t, 2);
            let (oracle, _) = forward_recurrence(&dp, &x).unwrap();
            for schedule in [Schedule::RowScan, Schedule::Wavefront] {
                let (y, _) = scan_forward(&dp, &x, schedule, ScanMode::Tree { chunk: 4 }).unwrap();
                assert!(y.max_abs_diff(&oracle) < 1e-10);
            }
        }
    }

    #[test]
    fn coupled_grid_matches_recurrence() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dp = random_dense_discrete(&mut rng, 3);
        let x = random_series(&mut rng, 4, 4, 2);
        let (oracle, oracle_h) = forward_recurrence(&dp, &x).unwrap();
        for schedule in [Schedule::RowScan, Schedule::Wavefront] {
            for mode in [ScanMode::Sequential, ScanMode::Tree { chunk: 1 }, ScanMode::Tree { chunk: 3 }] {
                let (y, h) = scan_forward(&dp, &x, schedule, mode).unwrap();
                assert!(y.max_abs_diff(&oracle) < 1e-9, "{schedule:?} {mode:?}");
                assert!(h.max_abs_diff(&oracle_h) < 1e-9);
            }
        }
    }

    #[test]
    fn per_cell_parameters_match_recurrence() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cells: Vec<_> = (0..5 * 7).map(|_| random_discrete(&mut rng, 2)).collect();
        let grid = CellGrid::new(5, 7, cells).unwrap();
        let x = random_series(&mut rng, 5, 7, 3);
        let (oracle, _) = forward_recurrence(&grid, &x).unwrap();
        for chunk in [1, 2, 3, 7] {
            let (y, _) = scan_forward(&grid, &x, Schedule::RowScan, ScanMode::Tree { chunk }).unwrap();
            assert!(y.max_abs_diff(&oracle) < 1e-9);
        }
    }

    #[test]
    fn linear_wavefront_reproduces_single_cell_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dp = random_discrete(&mut rng, 2);
        let x = random_series(&mut rng, 1, 1, 1);
        let (oracle, _) = forward_recurrence(&dp, &x).unwrap();
        let (y, _) = scan_forward(&dp, &x, Schedule::LinearWavefront, ScanMode::Sequential).unwrap();
        assert!(y.max_abs_diff(&oracle) < 1e-14);

        let x = random_series(&mut rng, 3, 3, 1);
        let (oracle, _) = forward_recurrence(&dp, &x).unwrap();
        let (y, _) = scan_forward(&dp, &x, Schedule::LinearWavefront, ScanMode::Sequential).unwrap();
        assert!(y.max_abs_diff(&oracle) > 1e-6);
    }

    proptest! {
        #[test]
        fn split_invariance_on_decoupled_elements(seed in any::<u64>(), len in 2usize..12, cut in 1usize..11) {
            prop_assume!(cut < len);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let elems: Vec<_> = (0..len).map(|_| random_scan_element(&mut rng, 2, 1, true)).collect();
            let fold = |s: &[ScanElement]| scan_elements(s, ScanMode::Sequential).unwrap().pop().unwrap();
            let whole = fold(&elems);
            let split = op_star(&fold(&elems[..cut]), &fold(&elems[cut..])).unwrap();
            prop_assert!(whole.max_rel_diff(&split) < 1e-9);
        }

        #[test]
        fn tree_is_chunk_independent(seed in any::<u64>(), len in 1usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let elems: Vec<_> = (0..len).map(|_| random_scan_element(&mut rng, 2, 2, true)).collect();
            let reference = scan_elements(&elems, ScanMode::Sequential).unwrap();
            for chunk in [2, 3, 5, 16] {
                let tree = scan_elements(&elems, ScanMode::Tree { chunk }).unwrap();
                for (a, b) in reference.iter().zip(&tree) {
                    prop_assert!(a.max_rel_diff(b) < 1e-9);
                }
            }
        }
    }
}
