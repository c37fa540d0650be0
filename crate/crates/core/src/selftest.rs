//! Invariant catalogue run by `chimera2d selftest`.
//!
//! [`CATALOGUE`] names every invariant the library promises; [`registry`]
//! holds the checks. The two must list the same ids, which a unit test
//! enforces, so a new invariant cannot be added without a check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ar::{sar_to_ssm, simulate_sar, stable_sar_coeffs};
use crate::config::RunConfig;
use crate::conv::{conv_apply, impulse_kernels};
use crate::csvio::{read_series, write_series, SeriesTable};
use crate::discretize::{discretize_all, inverse_input, phi1_input, DiscreteSSM2D};
use crate::draws::{
    random_continuous, random_decoupled_discrete, random_dense_discrete, random_discrete, random_mat,
    random_scan_element, random_series,
};
use crate::error::Result;
use crate::linalg::{expm, matrix_power, Mat, StructuredMatrix};
use crate::model::{forecast, gate, model_forward, richardson_check, trend_forward, ChimeraModel, ModelConfig};
use crate::recurrence::{forward_recurrence, forward_recurrence_with_boundary, Boundary, CellGrid};
use crate::scan::{op_star, scan_elements, scan_forward, ScanElement, ScanMode, Schedule};
use crate::selective::{selective_grid, softplus, Affine, SelectiveProjections, Transitions};
use crate::series::SeriesTensor;
use crate::variants::{mamba2d_bidirectional, materialize_matrices};

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Pass(String),
    Fail(String),
    /// Known, documented shortfall; does not fail the run.
    Limitation(String),
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Pass(_) => "PASS",
            Outcome::Fail(_) => "FAIL",
            Outcome::Limitation(_) => "LIMITATION",
        }
    }

    pub fn detail(&self) -> &str {
        match self {
            Outcome::Pass(d) | Outcome::Fail(d) | Outcome::Limitation(d) => d,
        }
    }

    fn bound(what: &str, value: f64, tol: f64) -> Outcome {
        let detail = format!("{what} {value:.3e} (tol {tol:.0e})");
        if value < tol {
            Outcome::Pass(detail)
        } else {
            Outcome::Fail(detail)
        }
    }
}

pub struct Invariant {
    pub id: &'static str,
    pub statement: &'static str,
}

pub const CATALOGUE: &[Invariant] = &[
    Invariant { id: "linalg.apply_matches_dense", statement: "structured apply equals the dense product for every tag" },
    Invariant { id: "linalg.power_consistency", statement: "M^(j+k) = M^j M^k" },
    Invariant { id: "linalg.expm_doubling", statement: "expm(A) expm(A) = expm(2A)" },
    Invariant { id: "linalg.companion_nilpotent", statement: "the zero-column companion matrix is nilpotent of index N" },
    Invariant { id: "discretize.resolution", statement: "n steps under k*delta equal k*n steps under delta" },
    Invariant { id: "discretize.input_branches", statement: "series and inverse forms of Bbar agree" },
    Invariant { id: "recurrence.linearity", statement: "the recurrence is linear in its input" },
    Invariant { id: "recurrence.causality", statement: "y[v,t] ignores inputs later in time or variate" },
    Invariant { id: "recurrence.decoupling", statement: "zero cross blocks split the grid into two 1D recurrences" },
    Invariant { id: "scan.associativity", statement: "op_star is associative" },
    Invariant { id: "scan.split_invariance", statement: "fold(e) = fold(e[..k]) op_star fold(e[k..])" },
    Invariant { id: "scan.oracle_equivalence", statement: "scan_forward equals the sequential recurrence" },
    Invariant { id: "scan.single_pass_schedule", statement: "one linear scan over the anti-diagonal order reproduces the grid" },
    Invariant { id: "scan.chunk_determinism", statement: "tree scan output does not depend on the chunk size" },
    Invariant { id: "conv.matches_recurrence", statement: "the impulse-response convolution equals the recurrence" },
    Invariant { id: "conv.translation_invariance", statement: "impulse responses are shifts of the origin response" },
    Invariant { id: "selective.step_monotone", statement: "the step is strictly increasing in its preactivation" },
    Invariant { id: "selective.zero_weight_degeneration", statement: "zero projection weights give the fixed model" },
    Invariant { id: "model.residual_identity", statement: "a zero seasonal map leaves the gated trend path" },
    Invariant { id: "model.closed_gate_linearity", statement: "with W_in = 0 the fixed model is linear" },
    Invariant { id: "model.gradient_sanity", statement: "finite-difference gradients are finite and Richardson-consistent" },
    Invariant { id: "variants.matrix_form", statement: "materialized matrices reproduce the decoupled model" },
    Invariant { id: "variants.time_matrix_causal", statement: "time matrices are lower triangular" },
    Invariant { id: "ar.embedding", statement: "the SSM embedding reproduces SAR(p, q, s) processes" },
    Invariant { id: "ar.zero_noise_determinism", statement: "identical seeds give identical series" },
    Invariant { id: "cli.config_round_trip", statement: "parse, serialize, parse is the identity" },
    Invariant { id: "cli.forecast_shape", statement: "forecast CSVs have V value columns and H rows" },
];

pub struct Check {
    pub id: &'static str,
    pub run: fn() -> Result<Outcome>,
}

pub fn registry() -> Vec<Check> {
    vec![
        Check { id: "linalg.apply_matches_dense", run: apply_matches_dense },
        Check { id: "linalg.power_consistency", run: power_consistency },
        Check { id: "linalg.expm_doubling", run: expm_doubling },
        Check { id: "linalg.companion_nilpotent", run: companion_nilpotent },
        Check { id: "discretize.resolution", run: resolution },
        Check { id: "discretize.input_branches", run: input_branches },
        Check { id: "recurrence.linearity", run: linearity },
        Check { id: "recurrence.causality", run: causality },
        Check { id: "recurrence.decoupling", run: decoupling },
        Check { id: "scan.associativity", run: associativity },
        Check { id: "scan.split_invariance", run: split_invariance },
        Check { id: "scan.oracle_equivalence", run: oracle_equivalence },
        Check { id: "scan.single_pass_schedule", run: single_pass_schedule },
        Check { id: "scan.chunk_determinism", run: chunk_determinism },
        Check { id: "conv.matches_recurrence", run: conv_matches_recurrence },
        Check { id: "conv.translation_invariance", run: translation_invariance },
        Check { id: "selective.step_monotone", run: step_monotone },
        Check { id: "selective.zero_weight_degeneration", run: zero_weight_degeneration },
        Check { id: "model.residual_identity", run: residual_identity },
        Check { id: "model.closed_gate_linearity", run: closed_gate_linearity },
        Check { id: "model.gradient_sanity", run: gradient_sanity },
        Check { id: "variants.matrix_form", run: matrix_form },
        Check { id: "variants.time_matrix_causal", run: time_matrix_causal },
        Check { id: "ar.embedding", run: ar_embedding },
        Check { id: "ar.zero_noise_determinism", run: zero_noise_determinism },
        Check { id: "cli.config_round_trip", run: config_round_trip },
        Check { id: "cli.forecast_shape", run: forecast_shape },
    ]
}

pub struct Report {
    pub id: &'static str,
    pub outcome: Outcome,
}

/// Runs every registered check; errors become failures.
pub fn run_all() -> Vec<Report> {
    registry()
        .into_iter()
        .map(|c| Report { id: c.id, outcome: (c.run)().unwrap_or_else(|e| Outcome::Fail(format!("error: {e}"))) })
        .collect()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_structured(rng: &mut impl Rng, n: usize) -> [StructuredMatrix; 3] {
    [
        StructuredMatrix::Companion((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()),
        StructuredMatrix::Diagonal((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()),
        StructuredMatrix::Dense(random_mat(rng, n, n)),
    ]
}

fn apply_matches_dense() -> Result<Outcome> {
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for n in 1..=5 {
        let x = random_mat(&mut r, n, 3);
        for m in random_structured(&mut r, n) {
            worst = worst.max(m.apply(&x)?.max_abs_diff(&m.to_dense().matmul(&x)?));
        }
    }
    Ok(Outcome::bound("max diff", worst, 1e-12))
}

fn power_consistency() -> Result<Outcome> {
    let mut r = rng(2);
    let mut worst = 0.0f64;
    for n in 1..=4 {
        for m in random_structured(&mut r, n) {
            let (j, k) = (r.gen_range(0..=6u32), r.gen_range(0..=6u32));
            let lhs = matrix_power(&m, j + k).to_dense();
            let rhs = matrix_power(&m, j).to_dense().matmul(&matrix_power(&m, k).to_dense())?;
            worst = worst.max(lhs.max_abs_diff(&rhs) / lhs.max_abs().max(1.0));
        }
    }
    Ok(Outcome::bound("max relative diff", worst, 1e-12))
}

fn expm_doubling() -> Result<Outcome> {
    let mut r = rng(3);
    let mut worst = 0.0f64;
    for n in 1..=4 {
        let [_, diag, dense] = random_structured(&mut r, n);
        for m in [diag, dense] {
            let e = expm(&m)?.to_dense();
            worst = worst.max(e.matmul(&e)?.max_abs_diff(&expm(&m.scaled(2.0))?.to_dense()));
        }
    }
    Ok(Outcome::bound("max diff", worst, 1e-9))
}

fn companion_nilpotent() -> Result<Outcome> {
    for n in 1..=6 {
        let m = StructuredMatrix::Companion(vec![0.0; n]);
        if !matrix_power(&m, n as u32).to_dense().is_zero() {
            return Ok(Outcome::Fail(format!("power {n} of the {n}x{n} shift is nonzero")));
        }
        if n > 1 && matrix_power(&m, n as u32 - 1).to_dense().is_zero() {
            return Ok(Outcome::Fail(format!("power {} of the {n}x{n} shift is already zero", n - 1)));
        }
    }
    Ok(Outcome::Pass("exact zero at power N for N <= 6".into()))
}

/// Final `h1` of a single-variate run with initial state `h0`, or final `h2`
/// of a single-step run when `variate_axis`.
fn homogeneous_end(dp: &DiscreteSSM2D, h0: &[f64], len: usize, variate_axis: bool) -> Result<Vec<f64>> {
    let zero = vec![0.0; h0.len()];
    let (x, boundary) = if variate_axis {
        let b = Boundary { top_h1: vec![zero], top_h2: vec![h0.to_vec()], ..Boundary::default() };
        (SeriesTensor::zeros(len, 1, 1), b)
    } else {
        let b = Boundary { left_h1: vec![h0.to_vec()], left_h2: vec![zero], ..Boundary::default() };
        (SeriesTensor::zeros(1, len, 1), b)
    };
    let (_, hidden) = forward_recurrence_with_boundary(dp, &x, &boundary)?;
    Ok(if variate_axis { hidden.h2(len - 1, 0).to_vec() } else { hidden.h1(0, len - 1).to_vec() })
}

fn resolution() -> Result<Outcome> {
    let mut r = rng(4);
    let mut worst = 0.0f64;
    for n in 1..=4 {
        let base = random_continuous(&mut r, n);
        let h0: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let fine = discretize_all(&base)?;
        for k in 2..=4 {
            let coarse = discretize_all(&crate::discretize::ContinuousSSM2D {
                delta1: base.delta1 * k as f64,
                delta2: base.delta2 * k as f64,
                ..base.clone()
            })?;
            for variate_axis in [false, true] {
                let steps = 5;
                let a = homogeneous_end(&coarse, &h0, steps, variate_axis)?;
                let b = homogeneous_end(&fine, &h0, k * steps, variate_axis)?;
                worst = worst.max(crate::linalg::max_abs_diff(&a, &b));
            }
        }
    }
    Ok(Outcome::bound("max state diff", worst, 1e-10))
}

fn input_branches() -> Result<Outcome> {
    let mut r = rng(5);
    let mut worst = 0.0f64;
    for n in 1..=5 {
        for m in random_structured(&mut r, n) {
            let dense = m.to_dense();
            let b: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
            let delta = r.gen_range(0.05..2.0);
            let abar = expm(&m.scaled(delta))?.to_dense();
            let Some(inverse) = inverse_input(&dense, &abar, &b) else { continue };
            if crate::linalg::min_singular_value(&dense) < 1e-6 {
                continue;
            }
            let series = phi1_input(&m, &b, delta)?;
            let scale = series.iter().fold(1e-300f64, |a, v| a.max(v.abs()));
            worst = worst.max(crate::linalg::max_abs_diff(&series, &inverse) / scale);
        }
    }
    Ok(Outcome::bound("max relative diff", worst, 1e-9))
}

fn linearity() -> Result<Outcome> {
    let mut r = rng(6);
    let dp = random_discrete(&mut r, 3);
    let (a, b) = (random_series(&mut r, 4, 6, 2), random_series(&mut r, 4, 6, 2));
    let (ya, _) = forward_recurrence(&dp, &a)?;
    let (yb, _) = forward_recurrence(&dp, &b)?;
    let (yab, _) = forward_recurrence(&dp, &a.scale(2.5).add(&b.scale(-0.75))?)?;
    Ok(Outcome::bound("superposition diff", yab.max_abs_diff(&ya.scale(2.5).add(&yb.scale(-0.75))?), 1e-10))
}

fn causality() -> Result<Outcome> {
    let mut r = rng(7);
    let dp = random_discrete(&mut r, 2);
    let x = random_series(&mut r, 4, 5, 1);
    let (y, _) = forward_recurrence(&dp, &x)?;
    for (pv, pt) in [(2, 3), (0, 4), (3, 0)] {
        let mut poked = x.clone();
        poked.set(pv, pt, 0, x.get(pv, pt, 0) + 10.0);
        let (yp, _) = forward_recurrence(&dp, &poked)?;
        for v in 0..4 {
            for t in 0..5 {
                let upstream = v >= pv && t >= pt;
                if !upstream && y.get(v, t, 0) != yp.get(v, t, 0) {
                    return Ok(Outcome::Fail(format!("y[{v},{t}] moved after perturbing x[{pv},{pt}]")));
                }
            }
        }
    }
    Ok(Outcome::Pass("outputs outside the forward quadrant are bit-identical".into()))
}

fn decoupling() -> Result<Outcome> {
    let mut r = rng(8);
    let dp = random_decoupled_discrete(&mut r, 3);
    let x = random_series(&mut r, 5, 6, 2);
    let (y, _) = forward_recurrence(&dp, &x)?;
    // Time-only and variate-only models, each run over the full grid.
    let time_only = DiscreteSSM2D { c2: vec![0.0; 3], ..dp.clone() };
    let variate_only = DiscreteSSM2D { c1: vec![0.0; 3], ..dp.clone() };
    let mut one_d = SeriesTensor::zeros(5, 6, 2);
    for v in 0..5 {
        let series = SeriesTensor::from_vec(1, 6, 2, (0..6).flat_map(|t| x.cell(v, t).to_vec()).collect())?;
        let (yt, _) = forward_recurrence(&time_only, &series)?;
        for t in 0..6 {
            one_d.cell_mut(v, t).iter_mut().zip(yt.cell(0, t)).for_each(|(o, a)| *o += a);
        }
    }
    for t in 0..6 {
        let column = SeriesTensor::from_vec(5, 1, 2, (0..5).flat_map(|v| x.cell(v, t).to_vec()).collect())?;
        let (yv, _) = forward_recurrence(&variate_only, &column)?;
        for v in 0..5 {
            one_d.cell_mut(v, t).iter_mut().zip(yv.cell(v, 0)).for_each(|(o, a)| *o += a);
        }
    }
    Ok(Outcome::bound("diff to two 1D runs", y.max_abs_diff(&one_d), 1e-10))
}

fn worst_associativity(r: &mut ChaCha8Rng, decoupled: bool, trials: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in 0..trials {
        let (n, d) = ([1, 2, 4][i % 3], [1, 3][i % 2]);
        let [p, q, s] = [0, 1, 2].map(|_| random_scan_element(r, n, d, decoupled));
        let left = op_star(&op_star(&p, &q)?, &s)?;
        let right = op_star(&p, &op_star(&q, &s)?)?;
        worst = worst.max(left.max_rel_diff(&right));
    }
    Ok(worst)
}

/// Passes when the decoupled case holds; a coupled failure is a limitation.
fn coupled_limitation(what: &str, coupled: f64, decoupled: f64, tol: f64) -> Outcome {
    let detail = format!("{what}: coupled {coupled:.3e}, decoupled {decoupled:.3e} (tol {tol:.0e})");
    match (coupled < tol, decoupled < tol) {
        (true, true) => Outcome::Pass(detail),
        (false, true) => Outcome::Limitation(format!("{detail}; holds only with p2 = p4 = 0")),
        _ => Outcome::Fail(detail),
    }
}

fn associativity() -> Result<Outcome> {
    let mut r = rng(9);
    let coupled = worst_associativity(&mut r, false, 200)?;
    let decoupled = worst_associativity(&mut r, true, 200)?;
    Ok(coupled_limitation("max relative diff", coupled, decoupled, 1e-9))
}

fn worst_split(r: &mut ChaCha8Rng, decoupled: bool) -> Result<f64> {
    let mut worst = 0.0f64;
    let fold = |s: &[ScanElement]| -> Result<ScanElement> {
        Ok(scan_elements(s, ScanMode::Sequential)?.pop().expect("nonempty"))
    };
    for len in 2..10 {
        let elems: Vec<_> = (0..len).map(|_| random_scan_element(r, 2, 2, decoupled)).collect();
        let whole = fold(&elems)?;
        for cut in 1..len {
            let split = op_star(&fold(&elems[..cut])?, &fold(&elems[cut..])?)?;
            worst = worst.max(whole.max_rel_diff(&split));
        }
    }
    Ok(worst)
}

fn split_invariance() -> Result<Outcome> {
    let mut r = rng(10);
    let coupled = worst_split(&mut r, false)?;
    let decoupled = worst_split(&mut r, true)?;
    Ok(coupled_limitation("max relative diff", coupled, decoupled, 1e-9))
}

fn selective_cells(r: &mut ChaCha8Rng, n: usize, x: &SeriesTensor) -> Result<CellGrid> {
    let base = random_continuous(r, n);
    let proj = SelectiveProjections::init(r, n, x.channels());
    selective_grid(&proj, x, &Transitions::of(&base))
}

fn oracle_equivalence() -> Result<Outcome> {
    let mut r = rng(11);
    let mut worst = 0.0f64;
    let mut grids = 0;
    for nv in [1, 2, 4, 8] {
        for nt in [1, 2, 4, 8] {
            for n in 1..=4 {
                let d = 1 + (nv + nt + n) % 3;
                let x = random_series(&mut r, nv, nt, d);
                let shared = [random_discrete(&mut r, n), random_dense_discrete(&mut r, n)];
                let grid = selective_cells(&mut r, n, &x)?;
                for schedule in [Schedule::RowScan, Schedule::Wavefront] {
                    for dp in &shared {
                        let (oracle, _) = forward_recurrence(dp, &x)?;
                        let (y, _) = scan_forward(dp, &x, schedule, ScanMode::Tree { chunk: 3 })?;
                        worst = worst.max(y.max_abs_diff(&oracle));
                    }
                    let (oracle, _) = forward_recurrence(&grid, &x)?;
                    let (y, _) = scan_forward(&grid, &x, schedule, ScanMode::Tree { chunk: 3 })?;
                    worst = worst.max(y.max_abs_diff(&oracle));
                    grids += 3;
                }
            }
        }
    }
    Ok(Outcome::bound(&format!("{grids} runs, row scan and wavefront, max diff"), worst, 1e-9))
}

fn single_pass_schedule() -> Result<Outcome> {
    let mut r = rng(12);
    let mut diff = |nv: usize, nt: usize| -> Result<f64> {
        let dp = random_discrete(&mut r, 2);
        let x = random_series(&mut r, nv, nt, 1);
        let (oracle, _) = forward_recurrence(&dp, &x)?;
        let (y, _) = scan_forward(&dp, &x, Schedule::LinearWavefront, ScanMode::Sequential)?;
        Ok(y.max_abs_diff(&oracle))
    };
    let single = diff(1, 1)?;
    let coupled = diff(4, 4)?;
    let detail = format!("4x4 coupled grid diff {coupled:.3e}, single cell diff {single:.3e}");
    Ok(if single >= 1e-12 {
        Outcome::Fail(detail)
    } else if coupled < 1e-9 {
        Outcome::Pass(detail)
    } else {
        Outcome::Limitation(format!("{detail}; the row scan and wavefront schedules are exact"))
    })
}

fn chunk_determinism() -> Result<Outcome> {
    let mut r = rng(14);
    let dp = random_discrete(&mut r, 3);
    let x = random_series(&mut r, 3, 37, 2);
    let (reference, _) = scan_forward(&dp, &x, Schedule::RowScan, ScanMode::Sequential)?;
    let mut worst = 0.0f64;
    for chunk in [1, 2, 5, 16, 64] {
        let (y, _) = scan_forward(&dp, &x, Schedule::RowScan, ScanMode::Tree { chunk })?;
        worst = worst.max(y.max_abs_diff(&reference));
    }
    Ok(Outcome::bound("max diff across chunk sizes", worst, 1e-12))
}

fn conv_matches_recurrence() -> Result<Outcome> {
    let mut r = rng(15);
    let mut worst = 0.0f64;
    for (nv, nt) in [(1, 1), (3, 5), (8, 8)] {
        let dp = random_discrete(&mut r, 3);
        let x = random_series(&mut r, nv, nt, 2);
        let (oracle, _) = forward_recurrence(&dp, &x)?;
        let y = conv_apply(&impulse_kernels(&dp, nv, nt)?, &dp.c1, &dp.c2, &x)?;
        worst = worst.max(y.max_abs_diff(&oracle));
    }
    Ok(Outcome::bound("max diff", worst, 1e-10))
}

fn translation_invariance() -> Result<Outcome> {
    let mut r = rng(16);
    let dp = random_discrete(&mut r, 2);
    let (nv, nt) = (6, 7);
    let response = |v0: usize, t0: usize| -> Result<SeriesTensor> {
        let mut x = SeriesTensor::zeros(nv, nt, 1);
        x.set(v0, t0, 0, 1.0);
        Ok(forward_recurrence(&dp, &x)?.0)
    };
    let origin = response(0, 0)?;
    let mut worst = 0.0f64;
    for (v0, t0) in [(1, 2), (3, 0), (5, 6)] {
        let shifted = response(v0, t0)?;
        for v in v0..nv {
            for t in t0..nt {
                worst = worst.max((shifted.get(v, t, 0) - origin.get(v - v0, t - t0, 0)).abs());
            }
        }
    }
    Ok(Outcome::bound("max diff", worst, 1e-12))
}

fn step_monotone() -> Result<Outcome> {
    let grid: Vec<f64> = (-400..=400).map(|i| i as f64 * 0.1).collect();
    match grid.windows(2).find(|w| softplus(w[1]) <= softplus(w[0])) {
        Some(w) => Ok(Outcome::Fail(format!("softplus({}) <= softplus({})", w[1], w[0]))),
        None => Ok(Outcome::Pass("strictly increasing on [-40, 40]".into())),
    }
}

fn zero_weight_degeneration() -> Result<Outcome> {
    let mut r = rng(17);
    let (n, d) = (3, 2);
    let base = random_continuous(&mut r, n);
    let mut proj = SelectiveProjections::zeros(n, d);
    let bias = |r: &mut ChaCha8Rng, len: usize| (0..len).map(|_| r.gen_range(-1.0..1.0)).collect::<Vec<_>>();
    for a in [&mut proj.b1, &mut proj.b2, &mut proj.c1, &mut proj.c2] {
        a.bias = bias(&mut r, n);
    }
    proj.delta1.bias = vec![r.gen_range(-2.0..0.0)];
    proj.delta2.bias = vec![r.gen_range(-2.0..0.0)];
    let x = random_series(&mut r, 5, 6, d);
    let grid = selective_grid(&proj, &x, &Transitions::of(&base))?;
    let fixed = discretize_all(&crate::discretize::ContinuousSSM2D {
        b1: proj.b1.bias.clone(),
        b2: proj.b2.bias.clone(),
        c1: proj.c1.bias.clone(),
        c2: proj.c2.bias.clone(),
        delta1: softplus(proj.delta1.bias[0]),
        delta2: softplus(proj.delta2.bias[0]),
        ..base
    })?;
    let (y, _) = scan_forward(&grid, &x, Schedule::RowScan, ScanMode::default())?;
    let (oracle, _) = forward_recurrence(&fixed, &x)?;
    Ok(Outcome::bound("max diff", y.max_abs_diff(&oracle), 1e-10))
}

fn tiny_model(seed: u64, selective: bool) -> Result<ChimeraModel> {
    let cfg = ModelConfig { layers: 2, state_dim: 2, channels: 2, gate_dim: 3, selective, ..ModelConfig::default() };
    ChimeraModel::init(&cfg, &mut rng(seed))
}

fn residual_identity() -> Result<Outcome> {
    let mut m = tiny_model(18, false)?;
    for layer in &mut m.layers {
        layer.seasonal.redisc = Affine::zeros(2, 2);
    }
    let x = random_series(&mut rng(19), 3, 5, 2);
    // Every residual after the first layer is zero, so later trend blocks
    // see zero input.
    let mut inner = gate(&m.gate, &x)?;
    inner.add_assign(&trend_forward(&m.layers[0].trend, &x)?)?;
    let expect = inner.map_cells(2, |cell, out| out.copy_from_slice(&m.readout.apply(cell)));
    Ok(Outcome::bound("max diff", model_forward(&m, &x)?.max_abs_diff(&expect), 1e-10))
}

fn closed_gate_linearity() -> Result<Outcome> {
    let mut m = tiny_model(20, false)?;
    m.gate.w_in = Mat::zeros(m.gate.w_in.rows(), m.gate.w_in.cols());
    m.readout.bias = vec![0.0; 2];
    let mut r = rng(21);
    let (a, b) = (random_series(&mut r, 3, 4, 2), random_series(&mut r, 3, 4, 2));
    let lhs = m.forward(&a.scale(1.5).add(&b.scale(-2.0))?)?;
    let rhs = m.forward(&a)?.scale(1.5).add(&m.forward(&b)?.scale(-2.0))?;
    Ok(Outcome::bound("superposition diff", lhs.max_abs_diff(&rhs), 1e-9))
}

fn gradient_sanity() -> Result<Outcome> {
    let cfg = ModelConfig { layers: 1, state_dim: 2, channels: 1, gate_dim: 2, ..ModelConfig::default() };
    let m = ChimeraModel::init(&cfg, &mut rng(22))?;
    let mut r = rng(23);
    let x = random_series(&mut r, 2, 8, 1);
    let y = random_series(&mut r, 2, 8, 1);
    let report = richardson_check(&m, &|mm: &ChimeraModel| crate::model::mse_loss(mm, &x, &y), None)?;
    let detail = format!(
        "{}/{} coordinates agree ({} parameters)",
        report.agreeing,
        report.coordinates,
        m.num_params()
    );
    Ok(if report.passed() { Outcome::Pass(detail) } else { Outcome::Fail(detail) })
}

fn matrix_form() -> Result<Outcome> {
    let mut r = rng(24);
    let mut worst = 0.0f64;
    for (nv, nt) in [(1, 1), (3, 4), (8, 8)] {
        let (f, b) = (random_decoupled_discrete(&mut r, 2), random_decoupled_discrete(&mut r, 2));
        let x = random_series(&mut r, nv, nt, 2);
        let mats = materialize_matrices(&f, Some(&b), nv, nt)?;
        worst = worst.max(mats.apply(&x)?.max_abs_diff(&mamba2d_bidirectional(&f, &b, &x)?));
    }
    Ok(Outcome::bound("max diff", worst, 1e-9))
}

fn time_matrix_causal() -> Result<Outcome> {
    let mut r = rng(25);
    let dp = random_decoupled_discrete(&mut r, 3);
    let mats = materialize_matrices(&dp, None, 4, 8)?;
    for m in &mats.time {
        for i in 0..m.rows() {
            for j in i + 1..m.cols() {
                if m[(i, j)] != 0.0 {
                    return Ok(Outcome::Fail(format!("time entry ({i},{j}) = {}", m[(i, j)])));
                }
            }
        }
    }
    Ok(Outcome::Pass("strict upper triangles are exactly zero".into()))
}

fn ar_embedding() -> Result<Outcome> {
    let mut r = rng(26);
    let mut worst = 0.0f64;
    for p in 0..=3 {
        for q in 0..=3 {
            if p + q == 0 {
                continue;
            }
            for s in 1..=4 {
                let (phi, eta) = stable_sar_coeffs(&mut r, p, q);
                let emb = sar_to_ssm(&phi, &eta, s)?;
                let h = emb.history();
                let init: Vec<f64> = (0..h).map(|_| r.gen_range(-1.0..1.0)).collect();
                let x = simulate_sar(&phi, &eta, s, &init, 0.0, 50, 0)?;
                worst = worst.max(crate::linalg::max_abs_diff(&emb.generate(&init, 50)?, &x));
            }
        }
    }
    Ok(Outcome::bound("max abs diff over p, q <= 3, s <= 4", worst, 1e-8))
}

fn zero_noise_determinism() -> Result<Outcome> {
    let a = simulate_sar(&[0.4], &[0.3], 3, &[1.0, -1.0, 0.5], 0.2, 64, 5)?;
    let b = simulate_sar(&[0.4], &[0.3], 3, &[1.0, -1.0, 0.5], 0.2, 64, 5)?;
    let c = simulate_sar(&[0.4], &[0.3], 3, &[1.0, -1.0, 0.5], 0.0, 64, 99)?;
    let d = simulate_sar(&[0.4], &[0.3], 3, &[1.0, -1.0, 0.5], 0.0, 64, 5)?;
    Ok(if a == b && c == d {
        Outcome::Pass("bit-identical repeats".into())
    } else {
        Outcome::Fail("repeated simulation differs".into())
    })
}

fn config_round_trip() -> Result<Outcome> {
    let mut cfg = RunConfig::default();
    cfg.train.lr = 0.1 + 0.2;
    cfg.synthetic.phi = vec![1.0 / 3.0, -0.25];
    cfg.data.input = Some("series.csv".into());
    let once = RunConfig::from_json(&cfg.to_json())?;
    let twice = RunConfig::from_json(&once.to_json())?;
    Ok(if once == cfg && twice == cfg {
        Outcome::Pass("identity after two round trips".into())
    } else {
        Outcome::Fail("round trip changed the config".into())
    })
}

fn forecast_shape() -> Result<Outcome> {
    let cfg = ModelConfig { layers: 1, state_dim: 2, channels: 1, gate_dim: 2, ..ModelConfig::default() };
    let m = ChimeraModel::init(&cfg, &mut rng(27))?;
    let (nv, horizon) = (3, 5);
    let context = random_series(&mut rng(28), nv, 10, 1);
    let table = SeriesTable { times: (10..10 + horizon as i64).collect(), values: forecast(&m, &context, horizon)? };
    let mut buf = Vec::new();
    write_series(&mut buf, &table)?;
    let back = read_series(buf.as_slice())?;
    let text = String::from_utf8_lossy(&buf);
    let columns = text.lines().next().map_or(0, |h| h.split(',').count()) - 1;
    let detail = format!("{columns} value columns, {} rows", back.times.len());
    Ok(if columns == nv && back.times.len() == horizon && back.values.variates() == nv {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn every_catalogued_invariant_is_registered() {
        let catalogue: BTreeSet<_> = CATALOGUE.iter().map(|i| i.id).collect();
        let registered: BTreeSet<_> = registry().iter().map(|c| c.id).collect();
        assert_eq!(catalogue.len(), CATALOGUE.len(), "duplicate catalogue ids");
        assert_eq!(registered.len(), registry().len(), "duplicate registry ids");
        let missing: Vec<_> = catalogue.difference(&registered).collect();
        let extra: Vec<_> = registered.difference(&catalogue).collect();
        assert!(missing.is_empty(), "invariants without a check: {missing:?}");
        assert!(extra.is_empty(), "checks without a catalogue entry: {extra:?}");
    }

    #[test]
    fn every_module_has_invariants() {
        for module in ["linalg", "discretize", "recurrence", "scan", "conv", "selective", "model", "variants", "ar", "cli"]
        {
            assert!(CATALOGUE.iter().any(|i| i.id.starts_with(&format!("{module}."))), "{module}");
        }
    }

    #[test]
    fn suite_has_no_failures() {
        let reports = run_all();
        let failures: Vec<_> = reports
            .iter()
            .filter(|r| matches!(r.outcome, Outcome::Fail(_)))
            .map(|r| format!("{}: {}", r.id, r.outcome.detail()))
            .collect();
        assert!(failures.is_empty(), "{failures:#?}");
        let limitations: Vec<_> =
            reports.iter().filter(|r| matches!(r.outcome, Outcome::Limitation(_))).map(|r| r.id).collect();
        assert_eq!(limitations, ["scan.associativity", "scan.split_invariance", "scan.single_pass_schedule"]);
    }
}
