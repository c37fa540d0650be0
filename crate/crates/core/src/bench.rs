//! Wall-clock comparison of the sequential recurrence, the row scan and the
//! wavefront schedule.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discretize::discretize_all;
use crate::draws::{random_series, stable_continuous};
use crate::error::{Error, Result};
use crate::recurrence::forward_recurrence;
use crate::scan::{scan_forward, ScanMode, Schedule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub steps: Vec<usize>,
    pub variates: usize,
    pub state_dim: usize,
    pub channels: usize,
    pub repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { steps: vec![256, 512, 1024, 2048, 4096], variates: 8, state_dim: 8, channels: 4, repeats: 11 }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() || self.steps.contains(&0) {
            return Err(Error::InvalidParameter("bench steps must be nonempty and positive".into()));
        }
        if self.variates == 0 || self.state_dim == 0 || self.channels == 0 || self.repeats == 0 {
            return Err(Error::InvalidParameter("bench sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Median seconds per forward pass at one sequence length.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub steps: usize,
    pub variates: usize,
    pub threads: usize,
    pub sequential: f64,
    pub scan: f64,
    pub wavefront: f64,
}

fn median_seconds(repeats: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    f()?;
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        f()?;
        times.push(start.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    Ok(times[times.len() / 2])
}

/// Times every configured length on a pool of `threads` workers.
pub fn run_bench(cfg: &BenchConfig, threads: usize, seed: u64) -> Result<Vec<BenchRow>> {
    cfg.validate()?;
    let threads = threads.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dp = discretize_all(&stable_continuous(&mut rng, cfg.state_dim))?;
    cfg.steps
        .iter()
        .map(|&steps| {
            let x = random_series(&mut rng, cfg.variates, steps, cfg.channels);
            let mode = ScanMode::Tree { chunk: steps.div_ceil(threads) };
            let sequential = median_seconds(cfg.repeats, || forward_recurrence(&dp, &x).map(drop))?;
            let (scan, wavefront) = pool.install(|| -> Result<(f64, f64)> {
                Ok((
                    median_seconds(cfg.repeats, || scan_forward(&dp, &x, Schedule::RowScan, mode).map(drop))?,
                    median_seconds(cfg.repeats, || scan_forward(&dp, &x, Schedule::Wavefront, mode).map(drop))?,
                ))
            })?;
            Ok(BenchRow { steps, variates: cfg.variates, threads, sequential, scan, wavefront })
        })
        .collect()
}

/// `time(2T) / time(T)` of the scan path, when both lengths were timed.
pub fn doubling_ratio(rows: &[BenchRow], steps: usize) -> Option<f64> {
    let at = |t: usize| rows.iter().find(|r| r.steps == t).map(|r| r.scan);
    Some(at(2 * steps)? / at(steps)?)
}

pub fn to_csv(rows: &[BenchRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}
