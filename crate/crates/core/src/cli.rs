//! The `chimera2d` command line.
//!
//! Exit codes: 0 on success, 2 for a bad invocation or configuration, 1 for
//! a runtime failure. Failures print one JSON line to stderr:
//! `{"error":"config"|"runtime","message":"..."}`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ar::simulate_sar;
use crate::bench::{doubling_ratio, run_bench, to_csv};
use crate::config::RunConfig;
use crate::csvio::{read_series_file, write_series, SeriesTable};
use crate::error::Error;
use crate::metrics::{compute_metrics, naive2_forecast, Metrics};
use crate::model::{fit, forecast, Checkpoint, ChimeraModel};
use crate::selftest::{run_all, Outcome};
use crate::series::SeriesTensor;

/// Threads used by `bench-scan` when none are requested.
pub const BENCH_THREADS: usize = 4;

#[derive(Parser, Debug)]
#[command(name = "chimera2d", version, about = "2D state space models for multivariate series")]
struct Cli {
    /// JSON run configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `train.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads (1 by default, 4 for bench-scan).
    #[arg(long, global = true, env = "CHIMERA2D_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write synthetic SAR plus trend series to series.csv.
    Generate,
    /// Train on a series CSV; writes checkpoint.json and loss.csv.
    Fit {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Closed-loop forecast of the next H steps; writes forecast.csv.
    Forecast {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Hold out the last H steps and score the forecast; writes metrics.json.
    Eval {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Time the sequential recurrence, row scan and wavefront; writes bench.csv.
    BenchScan,
    /// Run the invariant suite.
    Selftest,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    fn line(&self) -> String {
        let (kind, message) = match self {
            Failure::Config(m) => ("config", m),
            Failure::Runtime(m) => ("runtime", m),
        };
        serde_json::json!({ "error": kind, "message": message }).to_string()
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn cmd_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            let failure = Failure::Config(first.trim_start_matches("error: ").to_string());
            eprintln!("{}", failure.line());
            return failure.code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(failure) => {
            eprintln!("{}", failure.line());
            failure.code()
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path),
        None => RunConfig::default().validate().map(|()| RunConfig::default()),
    }
    .map_err(|e| Failure::Config(e.to_string()))?;
    let threads = match (cli.threads, &cli.command) {
        (Some(0), _) => return Err(Failure::Config("threads must be positive".into())),
        (Some(n), _) => n,
        (None, Command::BenchScan) => BENCH_THREADS,
        (None, _) => 1,
    };
    let seed = cli.seed.unwrap_or(cfg.train.seed);
    std::fs::create_dir_all(&cli.out).map_err(|e| io_failure(&cli.out, e))?;
    let ctx = Context { cfg, seed, out: cli.out, threads };
    match cli.command {
        Command::Generate => ctx.generate(),
        Command::Fit { data } => ctx.in_pool(|| ctx.fit(data)),
        Command::Forecast { data, checkpoint, horizon } => ctx.in_pool(|| ctx.forecast(data, checkpoint, horizon)),
        Command::Eval { data, checkpoint, horizon } => ctx.in_pool(|| ctx.eval(data, checkpoint, horizon)),
        Command::BenchScan => ctx.bench(),
        Command::Selftest => ctx.in_pool(|| ctx.selftest()),
    }
}

struct Context {
    cfg: RunConfig,
    seed: u64,
    out: PathBuf,
    threads: usize,
}

#[derive(Serialize)]
struct VariateMetrics {
    variate: usize,
    #[serde(flatten)]
    metrics: Metrics,
}

#[derive(Serialize)]
struct EvalReport {
    horizon: usize,
    season: usize,
    mean: Metrics,
    variates: Vec<VariateMetrics>,
}

fn mean_metrics(all: &[Metrics]) -> Metrics {
    let n = all.len() as f64;
    let avg = |f: fn(&Metrics) -> f64| all.iter().map(f).sum::<f64>() / n;
    let owa = all.iter().map(|m| m.owa).collect::<Option<Vec<f64>>>().map(|v| v.iter().sum::<f64>() / n);
    Metrics { mse: avg(|m| m.mse), mae: avg(|m| m.mae), smape: avg(|m| m.smape), mase: avg(|m| m.mase), owa }
}

impl Context {
    fn in_pool(&self, f: impl FnOnce() -> Result<(), Failure> + Send) -> Result<(), Failure> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))?;
        pool.install(f)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, contents: &[u8]) -> Result<PathBuf, Failure> {
        let path = self.path(name);
        std::fs::write(&path, contents).map_err(|e| io_failure(&path, e))?;
        Ok(path)
    }

    fn write_table(&self, name: &str, table: &SeriesTable) -> Result<PathBuf, Failure> {
        let mut buf = Vec::new();
        write_series(&mut buf, table)?;
        self.write(name, &buf)
    }

    fn data_path(&self, flag: Option<PathBuf>) -> Result<PathBuf, Failure> {
        flag.or_else(|| self.cfg.data.input.clone())
            .ok_or_else(|| Failure::Config("no series given: pass --data or set data.input".into()))
    }

    fn load_model(&self, flag: Option<PathBuf>) -> Result<ChimeraModel, Failure> {
        let path = flag
            .or_else(|| self.cfg.data.checkpoint.clone())
            .ok_or_else(|| Failure::Config("no checkpoint given: pass --checkpoint or set data.checkpoint".into()))?;
        let text = std::fs::read_to_string(&path).map_err(|e| io_failure(&path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
        let model = ChimeraModel::from_checkpoint(&ck)?;
        if model.channels() != 1 {
            return Err(Failure::Runtime(format!("checkpoint has {} channels; series CSVs need 1", model.channels())));
        }
        Ok(model)
    }

    fn generate(&self) -> Result<(), Failure> {
        let syn = &self.cfg.synthetic;
        let season = self.cfg.season;
        let history = syn.phi.len().max(syn.eta.len() * season);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut rows = Vec::with_capacity(syn.variates);
        for _ in 0..syn.variates {
            let init: Vec<f64> = (0..history).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let noise_seed: u64 = rng.gen();
            let mut x = simulate_sar(&syn.phi, &syn.eta, season, &init, syn.noise_std, syn.steps, noise_seed)?;
            x.iter_mut().enumerate().for_each(|(t, v)| *v += syn.trend * t as f64);
            rows.push(x);
        }
        let table = SeriesTable { times: (0..syn.steps as i64).collect(), values: SeriesTensor::from_rows(&rows)? };
        let path = self.write_table("series.csv", &table)?;
        println!("wrote {} ({} variates, {} steps)", path.display(), syn.variates, syn.steps);
        Ok(())
    }

    fn fit(&self, data: Option<PathBuf>) -> Result<(), Failure> {
        let table = read_series_file(&self.data_path(data)?)?;
        let values = &table.values;
        let steps = values.steps();
        if steps < 2 {
            return Err(Failure::Runtime("fit needs at least 2 time steps".into()));
        }
        let x = values.slice_steps(0, steps - 1)?;
        let y = values.slice_steps(1, steps)?;
        let model = ChimeraModel::init(&self.cfg.model, &mut ChaCha8Rng::seed_from_u64(self.seed))?;
        let result = fit(&model, &x, &y, self.cfg.train.steps, self.cfg.train.lr)?;
        let ck = serde_json::to_string_pretty(&result.model.to_checkpoint()).expect("checkpoint serializes");
        let ck_path = self.write("checkpoint.json", ck.as_bytes())?;
        let mut log = String::from("step,loss\n");
        for (step, loss) in result.losses.iter().enumerate() {
            log.push_str(&format!("{step},{loss}\n"));
        }
        self.write("loss.csv", log.as_bytes())?;
        let first = result.losses.first().copied().unwrap_or(f64::NAN);
        let last = result.losses.last().copied().unwrap_or(f64::NAN);
        println!(
            "fit {} parameters, {} steps: loss {first:.6e} -> {last:.6e}; wrote {}",
            model.num_params(),
            self.cfg.train.steps,
            ck_path.display()
        );
        Ok(())
    }

    fn forecast(&self, data: Option<PathBuf>, checkpoint: Option<PathBuf>, horizon: Option<usize>) -> Result<(), Failure> {
        let horizon = self.horizon(horizon)?;
        let table = read_series_file(&self.data_path(data)?)?;
        let model = self.load_model(checkpoint)?;
        let values = forecast(&model, &table.values, horizon)?;
        let last = *table.times.last().expect("nonempty table");
        let out = SeriesTable { times: (1..=horizon as i64).map(|h| last + h).collect(), values };
        let path = self.write_table("forecast.csv", &out)?;
        println!("wrote {} ({} variates, {horizon} steps)", path.display(), out.values.variates());
        Ok(())
    }

    fn horizon(&self, flag: Option<usize>) -> Result<usize, Failure> {
        match flag.unwrap_or(self.cfg.horizon) {
            0 => Err(Failure::Config("horizon must be positive".into())),
            h => Ok(h),
        }
    }

    fn eval(&self, data: Option<PathBuf>, checkpoint: Option<PathBuf>, horizon: Option<usize>) -> Result<(), Failure> {
        let horizon = self.horizon(horizon)?;
        let season = self.cfg.season;
        let table = read_series_file(&self.data_path(data)?)?;
        let model = self.load_model(checkpoint)?;
        let steps = table.values.steps();
        if steps <= horizon {
            return Err(Failure::Runtime(format!("{steps} steps leave nothing in-sample for horizon {horizon}")));
        }
        let context = table.values.slice_steps(0, steps - horizon)?;
        let pred = forecast(&model, &context, horizon)?;
        let mut variates = Vec::new();
        for v in 0..table.values.variates() {
            let insample = context.variate_series(v, 0);
            let truth = &table.values.variate_series(v, 0)[steps - horizon..];
            let base = naive2_forecast(&insample, season, horizon)?;
            let metrics = compute_metrics(&pred.variate_series(v, 0), truth, &insample, season, Some(&base))?;
            variates.push(VariateMetrics { variate: v, metrics });
        }
        let all: Vec<Metrics> = variates.iter().map(|v| v.metrics.clone()).collect();
        let report = EvalReport { horizon, season, mean: mean_metrics(&all), variates };
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        let path = self.write("metrics.json", json.as_bytes())?;
        let m = &report.mean;
        println!(
            "mse {:.6e} mae {:.6e} smape {:.4} mase {:.4} owa {}; wrote {}",
            m.mse,
            m.mae,
            m.smape,
            m.mase,
            m.owa.map_or("n/a".to_string(), |o| format!("{o:.4}")),
            path.display()
        );
        Ok(())
    }

    fn bench(&self) -> Result<(), Failure> {
        let rows = run_bench(&self.cfg.bench, self.threads, self.seed)?;
        let csv = to_csv(&rows)?;
        self.write("bench.csv", csv.as_bytes())?;
        print!("{csv}");
        for r in &rows {
            if let Some(ratio) = doubling_ratio(&rows, r.steps) {
                println!("scan time({})/time({}) = {ratio:.3}", 2 * r.steps, r.steps);
            }
        }
        if let Some(last) = rows.last() {
            println!("scan/sequential at T={}: {:.3}", last.steps, last.scan / last.sequential);
        }
        Ok(())
    }

    fn selftest(&self) -> Result<(), Failure> {
        let reports = run_all();
        let mut counts = [0usize; 3];
        for r in &reports {
            let slot = match r.outcome {
                Outcome::Pass(_) => 0,
                Outcome::Fail(_) => 1,
                Outcome::Limitation(_) => 2,
            };
            counts[slot] += 1;
            println!("{:<10} {:<38} {}", r.outcome.label(), r.id, r.outcome.detail());
        }
        println!("selftest: {} passed, {} failed, {} limitations", counts[0], counts[1], counts[2]);
        if counts[1] > 0 {
            return Err(Failure::Runtime(format!("{} invariant checks failed", counts[1])));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failure_lines_are_single_json_objects() {
        let f = Failure::Config("bad \"key\"\nsecond line".into());
        let line = f.line();
        assert!(!line.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["error"], "config");
        assert_eq!(f.code(), 2);
        assert_eq!(Failure::from(Error::Empty("x")).code(), 1);
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(cmd_dispatch(["chimera2d"]), 2);
        assert_eq!(cmd_dispatch(["chimera2d", "frobnicate"]), 2);
        assert_eq!(cmd_dispatch(["chimera2d", "--seed", "x", "generate"]), 2);
        assert_eq!(cmd_dispatch(["chimera2d", "--help"]), 0);
    }

    #[test]
    fn mean_of_metrics() {
        let a = Metrics { mse: 1.0, mae: 2.0, smape: 3.0, mase: 4.0, owa: Some(1.0) };
        let b = Metrics { mse: 3.0, mae: 4.0, smape: 5.0, mase: 6.0, owa: None };
        let m = mean_metrics(&[a.clone(), b]);
        assert_eq!((m.mse, m.mae, m.smape, m.mase, m.owa), (2.0, 3.0, 4.0, 5.0, None));
        assert_eq!(mean_metrics(&[a.clone(), a]).owa, Some(1.0));
    }
}
