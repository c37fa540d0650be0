//! Times the sequential recurrence against the scan schedules.

use chimera2d::bench::{doubling_ratio, run_bench, to_csv, BenchConfig};

fn main() -> chimera2d::Result<()> {
    let threads: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let rows = run_bench(&BenchConfig::default(), threads, 0)?;
    print!("{}", to_csv(&rows)?);
    for t in [1024, 2048] {
        if let Some(r) = doubling_ratio(&rows, t) {
            println!("scan time({})/time({t}) = {r:.2}", 2 * t);
        }
    }
    if let Some(last) = rows.last() {
        println!("scan / sequential at T={}: {:.2}", last.steps, last.scan / last.sequential);
    }
    Ok(())
}
