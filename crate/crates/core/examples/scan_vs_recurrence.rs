//! Runs the sequential recurrence and each scan schedule on the same grid.

use chimera2d::draws::{random_dense_discrete, random_series};
use chimera2d::recurrence::forward_recurrence;
use chimera2d::scan::{scan_forward, ScanMode, Schedule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> chimera2d::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dp = random_dense_discrete(&mut rng, 3);
    let x = random_series(&mut rng, 5, 64, 2);
    let (oracle, _) = forward_recurrence(&dp, &x)?;
    for schedule in [Schedule::RowScan, Schedule::Wavefront, Schedule::LinearWavefront] {
        for mode in [ScanMode::Sequential, ScanMode::Tree { chunk: 8 }] {
            let (y, _) = scan_forward(&dp, &x, schedule, mode)?;
            println!("{schedule:?} {mode:?}: max diff {:.2e}", y.max_abs_diff(&oracle));
        }
    }
    // The single-pass schedule is only exact when the cross transitions vanish.
    Ok(())
}
