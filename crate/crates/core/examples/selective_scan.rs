//! Input-dependent parameters: every cell gets its own step sizes and
//! projections, and the scan still matches the recurrence.

use chimera2d::draws::{random_continuous, random_series};
use chimera2d::recurrence::forward_recurrence;
use chimera2d::scan::{scan_forward, ScanMode, Schedule};
use chimera2d::selective::{inverse_softplus, selective_grid, Affine, SelectiveProjections, Transitions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> chimera2d::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base = random_continuous(&mut rng, 2);
    let x = random_series(&mut rng, 3, 32, 2);
    let mut proj = SelectiveProjections::init(&mut rng, 2, x.channels());
    // Step sizes start input independent; give them some input weight.
    for delta in [&mut proj.delta1, &mut proj.delta2] {
        *delta = Affine::uniform(&mut rng, 1, x.channels());
        delta.bias[0] = inverse_softplus(0.1);
    }
    for (v, t) in [(0, 0), (1, 10), (2, 31)] {
        let (d1, d2) = proj.steps(x.cell(v, t));
        println!("cell ({v},{t}): delta1 {d1:.4}, delta2 {d2:.4}");
    }
    let grid = selective_grid(&proj, &x, &Transitions::of(&base))?;
    let (oracle, _) = forward_recurrence(&grid, &x)?;
    let (y, _) = scan_forward(&grid, &x, Schedule::RowScan, ScanMode::Tree { chunk: 4 })?;
    println!("selective scan vs recurrence: {:.2e}", y.max_abs_diff(&oracle));
    Ok(())
}
