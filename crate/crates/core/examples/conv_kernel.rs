//! Materializes the impulse kernels of a fixed 2D SSM and applies them as
//! a causal 2D convolution.

use chimera2d::conv::{conv_apply, impulse_kernels};
use chimera2d::draws::{random_discrete, random_series};
use chimera2d::recurrence::forward_recurrence;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> chimera2d::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dp = random_discrete(&mut rng, 2);
    let (nv, nt) = (4, 6);
    let kernels = impulse_kernels(&dp, nv, nt)?;
    let k = kernels.combined(&dp.c1, &dp.c2)?;
    println!("combined kernel, rows are variate offsets:");
    for row in k.chunks(nt) {
        println!("  {}", row.iter().map(|v| format!("{v:8.4}")).collect::<Vec<_>>().join(" "));
    }
    let x = random_series(&mut rng, nv, nt, 1);
    let (oracle, _) = forward_recurrence(&dp, &x)?;
    let y = conv_apply(&kernels, &dp.c1, &dp.c2, &x)?;
    println!("convolution vs recurrence: {:.2e}", y.max_abs_diff(&oracle));
    Ok(())
}
