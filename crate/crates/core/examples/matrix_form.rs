//! The decoupled bidirectional variant written out as explicit time and
//! variate mixing matrices.

use chimera2d::draws::{random_decoupled_discrete, random_series};
use chimera2d::variants::{mamba2d_bidirectional, materialize_matrices};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> chimera2d::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let f = random_decoupled_discrete(&mut rng, 2);
    let b = random_decoupled_discrete(&mut rng, 2);
    let (nv, nt) = (3, 5);
    let mats = materialize_matrices(&f, Some(&b), nv, nt)?;
    println!("time mixing for variate 0:\n{:?}", mats.time[0]);
    println!("variate mixing at t = 0:\n{:?}", mats.variate[0]);
    let x = random_series(&mut rng, nv, nt, 1);
    let diff = mats.apply(&x)?.max_abs_diff(&mamba2d_bidirectional(&f, &b, &x)?);
    println!("matrix form vs recurrence: {diff:.2e}");
    Ok(())
}
