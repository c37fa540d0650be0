//! Zero-order hold at two step sizes: one coarse step of `k * delta`
//! lands where `k` fine steps of `delta` do.

use chimera2d::discretize::{discretize_all, ContinuousSSM2D};
use chimera2d::draws::random_continuous;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> chimera2d::Result<()> {
    let base = random_continuous(&mut ChaCha8Rng::seed_from_u64(0), 3);
    let fine = discretize_all(&base)?;
    println!("delta1 = {:.3}, Abar1 =\n{:?}", base.delta1, fine.abar1);
    println!("Bbar1 = {:?}", fine.bbar1);

    let h0 = vec![1.0, -0.5, 0.25];
    for k in 2..=4 {
        let coarse = discretize_all(&ContinuousSSM2D { delta1: k as f64 * base.delta1, ..base.clone() })?;
        let once = coarse.abar1.apply_vec(&h0);
        let mut many = h0.clone();
        for _ in 0..k {
            many = fine.abar1.apply_vec(&many);
        }
        let diff = once.iter().zip(&many).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("k = {k}: max |coarse - fine^k| = {diff:.2e}");
    }
    Ok(())
}
