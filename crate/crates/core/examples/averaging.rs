//! Compare the averaging weight vectors and draw snapshot indices from them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tunefree::averaging::{weights, AveragingScheme};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (m, mu, eta) = (10, 0.05, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for scheme in [
        AveragingScheme::LastSvrg,
        AveragingScheme::LastSarah,
        AveragingScheme::Uniform,
        AveragingScheme::WeightedSvrg,
        AveragingScheme::WeightedSarah,
    ] {
        let w = weights(scheme, m, mu, eta)?;
        let p: Vec<String> = w.as_slice().iter().map(|p| format!("{p:.3}")).collect();
        let draws: Vec<usize> = (0..8).map(|_| w.sample_snapshot_index(&mut rng)).collect();
        println!("{:15} E[M] = {:5.2}  p = [{}]  draws = {draws:?}", scheme.name(), w.mean_index(), p.join(" "));
    }
    Ok(())
}
