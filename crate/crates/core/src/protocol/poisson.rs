use rand::Rng;
use rand_distr::{Distribution, Poisson};

/// Draw from Poisson(`mean`).
pub fn sample<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    let dist = Poisson::new(mean).expect("Poisson mean must be positive and finite");
    dist.sample(rng) as u64
}
