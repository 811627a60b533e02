//! Seeded weight initializers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream for sub-task `index` of `seed`.
pub fn derived(seed: u64, index: u64) -> SeededRng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index.wrapping_add(1));
    r
}

pub fn uniform(dims: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(dims, |_| rng.random_range(-bound..=bound))
}

/// He/Kaiming uniform for ReLU layers: `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`.
pub fn kaiming_uniform(dims: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    uniform(dims, (6.0 / fan_in.max(1) as f64).sqrt(), rng)
}
