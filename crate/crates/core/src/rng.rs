//! Seeded random number generation.
//!
//! Every stochastic operation in the crate takes an explicit seed and draws
//! from a `ChaCha8Rng` built here, so identical seeds give identical output
//! on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream for a named sub-task of a run.
pub fn derive(seed: u64, stream: u64) -> Rng {
    let mut rng = seeded(seed);
    rng.set_stream(stream);
    rng
}
