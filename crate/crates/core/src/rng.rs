//! Independent, reproducible random streams derived from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags keeping streams for different jobs apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Catalog = 1,
    TrainScene = 2,
    EvalScene = 3,
    NoisePool = 4,
    Init = 5,
    Shuffle = 6,
    Crop = 7,
}

/// Stream `index` of `domain` under `seed`. Distinct `(domain, index)` pairs
/// give independent ChaCha streams.
pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (domain as u64).rotate_left(32));
    rng.set_stream(index);
    rng
}
