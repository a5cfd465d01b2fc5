//! Seeded randomness.
//!
//! Every stochastic component uses [`SimRng`] (ChaCha8, seeded with a single
//! `u64`). Gradient noise is drawn from independent streams keyed by
//! `(seed, node, iteration, sample)`, so results do not depend on evaluation
//! order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for one gradient sample of one node at one iteration.
pub fn sample_stream(seed: u64, node: usize, iter: usize, sample: usize) -> SimRng {
    let mut h = splitmix64(seed);
    for part in [node as u64, iter as u64, sample as u64] {
        h = splitmix64(h ^ part);
    }
    seeded(h)
}

/// Derives a child seed, e.g. one per repetition of an experiment.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index)
}
