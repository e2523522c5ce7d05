//! Seeded random streams.
//!
//! Every randomized routine takes an explicit generator. Independent
//! purposes (batch draws, neighbour sampling, initialisation) get their own
//! stream so that enabling one phase never shifts the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Generator for `seed` on the given logical stream.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generator seeded from a tuple of keys, e.g. `(run_seed, step, node)`.
pub fn keyed(keys: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(mix(keys))
}

/// Order-sensitive 64-bit mix of several keys (splitmix64 finaliser).
pub fn mix(keys: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &k in keys {
        h ^= k.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = splitmix(h);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream ids used by the trainer.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const TRAIN_BATCH: u64 = 2;
    pub const META_BATCH: u64 = 3;
    pub const HINT_INIT: u64 = 4;
    pub const WEIGHT_INIT: u64 = 5;
    pub const EVAL: u64 = 6;
    pub const TASKS: u64 = 7;
    pub const SPLITS: u64 = 8;
}
