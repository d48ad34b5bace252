//! Seeded random streams.
//!
//! Every randomized operation draws from a ChaCha8 generator keyed by a
//! master seed and a fixed stream id, so results depend only on
//! `(inputs, seed)` and never on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub mod stream {
    pub const SYNTHETIC: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const RESAMPLE: u64 = 3;
    pub const FAKE_SENSITIVE: u64 = 4;
    pub const INIT: u64 = 5;
    pub const BACKGROUND: u64 = 6;
    pub const SHAP: u64 = 7;
    pub const PERMUTATION: u64 = 8;
}

pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives an independent child seed, e.g. one per explained row.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
