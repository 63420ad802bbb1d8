//! Deterministic randomness.
//!
//! Every run owns a single root seed. Work items derive their own stream from
//! the root seed plus a tag path such as `(round, client, purpose)`, so the
//! draws a client sees never depend on the order in which other clients are
//! processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Tags naming what a derived stream is used for.
pub mod purpose {
    pub const INIT: u64 = 1;
    pub const DATA: u64 = 2;
    pub const PARTITION: u64 = 3;
    pub const TOPOLOGY: u64 = 4;
    pub const EVAL_BATCH: u64 = 5;
    pub const LOCAL_UPDATE: u64 = 6;
    pub const NOISE: u64 = 7;
    pub const SELECT: u64 = 8;
    pub const AVAILABILITY: u64 = 9;
    pub const SERVER: u64 = 10;
}

pub fn seeded_rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Derive an independent stream from `seed` and a tag path.
pub fn substream(seed: u64, tags: &[u64]) -> Rng {
    let mut state = splitmix64(seed ^ 0x005e_ed0f_d15c_0ffe);
    for &tag in tags {
        state = splitmix64(state ^ splitmix64(tag.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    Rng::seed_from_u64(state)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
