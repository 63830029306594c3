//! Labeled seed streams derived from one master seed.
//!
//! Every stochastic stage asks for its seed by label, so changing the master
//! seed reseeds everything while two stages never share a stream by accident.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; good avalanche for cheap seed mixing.
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derives the seed for a named stage from the master seed.
pub fn stage_seed(master: u64, label: &str) -> u64 {
    // FNV-1a over the label, then mixed with the master seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix(master ^ mix(h))
}

/// Derives a per-item seed (e.g. one document, one training step) inside a stage.
pub fn item_seed(stage: u64, item: u64) -> u64 {
    mix(stage ^ mix(item.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

/// RNG for a named stage.
pub fn stage_rng(master: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stage_seed(master, label))
}

/// RNG for one item inside a stage.
pub fn item_rng(stage: u64, item: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(item_seed(stage, item))
}
