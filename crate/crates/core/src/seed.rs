//! Seed derivation. Every random stream in a run is a ChaCha8 generator keyed
//! by the run seed plus a stream tag, so streams never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, tag: u64, index: u64) -> u64 {
    mix(mix(seed ^ mix(tag)) ^ index)
}

pub fn rng(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, tag, index))
}

pub mod tags {
    pub const PARTITION: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const ENTITY_INIT: u64 = 3;
    pub const RELATION_INIT: u64 = 4;
    pub const CLIENT_TRAIN: u64 = 5;
    pub const SERVER: u64 = 6;
    pub const HIGH_TABLE: u64 = 7;
    pub const SYNTHETIC: u64 = 8;
}
