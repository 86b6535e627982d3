//! Seed derivation for independent, reproducible random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a base seed with a sequence of stream coordinates. Distinct coordinate
/// tuples give unrelated seeds, unlike a plain XOR which collides on swaps.
pub fn derive(base: u64, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(splitmix64(base), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

pub fn rng(base: u64, coords: &[u64]) -> Rng {
    Rng::seed_from_u64(derive(base, coords))
}

/// Stream labels keep stages from sharing random numbers.
pub mod stream {
    pub const PARTITION_USERS: u64 = 1;
    pub const PARTITION_ITEMS: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const WALK: u64 = 4;
    pub const SGNS: u64 = 5;
    pub const KMEANS: u64 = 6;
    pub const MODEL_INIT: u64 = 7;
    pub const MODEL_SHUFFLE: u64 = 8;
    pub const TASKS: u64 = 9;
    pub const MF_BPR: u64 = 10;
    pub const SYNTH: u64 = 11;
}
