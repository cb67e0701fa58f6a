//! Named random sub-streams derived from a single root seed.
//!
//! Every consumer of randomness (data generation, weight init, batch shuffling,
//! input jitter) draws from its own stream, so changing how much one consumer
//! draws never shifts the numbers another one sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const DATA: &str = "data";
pub const NOISE: &str = "noise";
pub const INIT: &str = "init";
pub const SHUFFLE: &str = "shuffle";
pub const JITTER: &str = "jitter";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the sub-stream `name` of `root`.
pub fn derive_seed(root: u64, name: &str) -> u64 {
    // FNV-1a over the name, mixed with the root.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(root ^ splitmix64(h))
}

pub fn stream(root: u64, name: &str) -> Rng {
    Rng::seed_from_u64(derive_seed(root, name))
}

pub fn from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
