//! Seeded randomness. One master seed per run, split into independent
//! streams per component so that adding draws in one component never
//! shifts another component's sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream labels used across the crate.
pub mod stream {
    pub const GRAPH: u64 = 1;
    pub const ADVERSARY: u64 = 2;
    pub const QUERY: u64 = 3;
    pub const HISTORY: u64 = 4;
    pub const VERIFIER: u64 = 5;
    pub const CONNECTOR: u64 = 6;
}

pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed from a parent seed and a label (splitmix64 finalizer).
pub fn child_seed(seed: u64, label: u64) -> u64 {
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
