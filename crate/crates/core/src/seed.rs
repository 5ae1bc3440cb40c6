//! Counter-based seed derivation.
//!
//! Every example, channel draw or training run gets its own ChaCha stream whose
//! seed is `splitmix64(master ^ splitmix64(stream) + index)`. Any example can
//! therefore be regenerated in isolation and generation parallelizes freely.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep generators derived from the same master seed apart.
pub mod stream {
    pub const EXAMPLE: u64 = 0x4558_414d;
    pub const TEST_SPLIT: u64 = 0x5445_5354;
    pub const INIT: u64 = 0x494e_4954;
    pub const SHUFFLE: u64 = 0x5348_5546;
    pub const TRACE: u64 = 0x5452_4143;
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64((master ^ splitmix64(stream)).wrapping_add(index))
}

pub fn derive_rng(master: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, index))
}
