//! Seeded random streams.
//!
//! Every per-record stream is derived from `(seed, index)` alone, so a
//! transform yields the same bytes no matter how records are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

pub fn stream(seed: u64) -> Stream {
    Stream::seed_from_u64(seed)
}

pub fn record_stream(seed: u64, index: usize) -> Stream {
    stream(derive_seed(seed, index as u64))
}

/// Salted stream for dataset-level decisions (which records to pick,
/// final shuffles), kept apart from the per-record streams.
pub(crate) fn salted_stream(seed: u64, salt: &str) -> Stream {
    let salt = salt
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
    stream(derive_seed(seed, salt))
}
