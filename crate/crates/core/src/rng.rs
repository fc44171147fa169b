//! Seeded random streams.
//!
//! All randomness flows through [`ChaCha8Rng`]. Independent streams for
//! parallel work (one per filter, per class run, ...) are obtained by
//! hashing a base seed together with a path of indices, so the stream a
//! job receives never depends on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type DcdlRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> DcdlRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a path such as `[layer, filter]`.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p.wrapping_add(0x5851_f42d))))
}
