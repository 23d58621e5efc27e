//! Seeded randomness shared by environments and agents.

use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

/// Mixes a base seed with a stream id and an index into an independent seed
/// (splitmix64 finalizer over the combined words).
pub fn derive(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
