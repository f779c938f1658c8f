//! Seed derivation and counter-based substreams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream addressed by
//! `(seed, stream)`, so work items can be generated in any order or on any
//! worker and still see the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Domain tags used when deriving child seeds.
pub mod tag {
    pub const EVENT: u64 = 0x45_5645_4e54;
    pub const SPLIT: u64 = 0x53_504c_4954;
    pub const DATA: u64 = 0x4441_5441;
    pub const INIT: u64 = 0x494e_4954;
    pub const SHUFFLE: u64 = 0x5348_5546;
    pub const TEST: u64 = 0x5445_5354;
    pub const SELECT: u64 = 0x5345_4c45;
    pub const REPEAT: u64 = 0x5245_5045;
}

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent child seed from `(seed, tag, index)`.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ tag) ^ index)
}

/// A generator seeded by `seed` positioned on stream `stream`.
pub fn substream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let a: u64 = substream(7, 3).random();
        let b: u64 = substream(7, 3).random();
        let c: u64 = substream(7, 4).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn derived_seeds_depend_on_every_component() {
        let base = derive_seed(1, tag::DATA, 0);
        assert_ne!(base, derive_seed(2, tag::DATA, 0));
        assert_ne!(base, derive_seed(1, tag::INIT, 0));
        assert_ne!(base, derive_seed(1, tag::DATA, 1));
    }
}
