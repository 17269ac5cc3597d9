//! Deterministic seeding.
//!
//! Path `i` of an ensemble with master seed `m` is driven by a ChaCha8
//! stream seeded with
//!
//! ```text
//! seed_i = mix64(m + GOLDEN * (i + 1))      (wrapping u64 arithmetic)
//! ```
//!
//! where `mix64` is the SplitMix64 finalizer. `GOLDEN` is odd and `mix64` is
//! a bijection of `u64`, so seeds of one ensemble are pairwise distinct.
//! Nothing depends on thread scheduling: a path is a pure function of its
//! seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub type PathRng = ChaCha8Rng;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn path_seed(master_seed: u64, index: usize) -> u64 {
    mix64(master_seed.wrapping_add(GOLDEN.wrapping_mul(index as u64 + 1)))
}

pub fn path_seeds(master_seed: u64, n: usize) -> alloc::vec::Vec<u64> {
    (0..n).map(|i| path_seed(master_seed, i)).collect()
}

pub fn path_rng(seed: u64) -> PathRng {
    ChaCha8Rng::seed_from_u64(seed)
}
