//! Seeded generators. Every chain, replication and generator call gets its own
//! ChaCha8 stream derived from a master seed.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type ChainRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> ChainRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives the `index`-th child seed of `master`: first word of stream
/// `index` of the generator seeded with `master`.
pub fn split_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}
