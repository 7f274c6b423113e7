//! Deterministic seed derivation for parallel streams.
//!
//! Every replicate, cell, and fold derives its own generator from
//! `(master seed, indices...)`, so results never depend on worker count or
//! scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn splitmix_finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a master seed with a path of indices into a child seed.
pub(crate) fn mix_seed(base: u64, parts: &[u64]) -> u64 {
    let mut z = splitmix_finalize(base ^ 0x9E37_79B9_7F4A_7C15);
    for &p in parts {
        z = splitmix_finalize(z.wrapping_add(p).wrapping_add(0x9E37_79B9_7F4A_7C15));
    }
    z
}

/// Child generator at a derivation path.
pub(crate) fn rng_at(base: u64, parts: &[u64]) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(mix_seed(base, parts))
}
