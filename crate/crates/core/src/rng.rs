//! Seed derivation. Every stochastic path takes an explicit RNG built from a
//! master seed, so runs are reproducible from a single `u64`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StaRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> StaRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent child seed for (`stream`, `index`) under `master`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream.wrapping_mul(0xA24B_AED4_963E_E407)) ^ index)
}

pub fn child(master: u64, stream: u64, index: u64) -> StaRng {
    seeded(derive_seed(master, stream, index))
}
