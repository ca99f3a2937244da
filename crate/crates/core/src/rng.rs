//! Seeding of simulation runs.
//!
//! Every run draws from its own ChaCha8 stream. Run `r` of an experiment
//! with base seed `b` is seeded with `b XOR (SEED_MULTIPLIER · (r + 1))`
//! (wrapping 64-bit multiply), expanded by `SeedableRng::seed_from_u64`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Odd 64-bit multiplier of the child-seed rule (2⁶⁴ / φ).
pub const SEED_MULTIPLIER: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn derive_seed(base: u64, run: u64) -> u64 {
    base ^ SEED_MULTIPLIER.wrapping_mul(run.wrapping_add(1))
}

pub fn run_rng(base: u64, run: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(base, run))
}
