//! Seeded random number generation.
//!
//! Every stochastic path in the crate draws from [`ChaCha8Rng`] seeded through
//! [`seeded`]. The generator algorithm is fixed so that splits, bootstraps and
//! synthetic data replicate across builds and platforms.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Generator for a top-level seed.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for the `index`-th independent sub-stream of `seed`.
///
/// Used wherever work is spread over workers: each unit of work owns a stream
/// keyed by its index, so results do not depend on scheduling.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_add(1));
    rng
}

/// Independent 64-bit seed for the `index`-th unit of work under `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    rand::RngCore::next_u64(&mut substream(seed, index))
}
