//! Seeded generator plumbing.
//!
//! Every random decision in the crate draws from a [`ChaCha8Rng`] so that runs
//! are reproducible across platforms. Independent consumers of one seed get
//! separate ChaCha streams.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Generator for `seed` on the given stream.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
