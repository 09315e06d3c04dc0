//! Seeded, counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by the
//! user seed and a stream number, so results do not depend on thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
