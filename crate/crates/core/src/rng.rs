//! Seeded random substreams.
//!
//! Every randomized routine derives one independent ChaCha stream per
//! replicate from `(master seed, replicate index)`, so results never depend
//! on how replicates are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seed used when the caller does not pick one.
pub const DEFAULT_SEED: u64 = 20_150_717;

pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
