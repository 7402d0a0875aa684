//! Seeded random streams.
//!
//! Every stochastic routine takes one 64-bit seed. Independent work items
//! (sequences, Monte Carlo runs) draw from ChaCha8 stream `index` of that
//! seed, so output does not depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
