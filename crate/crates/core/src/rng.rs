//! Seeded generator construction.
//!
//! All randomness in the crate comes from ChaCha8 streams derived from a
//! base seed and a stream index, so any unit of work (an image, a batch
//! element) can be regenerated independently of scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` under `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream keyed by two indices (e.g. step and batch slot).
pub fn stream2(seed: u64, a: u64, b: u64) -> Rng {
    let mixed = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    stream(mixed, b)
}
