//! Seeded random streams.
//!
//! Every stochastic component draws from ChaCha8 (`rand_chacha::ChaCha8Rng`).
//! The key is expanded from a 64-bit seed with `SeedableRng::seed_from_u64`
//! and independent children are selected with the ChaCha stream id, so child
//! `k` of seed `s` is a pure function of `(s, k)`. Uniform reals come from
//! `rand`'s standard `f64` distribution (53 random mantissa bits in `[0, 1)`).
//! Both crates guarantee value stability across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[inline]
pub fn uniform(rng: &mut StreamRng) -> f64 {
    rng.random::<f64>()
}
