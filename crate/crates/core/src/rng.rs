//! Seeded random streams.
//!
//! All randomness is drawn from ChaCha8 (`rand_chacha::ChaCha8Rng`), seeded
//! with `seed_from_u64` and split into independent 64-bit streams with
//! `set_stream`. Gaussian variates use `rand_distr::StandardNormal`
//! (ziggurat). Both are platform independent, so results are reproducible
//! bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type StreamRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for one independent stream of `seed`, e.g. one sample row.
pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn fill_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out {
        *v = rng.sample(StandardNormal);
    }
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}
