//! Seeded sampling streams.
//!
//! Every stream is a ChaCha8 keystream keyed by a 64-bit seed and selected by
//! a stream id, so sub-streams (one per limb, one per region) are independent
//! of evaluation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::float;

pub struct SampleStream {
    inner: ChaCha8Rng,
}

impl SampleStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }

    /// Uniform in `[0, 1)` with 53 random mantissa bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.random::<u64>() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        float::sqrt(-2.0 * float::ln(u1)) * float::cos(core::f64::consts::TAU * u2)
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }
}
