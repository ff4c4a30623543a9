//! Seeded random streams.
//!
//! Every random draw in the crate goes through [`SeededRng`], a ChaCha8
//! stream seeded from a 64-bit value. Independent streams are derived with
//! [`derive_seed`] so that no two consumers share state and every experiment
//! row can be replayed from its seed alone.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Identifier of the generator family, recorded in manifests.
pub const RNG_NAME: &str = "chacha8-boxmuller-v1";

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of sub-stream `(stream, index)` from a root seed.
pub fn derive_seed(root: u64, stream: u64, index: u64) -> u64 {
    mix64(mix64(mix64(root) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93)) ^ index)
}

pub struct SeededRng {
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    /// Uniform on [0, 1) with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on (0, 1].
    fn uniform_open_closed(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via Box–Muller. Magnitudes are bounded by
    /// `sqrt(-2 ln 2^-53) < 8.58` since the radial uniform never reaches 0.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform_open_closed();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }
}

/// Upper bound on |z| for any normal produced by [`SeededRng::normal`].
pub const NORMAL_BOUND: f64 = 8.58;
