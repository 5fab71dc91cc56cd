//! Seeded randomness.
//!
//! Every random draw in the crate comes from [`ChaCha8Rng`] seeded through
//! [`SeedableRng::seed_from_u64`]. Floating-point draws are derived from raw
//! `next_u64` output with the fixed conversions below rather than `rand`'s
//! distribution types, so a reimplementation only needs ChaCha8 and these
//! few lines to reproduce a corpus bit for bit.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for a sub-stream, e.g. one fold or one module of a run.
pub fn derive_seed(base: u64, offset: u64) -> u64 {
    base.wrapping_add(offset.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Uniform in [0, 1) with 53 random bits.
pub fn uniform01(rng: &mut Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform01(rng)
}

/// Standard normal via Box-Muller (cosine branch only).
pub fn normal(rng: &mut Rng) -> f64 {
    let u1 = 1.0 - uniform01(rng); // (0, 1]
    let u2 = uniform01(rng);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Uniform index in `0..n` (multiply-high reduction).
pub fn index(rng: &mut Rng, n: usize) -> usize {
    assert!(n > 0, "index range must be non-empty");
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

/// Fisher-Yates shuffle driven by [`index`].
pub fn shuffle<T>(rng: &mut Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = index(rng, i + 1);
        items.swap(i, j);
    }
}
