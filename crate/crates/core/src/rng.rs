//! Reproducible randomness.
//!
//! All stochastic code in this crate draws from an explicitly passed
//! [`ChaCha8Rng`]; there is no hidden global generator. Independent streams
//! are derived from a master seed and a counter via [`stream`], so trials can
//! run in any order — or concurrently — and still consume exactly the same
//! random values.
//!
//! Samplers here consume a fixed, documented number of raw `u64` words per
//! call, which keeps stream offsets predictable across refactors:
//!
//! * [`uniform01`] — 1 word
//! * [`fill_standard_normal`] — `2 * ceil(len / 2)` words (Box–Muller pairs)
//! * [`fill_unit_sphere`] — same as `fill_standard_normal`
//! * [`uniform_index`] — 1 word
//! * [`random_sign`] — 1 word

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Derives the `index`-th independent stream of the generator keyed by
/// `master_seed`. ChaCha exposes 2^64 non-overlapping streams per key.
pub fn stream(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Uniform draw in `[0, 1)` with 53 bits of precision. Consumes one `u64`.
#[inline]
pub fn uniform01(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw in `[lo, hi)`. Consumes one `u64`.
#[inline]
pub fn uniform_in(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform01(rng)
}

/// Fills `out` with independent standard normal draws via Box–Muller.
///
/// Consumes `2 * ceil(out.len() / 2)` words: for odd lengths the second
/// member of the last pair is discarded but its input is still drawn.
pub fn fill_standard_normal(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let mut i = 0;
    while i < out.len() {
        // 1 - u keeps the argument of ln in (0, 1], so r is always finite.
        let u1 = 1.0 - uniform01(rng);
        let u2 = uniform01(rng);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        let (s, c) = theta.sin_cos();
        out[i] = r * c;
        if i + 1 < out.len() {
            out[i + 1] = r * s;
        }
        i += 2;
    }
}

/// Fills `out` with a uniform point on the unit sphere (normalized normals).
pub fn fill_unit_sphere(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    fill_standard_normal(rng, out);
    crate::linalg::normalize(out);
}

/// Uniform index in `0..m`. Consumes one `u64`; the modulo bias is at most
/// `m / 2^64`, far below anything the Monte Carlo tolerances can resolve,
/// and is exactly zero when `m` is a power of two.
#[inline]
pub fn uniform_index(rng: &mut ChaCha8Rng, m: usize) -> usize {
    debug_assert!(m > 0);
    (rng.next_u64() % m as u64) as usize
}

/// Fair ±1 draw. Consumes one `u64`.
#[inline]
pub fn random_sign(rng: &mut ChaCha8Rng) -> f64 {
    if rng.next_u64() >> 63 == 0 {
        1.0
    } else {
        -1.0
    }
}
