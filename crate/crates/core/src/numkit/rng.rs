//! Counter-based random streams.
//!
//! A stream is keyed by `(seed, stream_id)`; the `n`-th output is a pure
//! function of the key and `n`, so any task can rebuild its stream without
//! coordinating with other tasks. Gaussian draws use the Box–Muller
//! transform, consuming two uniforms per pair of normals.

use std::f64::consts::TAU;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic random stream addressed by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    key0: u64,
    key1: u64,
    counter: u64,
    spare: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let key0 = mix64(seed ^ mix64(stream_id.wrapping_add(0xD134_2543_DE82_EF95)));
        let key1 = mix64(key0 ^ stream_id.rotate_left(32) ^ 0xA076_1D64_78BD_642F);
        Self {
            seed,
            stream_id,
            key0,
            key1,
            counter: 0,
            spare: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream for `label`, independent of this stream's position.
    pub fn derive(&self, label: u64) -> Self {
        let child = mix64(self.stream_id ^ mix64(label.wrapping_add(GOLDEN)));
        Self::new(self.seed, child)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        let z = mix64(self.counter.wrapping_mul(GOLDEN) ^ self.key0);
        mix64(z ^ self.key1)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `0..n` (multiply-shift reduction).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0) has no valid output");
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the logarithm finite.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 / (1u64 << 53) as f64;
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// `n` i.i.d. standard normal samples drawn from `stream`.
pub fn randn(stream: &mut RngStream, n: usize) -> Vec<f64> {
    (0..n).map(|_| stream.normal()).collect()
}
