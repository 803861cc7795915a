//! Deterministic random numbers.
//!
//! A counter-based generator (SplitMix64): the state is a plain u64 counter
//! advanced by a fixed odd increment, and each output is a bijective mix of
//! the counter. Identical seeds therefore reproduce identical streams on any
//! platform, and independent sub-streams are derived by mixing a stream id
//! into the seed. Gaussian draws use Box-Muller on two uniforms with no
//! cached spare, so the number of raw draws per sample is fixed.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    counter: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { counter: mix(seed.wrapping_add(GAMMA)) }
    }

    /// Independent sub-stream for `(seed, stream)`, e.g. one per rollout
    /// worker. Streams with different ids never share a counter sequence.
    pub fn substream(seed: u64, stream: u64) -> Self {
        Rng::new(mix(seed ^ stream.wrapping_mul(GAMMA).rotate_left(17)))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(GAMMA);
        mix(self.counter)
    }

    /// Uniform on [0, 1), 53-bit resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on [lo, hi).
    #[inline]
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform index in [0, n). n must be positive.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Multiply-shift keeps the map deterministic and avoids modulo bias
        // beyond 2^-64, which is irrelevant at the batch sizes used here.
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal via Box-Muller. Consumes exactly two uniforms.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        // 1 - uniform() lies in (0, 1], keeping the log argument positive.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.index(i + 1);
            xs.swap(i, j);
        }
    }
}
