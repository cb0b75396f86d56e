//! Seeded pseudo-random numbers via splitmix64.
//!
//! Every stochastic choice in this crate (corpus synthesis, weight init,
//! mixture sampling, crop offsets) flows through this generator so that a
//! master seed fully determines all outputs, bit for bit. The algorithm is
//! the standard splitmix64 finalizer over a 64-bit counter; see README.md
//! for the exact recurrence so other implementations can reproduce the
//! corpora.

/// One splitmix64 step: advance `state` and return the mixed output.
#[inline]
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent stream seed from a master seed and a stream tag.
///
/// Mixes the tag through the finalizer before combining so that nearby tags
/// (0, 1, 2, ...) yield unrelated streams.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut s = tag;
    let mixed = splitmix64(&mut s);
    let mut t = master ^ mixed;
    splitmix64(&mut t)
}

/// Sequential splitmix64 generator.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    /// Fork a child generator tagged by `tag`, leaving `self` untouched.
    pub fn fork(&self, tag: u64) -> Rng {
        Rng::new(derive_seed(self.state, tag))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        splitmix64(&mut self.state)
    }

    /// Uniform in [0, 1) with 53 bits of mantissa.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n). `n` must be positive; slight modulo bias
    /// is irrelevant at the scales used here (n far below 2^32).
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}
