//! Deterministic pseudo-random state used for initialization, dropout,
//! random crops and epoch sampling.
//!
//! The generator is SplitMix64: a counter advanced by the 64-bit golden
//! ratio constant, with the output produced by a fixed avalanche mix.
//! Identical seed plus identical call sequence yields a bit-identical
//! value stream on every platform.

/// Counter-based generator state.
///
/// Update rule per draw:
/// `counter += 0x9E3779B97F4A7C15`, then the output is
/// `mix(counter)` where `mix` xors and multiplies by the fixed constants
/// `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    counter: u64,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState { counter: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.counter;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` using the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)` via the widening-multiply reduction
    /// `(next_u64 * n) >> 64`. `n` must be nonzero.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Fisher-Yates shuffle, swapping from the back of the slice.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Derives an independent child stream; advances this state once.
    pub fn fork(&mut self) -> RngState {
        RngState::new(self.next_u64())
    }
}
