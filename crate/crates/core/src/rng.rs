//! SplitMix64, the deterministic generator behind weight, embedding and
//! random-pattern generation.
//!
//! The generator is counter based: after `k` steps from `seed` the state is
//! `seed + k * GAMMA`, so any position of a stream can be read directly with
//! [`SplitMix64::value_at`].

pub const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 step. Returns `(value, next_state)`.
#[inline]
pub fn splitmix64_next(state: u64) -> (u64, u64) {
    let next = state.wrapping_add(GAMMA);
    let mut z = next;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    (z ^ (z >> 31), next)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let (value, state) = splitmix64_next(self.state);
        self.state = state;
        value
    }

    /// Uniform in `[0, 1)` as `value / 2^64`.
    #[inline]
    pub fn next_unit(&mut self) -> f64 {
        to_unit(self.next_u64())
    }

    /// Uniform integer in `[0, bound)` by widening multiply. `bound` must be non-zero.
    #[inline]
    pub fn next_below(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        ((self.next_u64() as u128 * bound as u128) >> 64) as usize
    }

    /// Output number `index` (0-based) of the stream seeded with `seed`.
    #[inline]
    pub fn value_at(seed: u64, index: u64) -> u64 {
        splitmix64_next(seed.wrapping_add(GAMMA.wrapping_mul(index))).0
    }
}

#[inline]
pub fn to_unit(value: u64) -> f64 {
    value as f64 / 18_446_744_073_709_551_616.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_state_adds_gamma() {
        let (_, state) = splitmix64_next(0);
        assert_eq!(state, 0x9E37_79B9_7F4A_7C15);
    }

    #[test]
    fn reference_vectors_seed_1234567() {
        // Computed with an independent Python implementation; they agree
        // with the published SplitMix64 reference outputs.
        let mut rng = SplitMix64::new(1_234_567);
        assert_eq!(rng.next_u64(), 6_457_827_717_110_365_317);
        assert_eq!(rng.next_u64(), 3_203_168_211_198_807_973);
        assert_eq!(rng.next_u64(), 9_817_491_932_198_370_423);
    }

    #[test]
    fn pure_function() {
        assert_eq!(splitmix64_next(42), splitmix64_next(42));
    }

    #[test]
    fn random_access_matches_sequential() {
        let mut rng = SplitMix64::new(99);
        for i in 0..50 {
            assert_eq!(SplitMix64::value_at(99, i), rng.next_u64());
        }
    }

    #[test]
    fn next_below_stays_in_range() {
        let mut rng = SplitMix64::new(5);
        for bound in 1..200 {
            assert!(rng.next_below(bound) < bound);
        }
    }
}
