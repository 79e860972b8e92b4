//! Counter-based random numbers.
//!
//! Every random quantity in the crate is a pure function of a seed and a
//! small tuple of integer coordinates, so results never depend on the order
//! in which they are queried or on how work is split across threads.

/// Identifier of the mixing function, written into run summaries so archived
/// results stay interpretable if the mixer ever changes.
pub const MIXER_ID: &str = "splitmix64-fmix-chain/zigzag-v1";

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_MUL: u64 = 0xD6E8_FEB8_6659_FD93;
const INDEX_MUL: u64 = 0xA076_1D64_78BD_642F;

/// SplitMix64 finalizer.
#[inline(always)]
pub fn fmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Maps signed integers injectively onto unsigned ones: 0, -1, 1, -2, 2, ...
#[inline(always)]
pub fn zigzag(x: i64) -> u64 {
    ((x << 1) ^ (x >> 63)) as u64
}

/// Hashes `(seed, a, b)` to 64 well-mixed bits.
#[inline(always)]
pub fn hash3(seed: u64, a: u64, b: u64) -> u64 {
    let mut h = fmix64(seed.wrapping_add(GOLDEN));
    h = fmix64(h ^ a.wrapping_mul(STREAM_MUL).wrapping_add(GOLDEN));
    fmix64(h ^ b.wrapping_mul(INDEX_MUL).wrapping_add(STREAM_MUL))
}

/// Top 53 bits of `h` as a uniform in `[0, 1)`.
#[inline(always)]
pub fn unit_f64(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Seed for the `index`-th member of a named stream under `master`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    hash3(master ^ 0x5EED_5EED_5EED_5EED, stream, index)
}

/// Small sequential generator on top of [`hash3`], for places that want a
/// stream rather than random access (e.g. random toppling queues).
#[derive(Debug, Clone)]
pub struct CounterRng {
    seed: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    pub fn next_u64(&mut self) -> u64 {
        let out = hash3(self.seed, 0x0C0_17E2, self.counter);
        self.counter += 1;
        out
    }

    /// Uniform integer in `0..n` (`n > 0`), by 128-bit multiply-shift.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zigzag_is_injective_near_zero() {
        let mut seen = std::collections::HashSet::new();
        for x in -1000i64..=1000 {
            assert!(seen.insert(zigzag(x)));
        }
        assert_eq!(zigzag(0), 0);
        assert_eq!(zigzag(-1), 1);
        assert_eq!(zigzag(1), 2);
        assert_eq!(zigzag(i64::MIN), u64::MAX);
    }

    #[test]
    fn unit_range() {
        assert_eq!(unit_f64(0), 0.0);
        assert!(unit_f64(u64::MAX) < 1.0);
    }

    #[test]
    fn hash_coordinates_are_not_symmetric() {
        assert_ne!(hash3(1, 2, 3), hash3(1, 3, 2));
        assert_ne!(hash3(1, 2, 3), hash3(2, 1, 3));
    }

    #[test]
    fn counter_rng_below_stays_in_range() {
        let mut rng = CounterRng::new(9);
        for n in 1..50 {
            for _ in 0..20 {
                assert!(rng.below(n) < n);
            }
        }
    }
}
