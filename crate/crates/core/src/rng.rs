//! Seed derivation for reproducible simulation.
//!
//! Every random draw in the crate comes from a `Pcg64Mcg` generator (PCG
//! XSL-RR 128/64, multiplicative congruential variant) whose seed is derived
//! from `(master seed, purpose, index)` with the SplitMix64 finalizer. Records
//! and replications each own an independent stream, so output never depends
//! on how work is scheduled across threads.

use rand::SeedableRng;
use rand_pcg::Pcg64Mcg;

pub type SimRng = Pcg64Mcg;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Disjoint seed domains. Streams from different purposes never coincide
/// for the same master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Population = 1,
    Sampling = 2,
    Oracle = 3,
    Replication = 4,
    Bootstrap = 5,
}

/// SplitMix64 output function.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with an index: `splitmix64(seed ^ splitmix64(index))`.
///
/// This is the documented per-replication seed function used by the
/// experiment harness.
#[inline]
pub fn mix(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

/// Seed for stream `index` of `purpose` under `seed`.
#[inline]
pub fn derive_seed(seed: u64, purpose: Purpose, index: u64) -> u64 {
    mix(mix(seed, purpose as u64), index)
}

#[inline]
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, purpose, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn splitmix_reference_values() {
        // Reference sequence of SplitMix64 seeded with 0.
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix64(GOLDEN_GAMMA), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4)
            .map(|_| 0)
            .scan(stream(7, Purpose::Population, 3), |r, _| Some(r.next_u64()))
            .collect();
        let b: Vec<u64> = (0..4)
            .map(|_| 0)
            .scan(stream(7, Purpose::Population, 3), |r, _| Some(r.next_u64()))
            .collect();
        assert_eq!(a, b);
        let mut other = stream(7, Purpose::Sampling, 3);
        assert_ne!(a[0], other.next_u64());
        let mut next = stream(7, Purpose::Population, 4);
        assert_ne!(a[0], next.next_u64());
    }
}
