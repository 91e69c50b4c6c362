//! Seeded randomness.
//!
//! Every stochastic entry point takes an explicit generator so that runs are
//! reproducible from a single `u64` seed. ChaCha is used instead of `StdRng`
//! because its output stream is stable across platforms and releases, which
//! keeps serialized artifacts byte-identical for a given seed.

use rand::SeedableRng;

/// The concrete generator used by all entry points.
pub type RunRng = rand_chacha::ChaCha12Rng;

/// Builds the generator for a given seed.
pub fn rng_from_seed(seed: u64) -> RunRng {
    RunRng::seed_from_u64(seed)
}

/// Derives an independent stream seed from a base seed and a stream index.
///
/// Used to give each replication (and each internal sub-stream, e.g. policy
/// vs. environment noise) its own generator while keeping the whole run a
/// pure function of the base seed. SplitMix64 finalization scrambles the
/// combination so that neighboring indices share no structure.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(0x1234_5678_9abc_def0);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_seed_same_stream() {
        let a: Vec<u64> = (0..8).map(|_| ()).scan(rng_from_seed(7), |r, _| Some(r.random())).collect();
        let b: Vec<u64> = (0..8).map(|_| ()).scan(rng_from_seed(7), |r, _| Some(r.random())).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn derived_seeds_differ_across_streams() {
        let s: Vec<u64> = (0..100).map(|i| derive_seed(42, i)).collect();
        let mut dedup = s.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), s.len());
    }

    #[test]
    fn derivation_is_stable() {
        assert_eq!(derive_seed(0, 0), derive_seed(0, 0));
        assert_ne!(derive_seed(0, 1), derive_seed(1, 0));
    }
}
