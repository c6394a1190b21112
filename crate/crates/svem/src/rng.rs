//! Seed derivation and RNG construction.
//!
//! Every random stage of the pipeline (point sampling, bootstrap weights,
//! permutation shuffles, simulation noise, ...) draws from its own ChaCha
//! stream keyed by `(master seed, stage tag, index)`. Results are therefore
//! reproducible bit-for-bit regardless of how work is scheduled across
//! threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed from a master seed, a stage tag and an
/// item index.
pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    let mut state = master ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    let mixed = splitmix64(&mut state);
    let mut state2 = mixed ^ index.wrapping_mul(0xA076_1D64_78BD_642F);
    splitmix64(&mut state2)
}

/// Builds the deterministic generator used throughout the crate.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stage tags for [`derive_seed`]. Each randomized stage owns one tag so the
/// streams never collide.
pub(crate) mod tags {
    pub const POINTS: u64 = 1;
    pub const WEIGHTS: u64 = 2;
    pub const WMT_POINTS: u64 = 3;
    pub const WMT_OBSERVED: u64 = 4;
    pub const WMT_PERM_FIT: u64 = 5;
    pub const WMT_SHUFFLE: u64 = 6;
    pub const RESPONSE: u64 = 7;
    pub const SIM_NOISE: u64 = 8;
    pub const SIM_FIT: u64 = 9;
    pub const SURFACE: u64 = 10;
    pub const LNP: u64 = 11;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_seed_is_deterministic_and_spread() {
        assert_eq!(derive_seed(7, 1, 0), derive_seed(7, 1, 0));
        assert_ne!(derive_seed(7, 1, 0), derive_seed(7, 1, 1));
        assert_ne!(derive_seed(7, 1, 0), derive_seed(7, 2, 0));
        assert_ne!(derive_seed(7, 1, 0), derive_seed(8, 1, 0));
    }

    #[test]
    fn rng_streams_differ() {
        use rand::Rng;
        let mut a = seeded_rng(derive_seed(1, tags::WEIGHTS, 0));
        let mut b = seeded_rng(derive_seed(1, tags::WEIGHTS, 1));
        let xa: f64 = a.random();
        let xb: f64 = b.random();
        assert_ne!(xa, xb);
    }
}
