//! Deterministic seed derivation.
//!
//! Every random component takes a seed derived from the run's master seed
//! plus a fixed salt, so that reruns with the same master seed are
//! bit-identical while components stay decorrelated.

/// SplitMix64 finalizer over `base ^ rotated salt`.
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.rotate_left(17) ^ 0x9e37_79b9_7f4a_7c15;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::derive_seed;

    #[test]
    fn deterministic_and_salt_sensitive() {
        assert_eq!(derive_seed(7, 1), derive_seed(7, 1));
        assert_ne!(derive_seed(7, 1), derive_seed(7, 2));
        assert_ne!(derive_seed(7, 1), derive_seed(8, 1));
    }
}
