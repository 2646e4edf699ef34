//! Deterministic seed derivation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer applied to `a ^ rotl(b)`; used to derive
/// independent child seeds (per task, per round, per decision).
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.rotate_left(32) ^ 0x9E37_79B9_7F4A_7C15;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn children_differ() {
        let s: std::collections::HashSet<u64> = (0..1000).map(|i| mix_seed(7, i)).collect();
        assert_eq!(s.len(), 1000);
        assert_ne!(mix_seed(1, 2), mix_seed(2, 1));
    }
}
