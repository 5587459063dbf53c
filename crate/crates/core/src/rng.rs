//! Seeded random-number plumbing.
//!
//! Every stochastic stage draws from a `ChaCha8Rng` whose seed is derived
//! from one root seed plus a component label and index, so sub-pipelines
//! stay independently reproducible no matter how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derive a child seed from a root seed, a component label, and an index.
///
/// FNV-1a over the label and index, mixed with the root and finished with a
/// splitmix64 avalanche. Stable across platforms and releases; the derivation
/// is part of the reproducibility contract.
pub fn derive_seed(root: u64, label: &str, index: u64) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

    let mut h = FNV_OFFSET ^ root;
    for byte in label.as_bytes() {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(FNV_PRIME);
    }
    for byte in index.to_le_bytes() {
        h ^= u64::from(byte);
        h = h.wrapping_mul(FNV_PRIME);
    }
    // splitmix64 finalizer
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Deterministic RNG for a derived seed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// RNG for a labeled sub-component of a pipeline run.
pub fn component_rng(root: u64, label: &str, index: u64) -> ChaCha8Rng {
    seeded_rng(derive_seed(root, label, index))
}
