//! Deterministic labeled sub-seeding.
//!
//! Every simulation consumes randomness from streams derived from one
//! top-level 64-bit seed and a string label. Streams with distinct labels
//! are independent, and adding a new labeled stream to a scenario never
//! perturbs draws made from existing ones. Derivation hashes the seed and
//! label, so the mapping is stable across platforms and crate versions.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// The RNG used throughout the simulator.
pub type SimRng = ChaCha8Rng;

/// Derive an independent RNG stream from `seed` and a stream `label`.
pub fn stream(seed: u64, label: &str) -> SimRng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update([0u8]); // domain separator between seed and label
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Derive a fresh 64-bit sub-seed, for objects that carry their own
/// private randomness (e.g. a detector sample's latent damage magnitudes).
pub fn subseed(seed: u64, label: &str) -> u64 {
    use rand::RngCore;
    stream(seed, label).next_u64()
}
