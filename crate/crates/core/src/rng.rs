//! Deterministic random streams.
//!
//! All randomness flows from a single 64-bit seed. Parallel workers get
//! independent ChaCha streams selected by a stream id, so results never
//! depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SeededRng = ChaCha8Rng;

/// Stream id reserved for the regression-neighbourhood sampler.
pub const UNIFORM_MASK_STREAM: u64 = u64::MAX;
/// Stream id reserved for random-removal baselines.
pub const RANDOM_BASELINE_STREAM: u64 = u64::MAX - 1;

/// A deterministic stream for `seed`.
pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream `stream` of the generator family keyed by `seed`.
pub fn split_stream(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a label into a seed. Stable across platforms and releases.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}
