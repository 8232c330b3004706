//! Seed derivation.
//!
//! Every random draw in this crate comes from ChaCha8 (`rand_chacha` v0.3,
//! pinned in `Cargo.lock`). An experiment owns one master seed; each purpose
//! (training sample, testing sample, covariance generation, initial basket
//! prices) gets its own seed derived from the master seed and a fixed text
//! label, so e.g. enlarging the test sample cannot perturb the training
//! draws. Derivation is FNV-1a over the label, mixed into the master seed
//! with a SplitMix64 finalizer.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose label for training samples.
pub const STREAM_TRAIN: &str = "train";
/// Purpose label for testing samples.
pub const STREAM_TEST: &str = "test";
/// Purpose label for random covariance generation.
pub const STREAM_COVARIANCE: &str = "covariance";
/// Purpose label for initial basket prices.
pub const STREAM_BASKET_X0: &str = "basket_x0";

/// FNV-1a hash of the label bytes.
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in label.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the given purpose label under a master seed.
pub fn purpose_seed(master_seed: u64, label: &str) -> u64 {
    splitmix64(master_seed ^ label_hash(label))
}

/// Deterministic per-index seed for replicated runs: index 0 returns the
/// base seed itself, so a single replicate equals the plain run.
pub fn derive_seed(base_seed: u64, index: u64) -> u64 {
    if index == 0 {
        base_seed
    } else {
        splitmix64(base_seed ^ splitmix64(index))
    }
}

/// The crate-wide generator for a derived seed.
pub fn chacha(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
