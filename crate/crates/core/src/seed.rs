//! Hierarchical seed derivation.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] whose seed is
//! derived from one root seed, a stage label and an index:
//!
//! ```text
//! derive(root, "search", 17)  -> seed of search trial 17
//! derive(root, "rhythm", 3)   -> seed of the rhythm roll of clip 3
//! ```
//!
//! The derivation is a SplitMix64 chain over the root, the label bytes and the
//! index, so re-running one stage (or one index) never perturbs any other.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `root`, a stage `label` and an `index`.
pub fn derive(root: u64, label: &str, index: u64) -> u64 {
    let mut h = splitmix(root);
    for chunk in label.as_bytes().chunks(8) {
        let mut buf = [0u8; 8];
        buf[..chunk.len()].copy_from_slice(chunk);
        h = splitmix(h ^ u64::from_le_bytes(buf));
    }
    h = splitmix(h ^ label.len() as u64);
    splitmix(h ^ index)
}

/// Seeded generator for `(root, label, index)`.
pub fn rng(root: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(root, label, index))
}
