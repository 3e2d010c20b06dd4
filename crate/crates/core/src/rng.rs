//! Seed derivation. Every stochastic component draws from a ChaCha8 stream
//! keyed by a 64-bit seed derived from a master seed plus string tags, so
//! independent jobs never share a stream and results do not depend on
//! execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Derives a child seed from `master` and an ordered list of tags.
pub fn derive_seed(master: u64, tags: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    for tag in tags {
        hasher.update((tag.len() as u64).to_le_bytes());
        hasher.update(tag.as_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Derives a child seed from `master` and an integer index.
pub fn derive_indexed(master: u64, tag: &str, index: u64) -> u64 {
    derive_seed(master, &[tag, &index.to_string()])
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(master: u64, tags: &[&str]) -> Rng {
    rng_from_seed(derive_seed(master, tags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn derivation_is_stable_and_tag_sensitive() {
        assert_eq!(derive_seed(7, &["a", "b"]), derive_seed(7, &["a", "b"]));
        assert_ne!(derive_seed(7, &["a", "b"]), derive_seed(7, &["ab"]));
        assert_ne!(derive_seed(7, &["a"]), derive_seed(8, &["a"]));
        let mut r1 = derived_rng(1, &["x"]);
        let mut r2 = derived_rng(1, &["x"]);
        assert_eq!(r1.random::<u64>(), r2.random::<u64>());
    }
}
