//! Named random sub-streams derived from a single experiment seed.
//!
//! Every stochastic component draws from `substream(seed, name, index)`, so
//! adding a chain or a policy never perturbs the generator stream, and chain
//! `i` produces the same draws whatever order chains are scheduled in.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

pub fn substream(seed: u64, name: &str, index: u64) -> StreamRng {
    ChaCha8Rng::from_seed(substream_key(seed, name, index))
}

pub fn substream_key(seed: u64, name: &str, index: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((name.len() as u64).to_le_bytes());
    h.update(name.as_bytes());
    h.update(index.to_le_bytes());
    h.finalize().into()
}

/// Fold an arbitrary key into a 64-bit seed.
pub fn derive_seed(seed: u64, name: &str, key: &[u8]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    h.update(key);
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}
