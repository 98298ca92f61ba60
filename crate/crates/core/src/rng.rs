//! Named, reproducible random substreams.
//!
//! Every random draw in the crate comes from a [`Stream`] keyed by
//! `(base seed, role tag, index)`. Two streams with different keys are
//! independent ChaCha keystreams, so Monte-Carlo results do not depend on
//! the number of worker threads or on the order in which samples run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Role tags used by the crate's own estimators.
pub mod role {
    pub const FBM: &str = "fbm";
    pub const GAMMA: &str = "gamma";
    pub const BROWNIAN: &str = "brownian";
    pub const QUADRATURE_MC: &str = "quadrature-mc";
}

fn fnv1a(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive the substream for `(seed, role, index)`.
pub fn substream(seed: u64, role: &str, index: u64) -> Stream {
    substream2(seed, role, index, 0)
}

/// Two-level variant for nested estimators (outer sample, inner sample).
pub fn substream2(seed: u64, role: &str, outer: u64, inner: u64) -> Stream {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&fnv1a(role).to_le_bytes());
    key[16..24].copy_from_slice(&outer.to_le_bytes());
    key[24..].copy_from_slice(&inner.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
