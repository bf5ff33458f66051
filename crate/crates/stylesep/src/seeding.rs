//! Deterministic RNG streams.
//!
//! Every random draw in the system comes from a stream derived from the
//! run-level seed plus a label path, e.g. `("crop", mixture_id, epoch)`.
//! Streams are independent of iteration order, which is what makes training
//! resumable and batch prefetch safe.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a, 64-bit. Stable across platforms and Rust versions, unlike the
/// std hasher.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// RNG for `(seed, labels...)`. Same arguments always give the same stream.
pub fn stream_rng(seed: u64, labels: &[&str]) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut h = 0xcbf29ce484222325u64 ^ seed;
    for (i, label) in labels.iter().enumerate() {
        h = h.wrapping_mul(0x100000001b3) ^ fnv1a64(label.as_bytes()) ^ (i as u64);
        let off = 8 + (i % 3) * 8;
        let prev = u64::from_le_bytes(key[off..off + 8].try_into().unwrap());
        key[off..off + 8].copy_from_slice(&(prev ^ h).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
