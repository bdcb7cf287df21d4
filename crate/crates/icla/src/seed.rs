//! Purpose-keyed deterministic RNG streams.
//!
//! Every random decision draws from a ChaCha8 generator seeded by mixing a
//! master seed with structured salts (task index, purpose string). Streams
//! are therefore independent of each other and of execution order, which is
//! what makes byte-identical reruns and mid-stream resume possible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over raw bytes; also used to fingerprint canonical configs.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Mixes `master` with a purpose tag and a numeric salt into a fresh seed.
pub fn mix(master: u64, purpose: &str, salt: u64) -> u64 {
    let mut s = splitmix64(master ^ fnv1a64(purpose.as_bytes()));
    s = splitmix64(s ^ salt.wrapping_mul(0x9e3779b97f4a7c15));
    s
}

/// Independent generator for `(master, purpose, salt)`.
pub fn rng_for(master: u64, purpose: &str, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(master, purpose, salt))
}
