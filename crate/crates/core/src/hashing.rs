//! Deterministic hashing shared by fingerprints and provenance records.
//!
//! Fingerprint hashes must be stable across platforms and runs, so nothing
//! here goes through `std::hash` (whose `RandomState` is seeded per
//! process). Content digests for provenance use SHA-256.

use sha2::{Digest, Sha256};

/// 64-bit finalizer with full avalanche (splitmix64 mixing step).
#[inline]
pub fn mix64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^= x >> 31;
    x
}

/// Seeded 64-bit hash of a byte string (FNV-1a core, mixed output).
pub fn hash_bytes(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ mix64(seed);
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix64(h)
}

/// Seeded 64-bit hash of a string.
#[inline]
pub fn hash_str(s: &str, seed: u64) -> u64 {
    hash_bytes(s.as_bytes(), seed)
}

/// Order-independent digest of a set of 64-bit element hashes.
///
/// Elements are sorted before folding so any iteration order yields the
/// same digest.
pub fn hash_u64_set(elements: &[u64], seed: u64) -> u64 {
    let mut sorted: Vec<u64> = elements.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut h = mix64(seed ^ 0x9e37_79b9_7f4a_7c15);
    for e in sorted {
        h = mix64(h ^ e.wrapping_mul(0x2545_f491_4f6c_dd1d));
    }
    h
}

/// Hex-encoded SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_deterministic_and_seed_sensitive() {
        assert_eq!(hash_str("abc", 7), hash_str("abc", 7));
        assert_ne!(hash_str("abc", 7), hash_str("abc", 8));
        assert_ne!(hash_str("abc", 7), hash_str("abd", 7));
    }

    #[test]
    fn set_hash_ignores_order_and_duplicates() {
        let a = hash_u64_set(&[1, 2, 3], 0);
        let b = hash_u64_set(&[3, 1, 2, 2], 0);
        assert_eq!(a, b);
        assert_ne!(a, hash_u64_set(&[1, 2], 0));
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
