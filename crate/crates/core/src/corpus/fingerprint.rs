//! Message fingerprints: exact digests, MinHash signatures, SimHash.
//!
//! All digests are pure functions of `(canonical_text, params, seed)` and
//! stable across platforms — nothing here touches `std::hash`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tokens;
use crate::hashing::{hash_str, hash_u64_set, mix64};

/// Shingle width in tokens for MinHash and the exact shingle digest.
pub const SHINGLE_TOKENS: usize = 3;
/// Character n-gram width for SimHash features.
pub const SIMHASH_GRAM_CHARS: usize = 5;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FingerprintParams {
    /// Number of MinHash permutations.
    pub permutations: usize,
    pub seed: u64,
}

impl Default for FingerprintParams {
    fn default() -> Self {
        FingerprintParams {
            permutations: 256,
            seed: 0x7461_6772,
        }
    }
}

/// Full fingerprint set for one message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprints {
    /// Digest of the canonical text.
    pub canon_hash: u64,
    /// Digest of the sorted set of unique tokens.
    pub tokenset_hash: u64,
    /// Digest of the sorted set of 3-token shingles.
    pub shingle3_hash: u64,
    /// MinHash signature: one minimum per seeded permutation.
    pub minhash_sig: Vec<u64>,
    /// 64-bit SimHash over 5-gram character features.
    pub simhash: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FingerprintError {
    /// Fewer than three tokens: no 3-token shingles exist. Callers fall
    /// back to exact-hash-only dedup for the message.
    #[error("too short: {tokens} tokens, need at least {}", SHINGLE_TOKENS)]
    TooShort { tokens: usize },
    #[error("empty canonical text")]
    Empty,
    #[error("signature length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

/// Base hashes of the 3-token shingle set of a canonical string.
pub fn token_shingles(canonical: &str) -> Vec<u64> {
    let toks = tokens(canonical);
    if toks.len() < SHINGLE_TOKENS {
        return Vec::new();
    }
    let mut shingles: Vec<u64> = toks
        .windows(SHINGLE_TOKENS)
        .map(|w| hash_str(&w.join(" "), 0x5348_494e))
        .collect();
    shingles.sort_unstable();
    shingles.dedup();
    shingles
}

fn minhash_signature(shingles: &[u64], permutations: usize, seed: u64) -> Vec<u64> {
    let mut sig = vec![u64::MAX; permutations];
    for (i, slot) in sig.iter_mut().enumerate() {
        let perm_seed = mix64(seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        for &s in shingles {
            let h = mix64(s ^ perm_seed);
            if h < *slot {
                *slot = h;
            }
        }
    }
    sig
}

fn simhash_signature(canonical: &str, seed: u64) -> u64 {
    let chars: Vec<char> = canonical.chars().collect();
    let mut counts = [0i32; 64];
    let mut add_gram = |gram: &str| {
        let h = hash_str(gram, seed ^ 0x5349_4d48);
        for (b, count) in counts.iter_mut().enumerate() {
            if (h >> b) & 1 == 1 {
                *count += 1;
            } else {
                *count -= 1;
            }
        }
    };
    if chars.len() < SIMHASH_GRAM_CHARS {
        add_gram(canonical);
    } else {
        for window in chars.windows(SIMHASH_GRAM_CHARS) {
            let gram: String = window.iter().collect();
            add_gram(&gram);
        }
    }
    let mut sig = 0u64;
    for (b, &count) in counts.iter().enumerate() {
        if count > 0 {
            sig |= 1 << b;
        }
    }
    sig
}

/// Exact-only digests, used as the fallback for sub-shingle-length texts.
pub fn exact_prints(canonical: &str) -> (u64, u64) {
    let canon_hash = hash_str(canonical, 0x4341_4e4f);
    let mut toks: Vec<&str> = tokens(canonical);
    toks.sort_unstable();
    toks.dedup();
    let token_hashes: Vec<u64> = toks.iter().map(|t| hash_str(t, 0x544f_4b45)).collect();
    let tokenset_hash = hash_u64_set(&token_hashes, 0x544f_4b45);
    (canon_hash, tokenset_hash)
}

/// Compute the full fingerprint set for a canonical string.
pub fn compute_fingerprints(
    canonical: &str,
    params: &FingerprintParams,
) -> Result<Fingerprints, FingerprintError> {
    if canonical.is_empty() {
        return Err(FingerprintError::Empty);
    }
    let n_tokens = tokens(canonical).len();
    if n_tokens < SHINGLE_TOKENS {
        return Err(FingerprintError::TooShort { tokens: n_tokens });
    }
    let shingles = token_shingles(canonical);
    let (canon_hash, tokenset_hash) = exact_prints(canonical);
    Ok(Fingerprints {
        canon_hash,
        tokenset_hash,
        shingle3_hash: hash_u64_set(&shingles, 0x5347_3348),
        minhash_sig: minhash_signature(&shingles, params.permutations, params.seed),
        simhash: simhash_signature(canonical, params.seed),
    })
}

/// MinHash Jaccard estimate: fraction of matching signature components.
pub fn estimate_jaccard(sig_a: &[u64], sig_b: &[u64]) -> Result<f64, FingerprintError> {
    if sig_a.len() != sig_b.len() || sig_a.is_empty() {
        return Err(FingerprintError::LengthMismatch {
            left: sig_a.len(),
            right: sig_b.len(),
        });
    }
    let matches = sig_a.iter().zip(sig_b).filter(|(a, b)| a == b).count();
    Ok(matches as f64 / sig_a.len() as f64)
}

/// Hamming distance between two SimHash signatures.
#[inline]
pub fn simhash_hamming(a: u64, b: u64) -> u32 {
    (a ^ b).count_ones()
}

/// Exact Jaccard similarity of two shingle sets (both sorted, deduped).
pub fn exact_jaccard(a: &[u64], b: &[u64]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let mut i = 0;
    let mut j = 0;
    let mut inter = 0usize;
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> FingerprintParams {
        FingerprintParams::default()
    }

    #[test]
    fn identical_strings_identical_fingerprints() {
        let a = compute_fingerprints("the quick brown fox jumps", &params()).unwrap();
        let b = compute_fingerprints("the quick brown fox jumps", &params()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_short_is_rejected() {
        assert_eq!(
            compute_fingerprints("a b", &params()),
            Err(FingerprintError::TooShort { tokens: 2 })
        );
        assert_eq!(
            compute_fingerprints("", &params()),
            Err(FingerprintError::Empty)
        );
    }

    #[test]
    fn estimate_matches_exact_on_known_pair() {
        // "a b c d" vs "a b c e": shingles {abc, bcd} vs {abc, bce},
        // exact Jaccard = 1/3.
        let fa = compute_fingerprints("a b c d", &params()).unwrap();
        let fb = compute_fingerprints("a b c e", &params()).unwrap();
        let exact = exact_jaccard(
            &token_shingles("a b c d"),
            &token_shingles("a b c e"),
        );
        assert!((exact - 1.0 / 3.0).abs() < 1e-12);
        let est = estimate_jaccard(&fa.minhash_sig, &fb.minhash_sig).unwrap();
        assert!(
            (est - exact).abs() <= 0.1,
            "estimate {est} too far from exact {exact}"
        );
    }

    #[test]
    fn self_estimate_is_one_and_disjoint_is_near_zero() {
        let fa = compute_fingerprints("alpha beta gamma delta", &params()).unwrap();
        assert_eq!(estimate_jaccard(&fa.minhash_sig, &fa.minhash_sig).unwrap(), 1.0);
        let fb = compute_fingerprints("one two three four five", &params()).unwrap();
        let est = estimate_jaccard(&fa.minhash_sig, &fb.minhash_sig).unwrap();
        assert!(est < 0.05, "disjoint sets estimated at {est}");
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(matches!(
            estimate_jaccard(&[1, 2, 3], &[1, 2]),
            Err(FingerprintError::LengthMismatch { .. })
        ));
    }

    fn random_text(rng: &mut ChaCha8Rng, vocab: &[String], len: usize) -> String {
        (0..len)
            .map(|_| vocab.choose(rng).unwrap().as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    #[test]
    fn estimate_error_is_bounded_over_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let vocab: Vec<String> = (0..60).map(|i| format!("w{i}")).collect();
        let p = params();
        let mut within = 0usize;
        let n_pairs = 200;
        for _ in 0..n_pairs {
            let base = random_text(&mut rng, &vocab, 30);
            // Mutate a copy to produce a related text with varied overlap.
            let mut toks: Vec<String> =
                base.split_whitespace().map(String::from).collect();
            let edits = rng.gen_range(0..20);
            for _ in 0..edits {
                let pos = rng.gen_range(0..toks.len());
                toks[pos] = vocab.choose(&mut rng).unwrap().clone();
            }
            let other = toks.join(" ");
            let exact = exact_jaccard(&token_shingles(&base), &token_shingles(&other));
            let fa = compute_fingerprints(&base, &p).unwrap();
            let fb = compute_fingerprints(&other, &p).unwrap();
            let est = estimate_jaccard(&fa.minhash_sig, &fb.minhash_sig).unwrap();
            if (est - exact).abs() <= 0.08 {
                within += 1;
            }
        }
        assert!(
            within as f64 >= 0.95 * n_pairs as f64,
            "only {within}/{n_pairs} pairs within 0.08"
        );
    }

    #[test]
    fn minhash_is_unbiased_across_seeds() {
        let a = "the quick brown fox jumps over the lazy dog today";
        let b = "the quick brown fox jumps over a lazy cat today";
        let exact = exact_jaccard(&token_shingles(a), &token_shingles(b));
        let mut sum = 0.0;
        let n_seeds = 1000;
        for seed in 0..n_seeds {
            let p = FingerprintParams {
                permutations: 64,
                seed,
            };
            let fa = compute_fingerprints(a, &p).unwrap();
            let fb = compute_fingerprints(b, &p).unwrap();
            sum += estimate_jaccard(&fa.minhash_sig, &fb.minhash_sig).unwrap();
        }
        let mean = sum / n_seeds as f64;
        assert!(
            (mean - exact).abs() <= 0.02,
            "mean {mean} vs exact {exact}"
        );
    }

    #[test]
    fn simhash_close_for_small_edits_far_for_unrelated() {
        let p = params();
        let a = compute_fingerprints("breaking news the market moved sharply higher today", &p)
            .unwrap();
        let b = compute_fingerprints("breaking news the market moved sharply higher todays", &p)
            .unwrap();
        let c = compute_fingerprints("completely different subject matter entirely here", &p)
            .unwrap();
        assert_eq!(simhash_hamming(a.simhash, a.simhash), 0);
        assert!(
            simhash_hamming(a.simhash, b.simhash) < simhash_hamming(a.simhash, c.simhash),
            "near pair should be closer than unrelated pair"
        );
    }
}
