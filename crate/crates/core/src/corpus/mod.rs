//! Corpus loading, deterministic normalization, low-information filtering,
//! and near-duplicate clustering.
//!
//! Normalization recipe (fixed for audit reproducibility): strip control and
//! zero-width characters, NFKC, lowercase, NFKC again, collapse whitespace
//! runs to single spaces, trim. The double NFKC keeps the pipeline
//! idempotent: lowercasing and character stripping can expose sequences the
//! first pass did not see composed.

mod dedup;
mod fingerprint;

pub use dedup::{
    brute_force_clusters, cluster_near_duplicates, cosine_similarity, drop_forwarded_duplicates,
    pairwise_agreement, ClusterAssignment, DedupResult, DedupThresholds, MergeEdge, MergeReason,
    MessagePrints,
};
pub use fingerprint::{
    compute_fingerprints, estimate_jaccard, exact_jaccard, exact_prints, simhash_hamming,
    token_shingles, FingerprintError, FingerprintParams, Fingerprints,
};

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::urlkit::{mask_urls, SuffixRules};

/// One message as loaded from a dump, before any processing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawMessage {
    pub id: String,
    pub channel_id: String,
    /// UTC epoch seconds.
    pub timestamp: i64,
    pub text: String,
    /// Source id when the message is a forward.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fwd_id: Option<String>,
}

/// A message after normalization and low-information filtering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedMessage {
    pub id: String,
    pub channel_id: String,
    pub timestamp: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fwd_id: Option<String>,
    pub canonical_text: String,
}

/// A message with its dedup cluster assignment. Exactly one member per
/// cluster carries `kept = true`: the minimal `(timestamp, id)` member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanMessage {
    pub id: String,
    pub channel_id: String,
    pub timestamp: i64,
    pub canonical_text: String,
    pub cluster_id: String,
    pub kept: bool,
}

fn is_zero_width(c: char) -> bool {
    matches!(
        c,
        '\u{200B}'..='\u{200F}' | '\u{FEFF}' | '\u{2060}' | '\u{00AD}' | '\u{034F}'
    )
}

/// Deterministic text normalization (total function, idempotent).
pub fn normalize_text(text: &str) -> String {
    let stripped: String = text
        .chars()
        .filter(|&c| !is_zero_width(c) && (!c.is_control() || c.is_whitespace()))
        .collect();
    let normalized: String = stripped.nfkc().collect::<String>().to_lowercase();
    let renormalized: String = normalized.nfkc().collect();
    let mut out = String::with_capacity(renormalized.len());
    let mut pending_space = false;
    for c in renormalized.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
        } else {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(c);
        }
    }
    out
}

/// Whitespace-delimited tokens of a canonical string.
pub fn tokens(canonical: &str) -> Vec<&str> {
    canonical.split_whitespace().collect()
}

/// True when a message carries too little content to label: fewer than
/// `min_tokens` tokens, or nothing but URLs, emoji, and punctuation once
/// URLs are masked.
pub fn is_low_information(canonical: &str, min_tokens: usize, rules: &SuffixRules) -> bool {
    if tokens(canonical).len() < min_tokens {
        return true;
    }
    let masked = mask_urls(canonical, rules);
    let residue = masked.text.replace(crate::urlkit::URL_MASK_TOKEN, " ");
    !residue.chars().any(|c| c.is_alphanumeric())
}

/// Normalize a raw dump and drop low-information posts. Returns the kept
/// messages and the ids that were filtered out.
pub fn normalize_corpus(
    raw: &[RawMessage],
    min_tokens: usize,
    rules: &SuffixRules,
) -> (Vec<NormalizedMessage>, Vec<String>) {
    let mut kept = Vec::with_capacity(raw.len());
    let mut dropped = Vec::new();
    for msg in raw {
        let canonical = normalize_text(&msg.text);
        if canonical.is_empty() || is_low_information(&canonical, min_tokens, rules) {
            dropped.push(msg.id.clone());
            continue;
        }
        kept.push(NormalizedMessage {
            id: msg.id.clone(),
            channel_id: msg.channel_id.clone(),
            timestamp: msg.timestamp,
            fwd_id: msg.fwd_id.clone(),
            canonical_text: canonical,
        });
    }
    (kept, dropped)
}
