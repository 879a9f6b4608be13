//! Leakage-safe split construction.
//!
//! Domain-disjoint splits shuffle the supervising domains and reserve 20%
//! for test; the remaining domains are divided into train and validation.
//! Messages always follow their group, so no supervising domain (or
//! channel) ever appears on both sides of the train/test boundary.
//! Channel-disjoint splits draw K candidate partitions and keep the one
//! whose test positive rate is closest to the global rate.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

use crate::hashing::mix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    Domain,
    Channel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub group_kind: GroupKind,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitConfig {
    /// Fraction of groups reserved for test.
    pub test_frac: f64,
    /// Fraction of the remaining groups reserved for validation.
    pub val_frac: f64,
    /// Candidate partitions drawn for channel-disjoint splits.
    pub candidates: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_frac: 0.2,
            val_frac: 0.2,
            candidates: 50,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SplitError {
    #[error("too few domains: {0} (need at least 5)")]
    TooFewDomains(usize),
    #[error("too few channels: {0} (need at least 5)")]
    TooFewChannels(usize),
}

/// Unique group keys in deterministic (sorted) order, plus per-message
/// group indices.
fn group_index(groups: &[String]) -> (Vec<String>, BTreeMap<&str, Vec<usize>>) {
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        members.entry(g.as_str()).or_default().push(i);
    }
    let keys: Vec<String> = members.keys().map(|k| k.to_string()).collect();
    (keys, members)
}

fn take_count(frac: f64, n: usize) -> usize {
    ((frac * n as f64).round() as usize).clamp(1, n - 1)
}

fn collect_messages(
    members: &BTreeMap<&str, Vec<usize>>,
    keys: &[String],
) -> Vec<usize> {
    let mut out: Vec<usize> = keys
        .iter()
        .flat_map(|k| members[k.as_str()].iter().copied())
        .collect();
    out.sort_unstable();
    out
}

/// Split on supervising domains: shuffle domains by seed, 20% to test,
/// remaining divided into train and validation by `val_frac`.
pub fn domain_disjoint_split(
    domains: &[String],
    seed: u64,
    config: &SplitConfig,
) -> Result<Split, SplitError> {
    let (mut keys, members) = group_index(domains);
    if keys.len() < 5 {
        return Err(SplitError::TooFewDomains(keys.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ 0x646f_6d61_696e));
    keys.shuffle(&mut rng);

    let n_test = take_count(config.test_frac, keys.len());
    let test_keys = &keys[..n_test];
    let rest = &keys[n_test..];
    let n_val = take_count(config.val_frac, rest.len());
    let val_keys = &rest[..n_val];
    let train_keys = &rest[n_val..];

    Ok(Split {
        train: collect_messages(&members, train_keys),
        val: collect_messages(&members, val_keys),
        test: collect_messages(&members, test_keys),
        group_kind: GroupKind::Domain,
        seed,
    })
}

fn positive_rate(indices: &[usize], labels: &[u8]) -> f64 {
    if indices.is_empty() {
        return 0.0;
    }
    indices.iter().filter(|&&i| labels[i] == 1).count() as f64 / indices.len() as f64
}

/// Split on channels: K candidate partitions, keep the one whose test
/// positive rate is closest to the global rate (ties: first candidate).
pub fn channel_disjoint_split(
    channels: &[String],
    labels: &[u8],
    seed: u64,
    config: &SplitConfig,
) -> Result<Split, SplitError> {
    let (keys, members) = group_index(channels);
    if keys.len() < 5 {
        return Err(SplitError::TooFewChannels(keys.len()));
    }
    let global_rate =
        labels.iter().filter(|&&y| y == 1).count() as f64 / labels.len().max(1) as f64;

    let mut best: Option<(f64, usize)> = None;
    for k in 0..config.candidates.max(1) {
        let mut candidate_keys = keys.clone();
        let mut rng =
            ChaCha8Rng::seed_from_u64(mix64(seed ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)));
        candidate_keys.shuffle(&mut rng);
        let n_test = take_count(config.test_frac, candidate_keys.len());
        let test = collect_messages(&members, &candidate_keys[..n_test]);
        let gap = (positive_rate(&test, labels) - global_rate).abs();
        if best.is_none_or(|(best_gap, _)| gap < best_gap) {
            best = Some((gap, k));
        }
    }
    let (_, chosen) = best.expect("at least one candidate");

    // Re-derive the chosen candidate's order.
    let mut candidate_keys = keys;
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(
        seed ^ (chosen as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
    ));
    candidate_keys.shuffle(&mut rng);
    let n_test = take_count(config.test_frac, candidate_keys.len());
    let test_keys = &candidate_keys[..n_test];
    let rest = &candidate_keys[n_test..];
    let n_val = take_count(config.val_frac, rest.len());
    let val_keys = &rest[..n_val];
    let train_keys = &rest[n_val..];

    Ok(Split {
        train: collect_messages(&members, train_keys),
        val: collect_messages(&members, val_keys),
        test: collect_messages(&members, test_keys),
        group_kind: GroupKind::Channel,
        seed,
    })
}

/// True when no group key is shared between (train ∪ val) and test.
pub fn groups_disjoint(split: &Split, groups: &[String]) -> bool {
    let side: BTreeSet<&str> = split
        .train
        .iter()
        .chain(&split.val)
        .map(|&i| groups[i].as_str())
        .collect();
    split.test.iter().all(|&i| !side.contains(groups[i].as_str()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn domains(spec: &[(&str, usize)]) -> Vec<String> {
        spec.iter()
            .flat_map(|&(d, n)| std::iter::repeat_n(d.to_string(), n))
            .collect()
    }

    #[test]
    fn ten_domains_two_in_test_disjoint() {
        let spec: Vec<(String, usize)> = (0..10).map(|i| (format!("d{i}.com"), 5)).collect();
        let groups: Vec<String> = spec
            .iter()
            .flat_map(|(d, n)| std::iter::repeat_n(d.clone(), *n))
            .collect();
        let split = domain_disjoint_split(&groups, 7, &SplitConfig::default()).unwrap();
        let test_domains: BTreeSet<&str> =
            split.test.iter().map(|&i| groups[i].as_str()).collect();
        assert_eq!(test_domains.len(), 2);
        assert!(groups_disjoint(&split, &groups));
        // Every message is in exactly one side.
        let total = split.train.len() + split.val.len() + split.test.len();
        assert_eq!(total, groups.len());
    }

    #[test]
    fn too_few_domains_rejected() {
        let groups = domains(&[("a.com", 3), ("b.com", 3), ("c.com", 3), ("d.com", 3)]);
        assert_eq!(
            domain_disjoint_split(&groups, 1, &SplitConfig::default()).unwrap_err(),
            SplitError::TooFewDomains(4)
        );
    }

    #[test]
    fn same_seed_same_split() {
        let groups: Vec<String> = (0..40).map(|i| format!("d{}.com", i % 8)).collect();
        let a = domain_disjoint_split(&groups, 3, &SplitConfig::default()).unwrap();
        let b = domain_disjoint_split(&groups, 3, &SplitConfig::default()).unwrap();
        assert_eq!(a.test, b.test);
        assert_eq!(a.train, b.train);
        let c = domain_disjoint_split(&groups, 4, &SplitConfig::default()).unwrap();
        assert_ne!(a.test, c.test);
    }

    #[test]
    fn channel_split_prefers_balanced_test_rate() {
        // One all-positive channel; the rest balanced. The selected test
        // side should track the global rate rather than isolate the
        // all-positive channel.
        let mut channels = Vec::new();
        let mut labels = Vec::new();
        for i in 0..6 {
            for j in 0..20 {
                channels.push(format!("ch{i}"));
                let label = if i == 0 {
                    1
                } else {
                    u8::from(j % 2 == 0)
                };
                labels.push(label);
            }
        }
        let global = labels.iter().filter(|&&y| y == 1).count() as f64 / labels.len() as f64;
        let split =
            channel_disjoint_split(&channels, &labels, 11, &SplitConfig::default()).unwrap();
        let rate = positive_rate(&split.test, &labels);
        assert!(
            (rate - global).abs() <= 0.1,
            "test rate {rate} vs global {global}"
        );
        assert!(groups_disjoint(&split, &channels));
    }

    #[test]
    fn channel_split_deterministic_and_tie_stable() {
        let channels: Vec<String> = (0..50).map(|i| format!("ch{}", i % 10)).collect();
        let labels: Vec<u8> = (0..50).map(|i| u8::from(i % 2 == 0)).collect();
        let a = channel_disjoint_split(&channels, &labels, 5, &SplitConfig::default()).unwrap();
        let b = channel_disjoint_split(&channels, &labels, 5, &SplitConfig::default()).unwrap();
        assert_eq!(a.test, b.test);
        assert_eq!(a.val, b.val);
    }

    #[test]
    fn disjointness_holds_across_many_seeds() {
        let groups: Vec<String> = (0..200).map(|i| format!("d{}.com", i % 23)).collect();
        for seed in 0..10 {
            let split = domain_disjoint_split(&groups, seed, &SplitConfig::default()).unwrap();
            assert!(groups_disjoint(&split, &groups), "seed {seed} leaked");
        }
    }
}
