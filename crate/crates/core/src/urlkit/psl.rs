//! Public-suffix rule list: parsing and registrable-domain reduction.
//!
//! Rule file format: one rule per line, `//` comments, `*.` wildcard rules,
//! `!` exception rules. A subset sufficient for tests ships with the crate;
//! the full published list can be supplied via config.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::Path;

/// Embedded subset rule file.
pub const SUFFIX_RULES_SUBSET: &str = include_str!("../../data/public_suffix_subset.dat");

#[derive(Debug, Clone)]
pub struct SuffixRules {
    exact: HashSet<String>,
    /// A rule `*.ck` is stored as "ck": any single label under it is a suffix.
    wildcard: HashSet<String>,
    /// A rule `!www.ck` is stored as "www.ck": it cancels a wildcard match.
    exception: HashSet<String>,
}

/// Outcome of reducing a hostname to its registrable domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SuffixMatch {
    /// Public suffix matched; `domain` = suffix plus one label.
    Registrable { domain: String, suffix: String },
    /// Hostname *is* a public suffix; no registrable domain beneath it.
    SuffixOnly { suffix: String },
    /// No rule matched; caller falls back to the last two labels.
    Unknown,
}

impl SuffixRules {
    /// Parse rules from text (one rule per line, `//` comments).
    pub fn parse(text: &str) -> SuffixRules {
        let mut exact = HashSet::new();
        let mut wildcard = HashSet::new();
        let mut exception = HashSet::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("//") {
                continue;
            }
            let rule = line.split_whitespace().next().unwrap_or("").to_lowercase();
            if let Some(rest) = rule.strip_prefix('!') {
                exception.insert(rest.to_string());
            } else if let Some(rest) = rule.strip_prefix("*.") {
                wildcard.insert(rest.to_string());
            } else {
                exact.insert(rule);
            }
        }
        SuffixRules {
            exact,
            wildcard,
            exception,
        }
    }

    pub fn from_file(path: &Path) -> io::Result<SuffixRules> {
        Ok(SuffixRules::parse(&fs::read_to_string(path)?))
    }

    /// The subset shipped with the crate.
    pub fn builtin() -> SuffixRules {
        SuffixRules::parse(SUFFIX_RULES_SUBSET)
    }

    pub fn rule_count(&self) -> usize {
        self.exact.len() + self.wildcard.len() + self.exception.len()
    }

    /// True when `candidate` (a dot-joined label suffix) is a public suffix.
    pub fn is_public_suffix(&self, candidate: &str) -> bool {
        if self.exception.contains(candidate) {
            return false;
        }
        if self.exact.contains(candidate) {
            return true;
        }
        // `x.ck` matches the wildcard `*.ck`.
        if let Some((_, parent)) = candidate.split_once('.') {
            if self.wildcard.contains(parent) {
                return true;
            }
        }
        false
    }

    /// Longest public suffix of a (lowercase) hostname, if any.
    ///
    /// An exception rule prevails over any wildcard it cancels: the suffix
    /// is then the exception minus its leftmost label, which makes the
    /// exception itself registrable.
    pub fn public_suffix<'a>(&self, host: &'a str) -> Option<&'a str> {
        let mut start_indices: Vec<usize> = vec![0];
        for (i, b) in host.bytes().enumerate() {
            if b == b'.' {
                start_indices.push(i + 1);
            }
        }
        // Longest candidate first.
        for &start in &start_indices {
            let candidate = &host[start..];
            if self.exception.contains(candidate) {
                return candidate.split_once('.').map(|(_, rest)| rest);
            }
        }
        for &start in &start_indices {
            let candidate = &host[start..];
            if self.is_public_suffix(candidate) {
                return Some(candidate);
            }
        }
        None
    }

    /// Reduce a lowercase hostname to its registrable domain.
    pub fn registrable_domain(&self, host: &str) -> SuffixMatch {
        match self.public_suffix(host) {
            Some(suffix) if suffix.len() == host.len() => SuffixMatch::SuffixOnly {
                suffix: suffix.to_string(),
            },
            Some(suffix) => {
                let prefix = &host[..host.len() - suffix.len() - 1];
                let label = prefix.rsplit('.').next().unwrap_or(prefix);
                SuffixMatch::Registrable {
                    domain: format!("{label}.{suffix}"),
                    suffix: suffix.to_string(),
                }
            }
            None => SuffixMatch::Unknown,
        }
    }
}
