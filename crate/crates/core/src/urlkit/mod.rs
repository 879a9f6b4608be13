//! URL extraction, canonicalization, and masking.
//!
//! Extraction matches `http(s)` URLs plus bare domains whose suffix appears
//! in the public-suffix rules; canonicalization reduces hostnames to
//! registrable domains; masking replaces every extracted span with the
//! literal token `[URL]`. Masking is applied before feature extraction in
//! every text-consuming model, so the same grammar must drive both
//! extraction and masking — both live here and share one matcher.

mod psl;
mod resolve;

pub use psl::{SuffixMatch, SuffixRules, SUFFIX_RULES_SUBSET};
pub use resolve::{
    resolve_redirects, FixtureResolver, LiveResolver, RedirectResolver, Resolution,
    MAX_REDIRECT_HOPS,
};

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;
use thiserror::Error;

/// One extracted URL with its byte span in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UrlSpan {
    pub raw: String,
    pub start: usize,
    pub end: usize,
}

/// A URL taken through extraction, resolution, and canonicalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedUrl {
    pub raw: String,
    pub resolved: String,
    pub canonical_domain: String,
}

/// Text with every URL span replaced by the `[URL]` token.
///
/// Downstream feature builders take this type, not `&str`, so unmasked text
/// cannot reach a model input by construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedText {
    pub text: String,
    pub url_count: usize,
}

impl MaskedText {
    /// Wrap text that genuinely contains no URLs (synthetic inputs, tests).
    pub fn assume_masked(text: impl Into<String>) -> MaskedText {
        MaskedText {
            text: text.into(),
            url_count: 0,
        }
    }
}

pub const URL_MASK_TOKEN: &str = "[URL]";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum UrlError {
    #[error("no hostname in {0:?}")]
    NoHostname(String),
}

/// Non-fatal canonicalization warnings, surfaced as audit records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum CanonWarning {
    /// No public-suffix rule matched; fell back to the last two labels.
    UnknownSuffix { host: String, fallback: String },
    /// Hostname is itself a public suffix; returned as-is.
    SuffixOnly { host: String },
    /// Literal IPv4 hostname; returned as-is.
    IpAddress { host: String },
}

/// Canonical domain plus any warning raised producing it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonOutcome {
    pub domain: String,
    pub warning: Option<CanonWarning>,
}

fn scheme_url_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"(?i)https?://[^\s<>"']+"#).expect("static regex"))
}

fn bare_domain_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"(?i)(?:[a-z0-9](?:[a-z0-9-]{0,61}[a-z0-9])?\.)+[a-z]{2,63}(?:/[^\s<>"']*)?"#)
            .expect("static regex")
    })
}

/// Trailing punctuation never counted as part of a URL.
fn trim_trailing(raw: &str) -> &str {
    raw.trim_end_matches(['.', ',', ';', ':', '!', '?', ')', ']', '}', '"', '\''])
}

/// Extract the hostname from a URL-ish string.
fn hostname_of(url: &str) -> Result<String, UrlError> {
    let rest = url.split_once("://").map(|(_, r)| r).unwrap_or(url);
    let authority = rest.split(['/', '?', '#']).next().unwrap_or("");
    // Drop userinfo and port.
    let host = authority.rsplit('@').next().unwrap_or(authority);
    let host = host.split(':').next().unwrap_or(host);
    let host = host.trim().trim_end_matches('.');
    if host.is_empty() || !host.contains('.') && !host.eq_ignore_ascii_case("localhost") {
        return Err(UrlError::NoHostname(url.to_string()));
    }
    Ok(host.to_lowercase())
}

fn is_ipv4(host: &str) -> bool {
    let mut parts = 0;
    for piece in host.split('.') {
        if piece.is_empty() || piece.len() > 3 || !piece.bytes().all(|b| b.is_ascii_digit()) {
            return false;
        }
        parts += 1;
    }
    parts == 4
}

/// Reduce a URL to its canonical registered domain: lowercase, one leading
/// `www.` label removed, then public-suffix reduction. Unknown suffixes fall
/// back to the last two labels with a warning.
pub fn canonical_domain(url: &str, rules: &SuffixRules) -> Result<CanonOutcome, UrlError> {
    let host = hostname_of(url)?;
    if is_ipv4(&host) {
        return Ok(CanonOutcome {
            domain: host.clone(),
            warning: Some(CanonWarning::IpAddress { host }),
        });
    }
    let host = host.strip_prefix("www.").filter(|h| h.contains('.')).unwrap_or(&host);
    match rules.registrable_domain(host) {
        SuffixMatch::Registrable { domain, .. } => Ok(CanonOutcome {
            domain,
            warning: None,
        }),
        SuffixMatch::SuffixOnly { suffix } => Ok(CanonOutcome {
            domain: suffix.clone(),
            warning: Some(CanonWarning::SuffixOnly { host: suffix }),
        }),
        SuffixMatch::Unknown => {
            let labels: Vec<&str> = host.split('.').collect();
            let fallback = if labels.len() >= 2 {
                labels[labels.len() - 2..].join(".")
            } else {
                host.to_string()
            };
            Ok(CanonOutcome {
                domain: fallback.clone(),
                warning: Some(CanonWarning::UnknownSuffix {
                    host: host.to_string(),
                    fallback,
                }),
            })
        }
    }
}

/// Extract URL spans: scheme URLs first, then bare domains with a known
/// public suffix. Spans are non-overlapping, left to right.
pub fn extract_urls(text: &str, rules: &SuffixRules) -> Vec<UrlSpan> {
    let mut spans: Vec<UrlSpan> = Vec::new();

    for m in scheme_url_regex().find_iter(text) {
        let trimmed = trim_trailing(m.as_str());
        if trimmed.len() <= "https://".len() {
            continue;
        }
        spans.push(UrlSpan {
            raw: trimmed.to_string(),
            start: m.start(),
            end: m.start() + trimmed.len(),
        });
    }

    for m in bare_domain_regex().find_iter(text) {
        let start = m.start();
        // Skip matches inside an already-claimed scheme URL.
        if spans.iter().any(|s| start >= s.start && start < s.end) {
            continue;
        }
        // Word-ish left boundary; '@' excludes e-mail local parts.
        if start > 0 {
            let before = text[..start].chars().next_back().unwrap();
            if before == '@' || before == '.' || before == '-' || before.is_alphanumeric() {
                continue;
            }
        }
        let trimmed = trim_trailing(m.as_str());
        if trimmed.is_empty() {
            continue;
        }
        let host = trimmed.split(['/', '?', '#']).next().unwrap_or("");
        // Bare domains require a known suffix to count as URLs.
        match rules.registrable_domain(&host.to_lowercase()) {
            SuffixMatch::Registrable { .. } => {}
            _ => continue,
        }
        spans.push(UrlSpan {
            raw: trimmed.to_string(),
            start,
            end: start + trimmed.len(),
        });
    }

    spans.sort_by_key(|s| s.start);
    // Drop any overlap (later span loses), keeping left-to-right order.
    let mut result: Vec<UrlSpan> = Vec::with_capacity(spans.len());
    for span in spans {
        if result.last().is_none_or(|prev| span.start >= prev.end) {
            result.push(span);
        }
    }
    result
}

/// Replace every extracted span with [`URL_MASK_TOKEN`]. Non-URL characters
/// are preserved byte for byte.
pub fn mask_urls(text: &str, rules: &SuffixRules) -> MaskedText {
    let spans = extract_urls(text, rules);
    if spans.is_empty() {
        return MaskedText {
            text: text.to_string(),
            url_count: 0,
        };
    }
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for span in &spans {
        out.push_str(&text[cursor..span.start]);
        out.push_str(URL_MASK_TOKEN);
        cursor = span.end;
    }
    out.push_str(&text[cursor..]);
    MaskedText {
        text: out,
        url_count: spans.len(),
    }
}

/// Extract, resolve, and canonicalize every URL in a message.
///
/// Returns per-URL outcomes plus warnings. Resolution failures never abort
/// the message.
pub fn process_urls(
    text: &str,
    rules: &SuffixRules,
    resolver: &dyn RedirectResolver,
) -> (Vec<ExtractedUrl>, Vec<CanonWarning>, Vec<Resolution>) {
    let mut urls = Vec::new();
    let mut warnings = Vec::new();
    let mut loops = Vec::new();
    for span in extract_urls(text, rules) {
        let resolution = resolve_redirects(&span.raw, resolver);
        if resolution.loop_detected {
            loops.push(resolution.clone());
        }
        match canonical_domain(&resolution.url, rules) {
            Ok(outcome) => {
                if let Some(w) = outcome.warning {
                    warnings.push(w);
                }
                urls.push(ExtractedUrl {
                    raw: span.raw,
                    resolved: resolution.url,
                    canonical_domain: outcome.domain,
                });
            }
            Err(_) => {
                // Resolved target has no hostname: keep the raw span's domain.
                if let Ok(outcome) = canonical_domain(&span.raw, rules) {
                    if let Some(w) = outcome.warning {
                        warnings.push(w);
                    }
                    urls.push(ExtractedUrl {
                        raw: span.raw.clone(),
                        resolved: resolution.url.clone(),
                        canonical_domain: outcome.domain,
                    });
                }
            }
        }
    }
    (urls, warnings, loops)
}
