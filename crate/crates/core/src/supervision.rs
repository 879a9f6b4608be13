//! Distant supervision from per-domain credibility ratings.
//!
//! Domain ratings carry two closed categorical fields — credibility and
//! factual reporting — which map onto ordinal risk components and combine
//! into the domain risk `R = 1 - (1 - r_C)(1 - r_F)`. A message inherits the
//! risk of its worst-linked rated domain; thresholding that risk yields
//! high-confidence binary labels with a fuzzy band left unlabeled.
//! Descriptive metadata (bias, media type, country) never feeds the mapping.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use thiserror::Error;

use crate::artifact::AuditRecord;
use crate::net::{HttpTransport, TransportError};

/// Credibility rating categories, best first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Credibility {
    High,
    Medium,
    Low,
}

impl Credibility {
    pub const ALL: [Credibility; 3] = [Credibility::High, Credibility::Medium, Credibility::Low];

    /// Ordinal rank: High -> 0, Medium -> 1, Low -> 2.
    pub fn rank(self) -> u32 {
        match self {
            Credibility::High => 0,
            Credibility::Medium => 1,
            Credibility::Low => 2,
        }
    }
}

/// Factual-reporting rating categories, best first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Factual {
    VeryHigh,
    High,
    MostlyFactual,
    Mixed,
    Low,
    VeryLow,
}

impl Factual {
    pub const ALL: [Factual; 6] = [
        Factual::VeryHigh,
        Factual::High,
        Factual::MostlyFactual,
        Factual::Mixed,
        Factual::Low,
        Factual::VeryLow,
    ];

    /// Ordinal rank: VeryHigh -> 0 through VeryLow -> 5.
    pub fn rank(self) -> u32 {
        match self {
            Factual::VeryHigh => 0,
            Factual::High => 1,
            Factual::MostlyFactual => 2,
            Factual::Mixed => 3,
            Factual::Low => 4,
            Factual::VeryLow => 5,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SupervisionError {
    #[error("unknown category string: {0:?}")]
    UnknownCategory(String),
    #[error("thresholds invalid: low {low} must be below high {high}")]
    BadThresholds { low: f64, high: f64 },
}

/// Fold a category string: lowercase, drop spaces/hyphens/underscores.
fn fold_category(raw: &str) -> String {
    raw.chars()
        .filter(|c| !matches!(c, ' ' | '-' | '_' | '.' | '/'))
        .collect::<String>()
        .to_lowercase()
}

pub fn parse_credibility(raw: &str) -> Result<Credibility, SupervisionError> {
    match fold_category(raw).as_str() {
        "high" | "highcredibility" => Ok(Credibility::High),
        "medium" | "mediumcredibility" => Ok(Credibility::Medium),
        "low" | "lowcredibility" => Ok(Credibility::Low),
        _ => Err(SupervisionError::UnknownCategory(raw.to_string())),
    }
}

pub fn parse_factual(raw: &str) -> Result<Factual, SupervisionError> {
    match fold_category(raw).as_str() {
        "veryhigh" => Ok(Factual::VeryHigh),
        "high" => Ok(Factual::High),
        "mostlyfactual" | "mostly" => Ok(Factual::MostlyFactual),
        "mixed" => Ok(Factual::Mixed),
        "low" => Ok(Factual::Low),
        "verylow" => Ok(Factual::VeryLow),
        _ => Err(SupervisionError::UnknownCategory(raw.to_string())),
    }
}

/// One raw rating record as fetched or loaded from a dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MbfcRecord {
    pub domain: String,
    pub credibility: Credibility,
    pub factual: Factual,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country: Option<String>,
}

/// Per-domain risk components and combined risk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainRisk {
    pub domain: String,
    pub r_c: f64,
    pub r_f: f64,
    pub r: f64,
}

/// Binary supervision outcome for one message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    /// R_msg at or below the low threshold.
    Safe,
    /// R_msg at or above the high threshold.
    Risky,
    /// Fuzzy band between the thresholds; excluded from supervised runs.
    Unlabeled,
    /// No linked domain carries a rating.
    NoRatedDomain,
}

impl Label {
    /// Numeric value for training: Safe -> 0, Risky -> 1.
    pub fn as_binary(self) -> Option<u8> {
        match self {
            Label::Safe => Some(0),
            Label::Risky => Some(1),
            _ => None,
        }
    }
}

/// Message-level supervision record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Supervision {
    pub message_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_msg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supervising_domain: Option<String>,
    pub label: Label,
}

/// Supervision thresholds (defaults 0.3 / 0.8).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Thresholds {
    pub tau_low: f64,
    pub tau_high: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            tau_low: 0.3,
            tau_high: 0.8,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), SupervisionError> {
        if self.tau_low >= self.tau_high {
            return Err(SupervisionError::BadThresholds {
                low: self.tau_low,
                high: self.tau_high,
            });
        }
        Ok(())
    }
}

/// Basic domain-string normalization for rating keys: lowercase, trimmed,
/// trailing dot dropped, one leading `www.` removed. Callers that hold
/// public-suffix rules should canonicalize through `urlkit` first.
pub fn normalize_domain(raw: &str) -> String {
    let d = raw.trim().trim_end_matches('.').to_lowercase();
    match d.strip_prefix("www.") {
        Some(rest) if rest.contains('.') => rest.to_string(),
        _ => d,
    }
}

/// Collapse duplicate or conflicting records into one rating pair per
/// normalized domain: the most frequent pair wins; ties prefer greater
/// credibility, then greater factual reporting.
pub fn canonicalize_ratings(
    records: &[MbfcRecord],
) -> (BTreeMap<String, (Credibility, Factual)>, Vec<AuditRecord>) {
    let mut counts: HashMap<String, HashMap<(Credibility, Factual), usize>> = HashMap::new();
    for record in records {
        let domain = normalize_domain(&record.domain);
        if domain.is_empty() {
            continue;
        }
        *counts
            .entry(domain)
            .or_default()
            .entry((record.credibility, record.factual))
            .or_insert(0) += 1;
    }
    let mut result = BTreeMap::new();
    let mut audits = Vec::new();
    for (domain, pairs) in counts {
        let mut best: Option<((Credibility, Factual), usize)> = None;
        for (&pair, &count) in &pairs {
            let better = match best {
                None => true,
                Some((best_pair, best_count)) => {
                    // Higher count first; then smaller ordinal ranks, which
                    // mean greater credibility / greater factual reporting.
                    count > best_count
                        || (count == best_count
                            && (pair.0.rank(), pair.1.rank())
                                < (best_pair.0.rank(), best_pair.1.rank()))
                }
            };
            if better {
                best = Some((pair, count));
            }
        }
        let (pair, _) = best.expect("at least one pair per domain");
        if pairs.len() > 1 {
            audits.push(AuditRecord::new(
                "supervise",
                "rating_conflict_resolved",
                None,
                format!("{domain}: {} candidate pairs, kept {:?}", pairs.len(), pair),
            ));
        }
        result.insert(domain, pair);
    }
    (result, audits)
}

/// Ordinal risk components: `r_C = rank_C / 2`, `r_F = rank_F / 5`.
pub fn risk_components(credibility: Credibility, factual: Factual) -> (f64, f64) {
    (
        f64::from(credibility.rank()) / 2.0,
        f64::from(factual.rank()) / 5.0,
    )
}

/// Combined domain risk: `R = 1 - (1 - r_C)(1 - r_F)`.
pub fn domain_risk(r_c: f64, r_f: f64) -> f64 {
    1.0 - (1.0 - r_c) * (1.0 - r_f)
}

/// Build the per-domain risk table from canonical rating pairs.
pub fn risk_table(ratings: &BTreeMap<String, (Credibility, Factual)>) -> BTreeMap<String, DomainRisk> {
    ratings
        .iter()
        .map(|(domain, &(c, f))| {
            let (r_c, r_f) = risk_components(c, f);
            (
                domain.clone(),
                DomainRisk {
                    domain: domain.clone(),
                    r_c,
                    r_f,
                    r: domain_risk(r_c, r_f),
                },
            )
        })
        .collect()
}

/// Worst-linked-source message risk: the maximum rated-domain risk and the
/// attaining domain (ties broken by lexicographically smallest domain).
/// `None` when no linked domain is rated.
pub fn message_risk(
    domains: &BTreeSet<String>,
    risk_map: &BTreeMap<String, DomainRisk>,
) -> Option<(f64, String)> {
    let mut best: Option<(f64, &str)> = None;
    // BTreeSet iterates in lexicographic order, so strictly-greater
    // comparison keeps the smallest domain on ties.
    for domain in domains {
        if let Some(entry) = risk_map.get(domain) {
            if best.is_none_or(|(r, _)| entry.r > r) {
                best = Some((entry.r, domain));
            }
        }
    }
    best.map(|(r, d)| (r, d.to_string()))
}

/// Threshold a message risk into a label.
pub fn assign_label(r_msg: f64, thresholds: &Thresholds) -> Result<Label, SupervisionError> {
    thresholds.validate()?;
    Ok(if r_msg <= thresholds.tau_low {
        Label::Safe
    } else if r_msg >= thresholds.tau_high {
        Label::Risky
    } else {
        Label::Unlabeled
    })
}

/// Full supervision for one message's canonical domain set.
pub fn supervise_message(
    message_id: &str,
    domains: &BTreeSet<String>,
    risk_map: &BTreeMap<String, DomainRisk>,
    thresholds: &Thresholds,
) -> Result<Supervision, SupervisionError> {
    match message_risk(domains, risk_map) {
        Some((r_msg, domain)) => Ok(Supervision {
            message_id: message_id.to_string(),
            r_msg: Some(r_msg),
            supervising_domain: Some(domain),
            label: assign_label(r_msg, thresholds)?,
        }),
        None => Ok(Supervision {
            message_id: message_id.to_string(),
            r_msg: None,
            supervising_domain: None,
            label: Label::NoRatedDomain,
        }),
    }
}

/// Load a rating dump CSV with columns
/// `domain,credibility,factual_reporting,bias,media_type,country`.
/// Unparseable category strings skip the row with an audit entry.
pub fn load_ratings_csv(path: &Path) -> std::io::Result<(Vec<MbfcRecord>, Vec<AuditRecord>)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut records = Vec::new();
    let mut audits = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        let get = |idx: usize| row.get(idx).unwrap_or("").trim().to_string();
        let domain = get(0);
        match (parse_credibility(&get(1)), parse_factual(&get(2))) {
            (Ok(credibility), Ok(factual)) => records.push(MbfcRecord {
                domain,
                credibility,
                factual,
                bias: Some(get(3)).filter(|s| !s.is_empty()),
                media_type: Some(get(4)).filter(|s| !s.is_empty()),
                country: Some(get(5)).filter(|s| !s.is_empty()),
            }),
            (c, f) => {
                let detail = match (c, f) {
                    (Err(e), _) => e.to_string(),
                    (_, Err(e)) => e.to_string(),
                    _ => unreachable!(),
                };
                audits.push(AuditRecord::new(
                    "supervise",
                    "unknown_category",
                    None,
                    format!("row {}: {} ({})", i + 2, detail, domain),
                ));
            }
        }
    }
    Ok((records, audits))
}

/// Rating lookup failures, each distinct and non-fatal to batch runs.
#[derive(Debug, Error)]
pub enum FetchError {
    #[error("domain not found: {0}")]
    NotFound(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("response parse failure: {0}")]
    ParseFailure(String),
}

/// Remote rating API configuration. The auth token is read from the named
/// environment variable, never from config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatingApiConfig {
    pub base_url: String,
    #[serde(default)]
    pub token_env: Option<String>,
}

/// Fetch one domain rating over HTTP.
///
/// Expected response body: JSON with `domain`, `credibility`,
/// `factual_reporting`, and optional `bias`, `media_type`, `country`.
pub fn fetch_rating(
    domain: &str,
    transport: &dyn HttpTransport,
    config: &RatingApiConfig,
) -> Result<MbfcRecord, FetchError> {
    let url = format!(
        "{}/rating?domain={}",
        config.base_url.trim_end_matches('/'),
        domain
    );
    let mut headers = Vec::new();
    if let Some(env_name) = &config.token_env {
        if let Ok(token) = std::env::var(env_name) {
            headers.push(("authorization".to_string(), format!("Bearer {token}")));
        }
    }
    let response = transport.get(&url, &headers)?;
    if response.status == 404 {
        return Err(FetchError::NotFound(domain.to_string()));
    }
    if response.status >= 400 {
        return Err(FetchError::Transport(TransportError::Failed(format!(
            "status {}",
            response.status
        ))));
    }
    let value: serde_json::Value = serde_json::from_str(&response.body)
        .map_err(|e| FetchError::ParseFailure(e.to_string()))?;
    let text = |key: &str| value.get(key).and_then(|v| v.as_str()).map(String::from);
    let credibility = text("credibility")
        .ok_or_else(|| FetchError::ParseFailure("missing credibility".into()))?;
    let factual = text("factual_reporting")
        .ok_or_else(|| FetchError::ParseFailure("missing factual_reporting".into()))?;
    Ok(MbfcRecord {
        domain: text("domain").unwrap_or_else(|| domain.to_string()),
        credibility: parse_credibility(&credibility)
            .map_err(|e| FetchError::ParseFailure(e.to_string()))?,
        factual: parse_factual(&factual).map_err(|e| FetchError::ParseFailure(e.to_string()))?,
        bias: text("bias"),
        media_type: text("media_type"),
        country: text("country"),
    })
}
