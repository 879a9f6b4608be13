//! The closed rhetorical vocabulary and its machine-checkable constraints.
//!
//! Four fields — theme, claim type, call to action, evidence — with 35
//! labels total. The vocabulary ships as a versioned data file embedded at
//! compile time; tagger outputs are parsed against it case-insensitively
//! and validated against the cardinality and exclusivity rules. Invalid
//! assignments are quarantined by callers, never repaired.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;
use thiserror::Error;

use crate::hashing::sha256_hex;

/// Embedded versioned vocabulary data file.
pub const VOCABULARY_JSON: &str = include_str!("../data/codebook_vocabulary.json");

/// The four codebook fields, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Theme,
    Claim,
    Cta,
    Evidence,
}

impl Field {
    pub const ALL: [Field; 4] = [Field::Theme, Field::Claim, Field::Cta, Field::Evidence];

    /// JSON key used by the tagger output schema.
    pub fn schema_key(self) -> &'static str {
        match self {
            Field::Theme => "theme",
            Field::Claim => "claim_types",
            Field::Cta => "ctas",
            Field::Evidence => "evidence",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Field::Theme => "theme",
            Field::Claim => "claim",
            Field::Cta => "cta",
            Field::Evidence => "evidence",
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Deserialize)]
struct VocabularyFile {
    version: u32,
    theme: Vec<String>,
    claim: Vec<String>,
    cta: Vec<String>,
    evidence: Vec<String>,
}

/// The closed label vocabulary, with canonical ordering per field.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    version: u32,
    labels: HashMap<Field, Vec<String>>,
    lookup: HashMap<(Field, String), usize>,
}

/// Label-string normalization used for matching: case-insensitive,
/// whitespace runs folded to one space, spaces around "/" dropped.
pub fn normalize_label(raw: &str) -> String {
    let folded = raw
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    folded.replace(" / ", "/").replace("/ ", "/").replace(" /", "/")
}

impl Vocabulary {
    /// Load the embedded vocabulary file.
    pub fn builtin() -> &'static Vocabulary {
        static VOCAB: OnceLock<Vocabulary> = OnceLock::new();
        VOCAB.get_or_init(|| {
            Vocabulary::from_json(VOCABULARY_JSON).expect("embedded vocabulary is valid")
        })
    }

    pub fn from_json(json: &str) -> Result<Vocabulary, serde_json::Error> {
        let file: VocabularyFile = serde_json::from_str(json)?;
        let mut labels = HashMap::new();
        labels.insert(Field::Theme, file.theme);
        labels.insert(Field::Claim, file.claim);
        labels.insert(Field::Cta, file.cta);
        labels.insert(Field::Evidence, file.evidence);
        let mut lookup = HashMap::new();
        for field in Field::ALL {
            for (i, label) in labels[&field].iter().enumerate() {
                lookup.insert((field, normalize_label(label)), i);
            }
        }
        Ok(Vocabulary {
            version: file.version,
            labels,
            lookup,
        })
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    /// Labels of one field, in canonical order.
    pub fn labels(&self, field: Field) -> &[String] {
        &self.labels[&field]
    }

    /// Total label count across the four fields.
    pub fn len(&self) -> usize {
        Field::ALL.iter().map(|f| self.labels[f].len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Canonical index of a label within its field, matching
    /// case-insensitively after whitespace folding.
    pub fn label_index(&self, field: Field, raw: &str) -> Option<usize> {
        self.lookup.get(&(field, normalize_label(raw))).copied()
    }

    /// Canonical spelling for a possibly differently-cased label.
    pub fn canonical_label(&self, field: Field, raw: &str) -> Option<&str> {
        self.label_index(field, raw)
            .map(|i| self.labels[&field][i].as_str())
    }

    /// Stable fingerprint of the vocabulary content (order-sensitive).
    pub fn fingerprint(&self) -> String {
        let mut buf = format!("v{}", self.version);
        for field in Field::ALL {
            for label in self.labels(field) {
                buf.push('\u{1f}');
                buf.push_str(field.name());
                buf.push(':');
                buf.push_str(label);
            }
        }
        sha256_hex(buf.as_bytes())
    }
}

/// A validated-or-validatable multi-label assignment over the four fields.
///
/// Labels are stored with canonical vocabulary spelling, ordered by
/// vocabulary index within each field.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TagAssignment {
    pub theme: Vec<String>,
    pub claim: Vec<String>,
    pub cta: Vec<String>,
    pub evidence: Vec<String>,
}

impl TagAssignment {
    pub fn new(
        theme: Vec<String>,
        claim: Vec<String>,
        cta: Vec<String>,
        evidence: Vec<String>,
    ) -> Self {
        TagAssignment {
            theme,
            claim,
            cta,
            evidence,
        }
    }

    pub fn field(&self, field: Field) -> &[String] {
        match field {
            Field::Theme => &self.theme,
            Field::Claim => &self.claim,
            Field::Cta => &self.cta,
            Field::Evidence => &self.evidence,
        }
    }

    pub fn field_mut(&mut self, field: Field) -> &mut Vec<String> {
        match field {
            Field::Theme => &mut self.theme,
            Field::Claim => &mut self.claim,
            Field::Cta => &mut self.cta,
            Field::Evidence => &mut self.evidence,
        }
    }

    /// Sort labels within each field by vocabulary order and drop duplicates.
    pub fn canonicalize(&mut self, vocab: &Vocabulary) {
        for field in Field::ALL {
            let labels = self.field_mut(field);
            labels.sort_by_key(|l| vocab.label_index(field, l).unwrap_or(usize::MAX));
            labels.dedup();
        }
    }

    /// Serialize to the tagger output schema (single string per field,
    /// labels joined with "; ").
    pub fn to_schema_json(&self) -> serde_json::Value {
        serde_json::json!({
            "theme": self.theme.join("; "),
            "claim_types": self.claim.join("; "),
            "ctas": self.cta.join("; "),
            "evidence": self.evidence.join("; "),
        })
    }
}

/// Parse failure for a tagger output document.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("malformed json: {0}")]
    MalformedJson(String),
    #[error("missing field: {0}")]
    MissingField(&'static str),
    #[error("unknown label in {field}: {label:?}")]
    UnknownLabel { field: Field, label: String },
    #[error("field {field} has non-string value: {fragment}")]
    BadValueType { field: Field, fragment: String },
}

fn split_label_list(value: &serde_json::Value, field: Field) -> Result<Vec<String>, ParseError> {
    let mut parts = Vec::new();
    match value {
        serde_json::Value::String(s) => {
            for piece in s.split([';', ',']) {
                let piece = piece.trim();
                if !piece.is_empty() {
                    parts.push(piece.to_string());
                }
            }
        }
        serde_json::Value::Array(items) => {
            for item in items {
                match item {
                    serde_json::Value::String(s) => {
                        let s = s.trim();
                        if !s.is_empty() {
                            parts.push(s.to_string());
                        }
                    }
                    other => {
                        return Err(ParseError::BadValueType {
                            field,
                            fragment: other.to_string(),
                        })
                    }
                }
            }
        }
        other => {
            return Err(ParseError::BadValueType {
                field,
                fragment: other.to_string(),
            })
        }
    }
    Ok(parts)
}

/// Parse one tagger output document against the vocabulary.
///
/// Accepts both a single label string and a list per field (strings may be
/// ";" or "," separated); labels match case-insensitively after whitespace
/// folding and are normalized to canonical spelling.
pub fn parse_tagger_output(
    json_text: &str,
    vocab: &Vocabulary,
) -> Result<TagAssignment, ParseError> {
    let value: serde_json::Value = serde_json::from_str(json_text)
        .map_err(|e| ParseError::MalformedJson(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| ParseError::MalformedJson("top-level value is not an object".into()))?;

    let mut assignment = TagAssignment::new(Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for field in Field::ALL {
        let key = field.schema_key();
        let raw = obj.get(key).ok_or(ParseError::MissingField(key))?;
        let pieces = split_label_list(raw, field)?;
        if pieces.is_empty() {
            return Err(ParseError::MissingField(key));
        }
        let out = assignment.field_mut(field);
        for piece in pieces {
            match vocab.canonical_label(field, &piece) {
                Some(canon) => out.push(canon.to_string()),
                None => {
                    return Err(ParseError::UnknownLabel {
                        field,
                        label: piece,
                    })
                }
            }
        }
    }
    assignment.canonicalize(vocab);
    Ok(assignment)
}

/// One violated codebook constraint. Violations are data, not errors:
/// callers quarantine offending assignments and keep going.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Violation {
    /// Field label count outside its allowed range.
    Cardinality {
        field: Field,
        count: usize,
        min: usize,
        max: usize,
    },
    /// A claim pair the codebook forbids.
    ForbiddenPair { first: String, second: String },
    /// "No CTA" combined with another CTA label.
    NoCtaNotAlone,
    /// "None / assertion only" combined with other evidence.
    NoneEvidenceNotAlone,
    /// Label not in the vocabulary (only possible on hand-built assignments).
    UnknownLabel { field: Field, label: String },
}

/// Switches for rules the codebook implies but does not state outright.
#[derive(Debug, Clone, Copy)]
pub struct ValidationConfig {
    /// Treat "None / assertion only" as exclusive within evidence.
    pub none_evidence_exclusive: bool,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            none_evidence_exclusive: true,
        }
    }
}

const NO_SUBSTANTIVE_CLAIM: &str = "No substantive claim";
const VERIFIABLE_FACTUAL: &str = "Verifiable factual statement";
const RUMOUR: &str = "Rumour / unverified report";
const ANNOUNCEMENT: &str = "Announcement";
const NO_CTA: &str = "No CTA";
const NONE_EVIDENCE: &str = "None / assertion only";

/// Field cardinality bounds: theme 1-2, claim 1-3, cta >= 1, evidence >= 1.
fn cardinality_bounds(field: Field) -> (usize, usize) {
    match field {
        Field::Theme => (1, 2),
        Field::Claim => (1, 3),
        Field::Cta => (1, usize::MAX),
        Field::Evidence => (1, usize::MAX),
    }
}

/// Check an assignment against every codebook constraint.
///
/// Returns all violations found (empty means valid).
pub fn validate_assignment(
    assignment: &TagAssignment,
    vocab: &Vocabulary,
    config: &ValidationConfig,
) -> Vec<Violation> {
    let mut violations = Vec::new();

    for field in Field::ALL {
        let labels = assignment.field(field);
        for label in labels {
            if vocab.label_index(field, label).is_none() {
                violations.push(Violation::UnknownLabel {
                    field,
                    label: label.clone(),
                });
            }
        }
        let (min, max) = cardinality_bounds(field);
        if labels.len() < min || labels.len() > max {
            violations.push(Violation::Cardinality {
                field,
                count: labels.len(),
                min,
                max,
            });
        }
    }

    let has_claim = |l: &str| assignment.claim.iter().any(|c| c == l);
    for (a, b) in [(RUMOUR, VERIFIABLE_FACTUAL), (ANNOUNCEMENT, VERIFIABLE_FACTUAL)] {
        if has_claim(a) && has_claim(b) {
            violations.push(Violation::ForbiddenPair {
                first: a.to_string(),
                second: b.to_string(),
            });
        }
    }
    if has_claim(NO_SUBSTANTIVE_CLAIM) && assignment.claim.len() > 1 {
        let other = assignment
            .claim
            .iter()
            .find(|c| *c != NO_SUBSTANTIVE_CLAIM)
            .cloned()
            .unwrap_or_default();
        violations.push(Violation::ForbiddenPair {
            first: NO_SUBSTANTIVE_CLAIM.to_string(),
            second: other,
        });
    }

    if assignment.cta.iter().any(|c| c == NO_CTA) && assignment.cta.len() > 1 {
        violations.push(Violation::NoCtaNotAlone);
    }
    if config.none_evidence_exclusive
        && assignment.evidence.iter().any(|e| e == NONE_EVIDENCE)
        && assignment.evidence.len() > 1
    {
        violations.push(Violation::NoneEvidenceNotAlone);
    }

    violations
}

/// Per-field agreement and the unweighted mean across the four fields.
#[derive(Debug, Clone, Serialize)]
pub struct AgreementReport {
    pub theme_f1: f64,
    pub claim_f1: f64,
    pub cta_f1: f64,
    pub evidence_f1: f64,
    pub overall: f64,
}

impl AgreementReport {
    pub fn field_f1(&self, field: Field) -> f64 {
        match field {
            Field::Theme => self.theme_f1,
            Field::Claim => self.claim_f1,
            Field::Cta => self.cta_f1,
            Field::Evidence => self.evidence_f1,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AgreementError {
    #[error("predicted and gold lists differ in length: {predicted} vs {gold}")]
    LengthMismatch { predicted: usize, gold: usize },
}

/// Micro-averaged F1 per field over (message, label) indicator pairs;
/// overall score is the unweighted mean of the four field F1s.
pub fn agreement_f1(
    predicted: &[TagAssignment],
    gold: &[TagAssignment],
) -> Result<AgreementReport, AgreementError> {
    if predicted.len() != gold.len() {
        return Err(AgreementError::LengthMismatch {
            predicted: predicted.len(),
            gold: gold.len(),
        });
    }
    let mut per_field = [0.0f64; 4];
    for (fi, field) in Field::ALL.into_iter().enumerate() {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for (p, g) in predicted.iter().zip(gold) {
            let pl = p.field(field);
            let gl = g.field(field);
            for label in pl {
                if gl.contains(label) {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
            for label in gl {
                if !pl.contains(label) {
                    fn_ += 1;
                }
            }
        }
        let denom = 2 * tp + fp + fn_;
        per_field[fi] = if denom == 0 {
            1.0
        } else {
            2.0 * tp as f64 / denom as f64
        };
    }
    Ok(AgreementReport {
        theme_f1: per_field[0],
        claim_f1: per_field[1],
        cta_f1: per_field[2],
        evidence_f1: per_field[3],
        overall: per_field.iter().sum::<f64>() / 4.0,
    })
}

/// Gold assignments for the five reference messages used as fixtures across
/// the test suite (giveaway promo, trade signal, buried-report rumour,
/// bare question, support reply).
pub fn reference_gold_rows() -> Vec<TagAssignment> {
    let rows = [
        (
            vec!["Finance/Crypto"],
            vec!["Scarcity/FOMO tactic", "Verifiable factual statement"],
            vec!["Join/Subscribe", "Visit external link / watch video"],
            vec!["Link/URL", "Statistics"],
        ),
        (
            vec!["Finance/Crypto"],
            vec!["Promotional hype / exaggerated profit guarantee"],
            vec!["Buy / invest / donate"],
            vec!["Link/URL", "Chart / price graph / TA diagram"],
        ),
        (
            vec!["Public health & medicine"],
            vec!["Rumour / unverified report"],
            vec!["Visit external link / watch video"],
            vec!["Link/URL"],
        ),
        (
            vec!["Conversation/Chat/Other"],
            vec!["No substantive claim"],
            vec!["Engage/Ask questions"],
            vec!["None / assertion only"],
        ),
        (
            vec!["Technology"],
            vec!["Announcement"],
            vec!["No CTA"],
            vec!["None / assertion only"],
        ),
    ];
    let vocab = Vocabulary::builtin();
    rows.into_iter()
        .map(|(t, c, a, e)| {
            let mut assignment = TagAssignment::new(
                t.into_iter().map(String::from).collect(),
                c.into_iter().map(String::from).collect(),
                a.into_iter().map(String::from).collect(),
                e.into_iter().map(String::from).collect(),
            );
            assignment.canonicalize(vocab);
            assignment
        })
        .collect()
}
