//! Tag acquisition: HTTP endpoint, precomputed tag file, or rule-based mock.
//!
//! Every mode returns assignments that passed codebook validation;
//! everything else is quarantined with an audit record, never repaired and
//! never dropped silently. The HTTP mode takes [`MaskedText`] by type, so an
//! unmasked URL cannot reach the wire.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use thiserror::Error;

use crate::codebook::{
    parse_tagger_output, validate_assignment, TagAssignment, ValidationConfig, Vocabulary,
};
use crate::hashing::hash_str;
use crate::net::HttpTransport;
use crate::urlkit::{MaskedText, URL_MASK_TOKEN};

/// The codebook rule block shipped verbatim as a resource file and
/// prepended to every prompt.
pub const CODEBOOK_PROMPT: &str = include_str!("../data/codebook_prompt.txt");

/// Version of the mock rule table. Bump on any rule change: synthetic
/// experiment outputs depend on it.
pub const MOCK_RULES_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TaggerMode {
    /// POST prompts to a tagging endpoint implementing the codebook schema.
    Http {
        endpoint: String,
        /// Environment variable holding the bearer token, if any.
        #[serde(default)]
        auth_env: Option<String>,
    },
    /// Look assignments up in a precomputed JSONL tag file.
    File { path: PathBuf },
    /// Deterministic keyword rules; exists to drive synthetic end-to-end
    /// runs, not to approximate a trained model.
    Mock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaggerConfig {
    pub mode: TaggerMode,
    /// Transport/parse retries in HTTP mode.
    pub retries: u32,
    pub timeout_secs: u64,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        TaggerConfig {
            mode: TaggerMode::Mock,
            retries: 3,
            timeout_secs: 30,
        }
    }
}

#[derive(Debug, Error)]
pub enum TagError {
    #[error("tagger unavailable: {0}")]
    TaggerUnavailable(String),
    #[error("invalid output after {attempts} attempts: {detail}")]
    InvalidOutput { attempts: u32, detail: String },
    #[error("no tag recorded for message {0}")]
    MissingTag(String),
    #[error("tag file unreadable: {0}")]
    TagFileUnreadable(String),
}

/// Build the deterministic prompt: the verbatim codebook block, then the
/// message under a MESSAGE header.
pub fn build_prompt(masked: &MaskedText) -> String {
    format!("{}\nMESSAGE:\n{}\n", CODEBOOK_PROMPT, masked.text)
}

/// One row of a precomputed tag file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TagFileRow {
    pub message_id: String,
    pub theme: serde_json::Value,
    pub claim_types: serde_json::Value,
    pub ctas: serde_json::Value,
    pub evidence: serde_json::Value,
}

pub struct Tagger<'a> {
    config: TaggerConfig,
    vocab: &'a Vocabulary,
    validation: ValidationConfig,
    file_tags: Option<HashMap<String, String>>,
    transport: Option<Box<dyn HttpTransport>>,
}

impl<'a> Tagger<'a> {
    /// Build a tagger. HTTP mode requires a transport; file mode loads the
    /// tag file eagerly so missing files fail at startup, not per message.
    pub fn new(
        config: TaggerConfig,
        vocab: &'a Vocabulary,
        validation: ValidationConfig,
        transport: Option<Box<dyn HttpTransport>>,
    ) -> Result<Self, TagError> {
        let file_tags = match &config.mode {
            TaggerMode::File { path } => Some(load_tag_file(path)?),
            _ => None,
        };
        if matches!(config.mode, TaggerMode::Http { .. }) && transport.is_none() {
            return Err(TagError::TaggerUnavailable(
                "http mode configured without a transport".into(),
            ));
        }
        Ok(Tagger {
            config,
            vocab,
            validation,
            file_tags,
            transport,
        })
    }

    pub fn mock(vocab: &'a Vocabulary) -> Self {
        Tagger {
            config: TaggerConfig::default(),
            vocab,
            validation: ValidationConfig::default(),
            file_tags: None,
            transport: None,
        }
    }

    /// Tag one message. The masked-text parameter type is the leakage
    /// guard: raw text cannot be passed here.
    pub fn tag_message(
        &self,
        message_id: &str,
        masked: &MaskedText,
    ) -> Result<TagAssignment, TagError> {
        let assignment = match &self.config.mode {
            TaggerMode::Mock => mock_tag(masked, self.vocab),
            TaggerMode::File { .. } => {
                let raw = self
                    .file_tags
                    .as_ref()
                    .and_then(|m| m.get(message_id))
                    .ok_or_else(|| TagError::MissingTag(message_id.to_string()))?;
                parse_tagger_output(raw, self.vocab).map_err(|e| TagError::InvalidOutput {
                    attempts: 1,
                    detail: e.to_string(),
                })?
            }
            TaggerMode::Http { endpoint, auth_env } => {
                self.tag_over_http(endpoint, auth_env.as_deref(), message_id, masked)?
            }
        };
        let violations = validate_assignment(&assignment, self.vocab, &self.validation);
        if violations.is_empty() {
            Ok(assignment)
        } else {
            Err(TagError::InvalidOutput {
                attempts: 1,
                detail: format!("constraint violations: {violations:?}"),
            })
        }
    }

    fn tag_over_http(
        &self,
        endpoint: &str,
        auth_env: Option<&str>,
        message_id: &str,
        masked: &MaskedText,
    ) -> Result<TagAssignment, TagError> {
        let transport = self
            .transport
            .as_ref()
            .expect("http mode always has a transport");
        let prompt = build_prompt(masked);
        let body = serde_json::json!({ "prompt": prompt });
        let mut headers = Vec::new();
        if let Some(env_name) = auth_env {
            if let Ok(token) = std::env::var(env_name) {
                headers.push(("authorization".to_string(), format!("Bearer {token}")));
            }
        }
        let attempts = self.config.retries.max(1);
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                // Deterministic jitter: a hash of (message, attempt) instead
                // of wall-clock randomness, so retry schedules reproduce.
                let jitter_ms = hash_str(message_id, u64::from(attempt)) % 250;
                std::thread::sleep(std::time::Duration::from_millis(
                    50 * u64::from(attempt) + jitter_ms,
                ));
            }
            match transport.post_json(endpoint, &body, &headers) {
                Ok(response) if response.status < 400 => {
                    match parse_tagger_output(&response.body, self.vocab) {
                        Ok(assignment) => return Ok(assignment),
                        Err(e) => last_error = e.to_string(),
                    }
                }
                Ok(response) => last_error = format!("status {}", response.status),
                Err(e) => last_error = e.to_string(),
            }
        }
        Err(TagError::InvalidOutput {
            attempts,
            detail: last_error,
        })
    }
}

fn load_tag_file(path: &Path) -> Result<HashMap<String, String>, TagError> {
    let rows: Vec<TagFileRow> = crate::artifact::read_jsonl(path)
        .map_err(|e| TagError::TagFileUnreadable(e.to_string()))?;
    Ok(rows
        .into_iter()
        .map(|row| {
            let doc = serde_json::json!({
                "theme": row.theme,
                "claim_types": row.claim_types,
                "ctas": row.ctas,
                "evidence": row.evidence,
            });
            (row.message_id, doc.to_string())
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Mock rule table (version 1, frozen).
//
// Phrases match as substrings of the lowercased masked text; single words
// match on token boundaries. Order within each field is fixed; the first
// two theme matches, first three claim matches (skipping any that would
// violate a forbidden pair), and all CTA/evidence matches apply. Empty
// fields take the documented defaults.
// ---------------------------------------------------------------------------

struct FieldRules {
    label: &'static str,
    words: &'static [&'static str],
    phrases: &'static [&'static str],
}

static THEME_RULES: &[FieldRules] = &[
    FieldRules {
        label: "Finance/Crypto",
        words: &[
            "crypto", "token", "trading", "coin", "usdt", "airdrop", "presale", "profit",
            "market",
        ],
        phrases: &["price target"],
    },
    FieldRules {
        label: "Public health & medicine",
        words: &["vaccine", "health", "disease", "medicine", "cure", "clinic", "epa"],
        phrases: &[],
    },
    FieldRules {
        label: "Politics",
        words: &["election", "government", "senate", "minister", "policy"],
        phrases: &[],
    },
    FieldRules {
        label: "Crime & public safety",
        words: &["police", "crime", "fraud", "theft"],
        phrases: &["scam alert"],
    },
    FieldRules {
        label: "Gaming/Gambling",
        words: &["casino", "jackpot", "slots", "betting", "wager"],
        phrases: &[],
    },
    FieldRules {
        label: "Sports",
        words: &["league", "tournament", "goal", "fixture"],
        phrases: &[],
    },
    FieldRules {
        label: "Lifestyle & well-being",
        words: &["fitness", "wellness", "productivity", "diet"],
        phrases: &[],
    },
    FieldRules {
        label: "Technology",
        words: &["software", "docker", "server", "app", "api", "release", "update"],
        phrases: &[],
    },
    FieldRules {
        label: "News/Information",
        words: &["news", "report", "breaking"],
        phrases: &[],
    },
];

static CLAIM_RULES: &[FieldRules] = &[
    FieldRules {
        label: "Promotional hype / exaggerated profit guarantee",
        words: &["guaranteed", "10x", "5x"],
        phrases: &["no risk", "free money", "set to explode"],
    },
    FieldRules {
        label: "Scarcity/FOMO tactic",
        words: &["hurry"],
        phrases: &["last chance", "ends today", "limited time", "spots left", "don't miss"],
    },
    FieldRules {
        label: "Speculative forecast / prediction",
        words: &["forecast", "prediction", "projection"],
        phrases: &["will hit", "price target", "expect the"],
    },
    FieldRules {
        label: "Emotional appeal / fear-mongering",
        words: &["terrifying", "horrifying", "shocking", "outrage"],
        phrases: &[],
    },
    FieldRules {
        label: "Rumour / unverified report",
        words: &["allegedly", "rumour", "rumor", "leaked"],
        phrases: &["sources say", "buried report"],
    },
    FieldRules {
        label: "Opinion / subjective statement",
        words: &["best", "worst", "should", "unfair"],
        phrases: &["i think"],
    },
    FieldRules {
        label: "Announcement",
        words: &["announced", "announcing", "launched", "scheduled"],
        phrases: &["we will add", "is now live"],
    },
    FieldRules {
        label: "Verifiable factual statement",
        words: &["confirmed", "published"],
        phrases: &["according to", "report shows"],
    },
];

static CTA_RULES: &[FieldRules] = &[
    FieldRules {
        label: "Buy / invest / donate",
        words: &["buy", "invest", "donate", "sell"],
        phrases: &["entry at"],
    },
    FieldRules {
        label: "Join/Subscribe",
        words: &["join", "subscribe", "register", "whitelist", "follow"],
        phrases: &[],
    },
    FieldRules {
        label: "Share / repost / like",
        words: &["share", "repost", "retweet"],
        phrases: &[],
    },
    FieldRules {
        label: "Visit external link / watch video",
        words: &["watch", "click"],
        phrases: &["read more", "check out", "see more"],
    },
    FieldRules {
        label: "Attend event / livestream",
        words: &["livestream", "webinar", "ama"],
        phrases: &["live now"],
    },
];

static EVIDENCE_CHART_WORDS: &[&str] = &["chart", "graph", "tradingview"];
static EVIDENCE_QUOTE_PHRASES: &[&str] = &["according to", " said ", "\""];

const DEFAULT_THEME: &str = "Conversation/Chat/Other";
const DEFAULT_CLAIM: &str = "No substantive claim";
const DEFAULT_CTA: &str = "No CTA";
const DEFAULT_EVIDENCE: &str = "None / assertion only";

fn token_set(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn rule_matches(rule: &FieldRules, lowered: &str, tokens: &[String]) -> bool {
    rule.words.iter().any(|w| tokens.iter().any(|t| t == w))
        || rule.phrases.iter().any(|p| lowered.contains(p))
}

fn digit_run_regex() -> &'static regex::Regex {
    static RE: OnceLock<regex::Regex> = OnceLock::new();
    RE.get_or_init(|| regex::Regex::new(r"\d{2,}|\d+%|\$\d").expect("static regex"))
}

/// The deterministic mock tagger: a pure function of the masked text.
pub fn mock_tag(masked: &MaskedText, vocab: &Vocabulary) -> TagAssignment {
    let lowered = masked.text.to_lowercase();
    let tokens = token_set(&lowered);

    let mut theme: Vec<String> = THEME_RULES
        .iter()
        .filter(|r| rule_matches(r, &lowered, &tokens))
        .take(2)
        .map(|r| r.label.to_string())
        .collect();
    if theme.is_empty() {
        theme.push(DEFAULT_THEME.to_string());
    }

    let mut claim: Vec<String> = Vec::new();
    for rule in CLAIM_RULES {
        if claim.len() == 3 {
            break;
        }
        if !rule_matches(rule, &lowered, &tokens) {
            continue;
        }
        // Precedence plus forbidden pairs: earlier matches win, later
        // conflicting ones are skipped.
        let conflicts = match rule.label {
            "Verifiable factual statement" => claim
                .iter()
                .any(|c| c == "Rumour / unverified report" || c == "Announcement"),
            _ => false,
        };
        if !conflicts {
            claim.push(rule.label.to_string());
        }
    }
    if claim.is_empty() {
        claim.push(DEFAULT_CLAIM.to_string());
    }

    let mut cta: Vec<String> = CTA_RULES
        .iter()
        .filter(|r| rule_matches(r, &lowered, &tokens))
        .map(|r| r.label.to_string())
        .collect();
    if lowered.contains('?') && !cta.iter().any(|c| c == "Engage/Ask questions") {
        cta.push("Engage/Ask questions".to_string());
    }
    if cta.is_empty() {
        cta.push(DEFAULT_CTA.to_string());
    }

    let mut evidence: Vec<String> = Vec::new();
    if masked.text.contains(URL_MASK_TOKEN) {
        evidence.push("Link/URL".to_string());
    }
    if EVIDENCE_CHART_WORDS
        .iter()
        .any(|w| tokens.iter().any(|t| t == w))
    {
        evidence.push("Chart / price graph / TA diagram".to_string());
    }
    if digit_run_regex().is_match(&lowered) || lowered.contains('%') {
        evidence.push("Statistics".to_string());
    }
    if EVIDENCE_QUOTE_PHRASES.iter().any(|p| lowered.contains(p)) {
        evidence.push("Quotes/Testimony".to_string());
    }
    if evidence.is_empty() {
        evidence.push(DEFAULT_EVIDENCE.to_string());
    }

    let mut assignment = TagAssignment::new(theme, claim, cta, evidence);
    assignment.canonicalize(vocab);
    assignment
}
