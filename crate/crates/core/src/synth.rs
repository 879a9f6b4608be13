//! Seeded synthetic corpora.
//!
//! Three generators back the demo subcommand and the verification suite:
//!
//! * [`generate_experiment`] - in-memory tag assignments whose bits carry
//!   the label signal, with domain pools matching the supervision scheme
//!   (domain determines label, tags predict it). Profile `CtaOnly` confines
//!   the signal to the CTA field.
//! * [`generate_corpus_files`] - a full file-based corpus: raw message
//!   JSONL with embedded URLs, keyword phrasing aligned with the mock
//!   tagger's rule table, planted forwarded and near duplicates, a rating
//!   dump CSV, a redirect fixture, and a synthetic embedding file.
//! * [`generate_dedup_corpus`] - small corpora with planted duplicate and
//!   paraphrase pairs for clustering verification.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::Path;

use crate::codebook::{TagAssignment, ValidationConfig, Vocabulary};
use crate::corpus::RawMessage;
use crate::eval::ExperimentData;
use crate::features::{fit_tag_index, tag_feature_set, write_embeddings, IndexMode, TagIndex};

/// Where the label signal lives in generated tag assignments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalProfile {
    /// Every field carries signal (near-saturated separability).
    AllFields,
    /// Only CTA bits separate the classes; other fields are label-blind.
    CtaOnly,
}

#[derive(Debug, Clone)]
pub struct SynthExperimentConfig {
    pub n_messages: usize,
    /// Rated domains per class pool.
    pub domains_per_class: usize,
    pub n_channels: usize,
    pub seed: u64,
    pub profile: SignalProfile,
}

impl Default for SynthExperimentConfig {
    fn default() -> Self {
        SynthExperimentConfig {
            n_messages: 10_000,
            domains_per_class: 30,
            n_channels: 12,
            seed: 7,
            profile: SignalProfile::AllFields,
        }
    }
}

pub struct SynthExperiment {
    pub ids: Vec<String>,
    pub labels: Vec<u8>,
    pub domains: Vec<String>,
    pub channels: Vec<String>,
    pub assignments: Vec<TagAssignment>,
    pub index: TagIndex,
}

impl SynthExperiment {
    /// Package into harness input with the tag representation attached.
    pub fn into_experiment_data(self) -> ExperimentData {
        let set = tag_feature_set(&self.assignments, &self.ids, &self.index);
        ExperimentData {
            ids: self.ids,
            labels: self.labels,
            domains: self.domains,
            channels: self.channels,
            representations: vec![("tags".to_string(), crate::eval::RepresentationSource::Precomputed(set))],
        }
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, options: &[(&'a str, f64)]) -> &'a str {
    let weights: Vec<f64> = options.iter().map(|(_, w)| *w).collect();
    let index = WeightedIndex::new(&weights).expect("positive weights");
    options[index.sample(rng)].0
}

fn risky_assignment(rng: &mut ChaCha8Rng, vocab: &Vocabulary) -> TagAssignment {
    let theme = pick(
        rng,
        &[
            ("Finance/Crypto", 0.65),
            ("Gaming/Gambling", 0.15),
            ("News/Information", 0.08),
            ("Conversation/Chat/Other", 0.12),
        ],
    );
    let mut claim = Vec::new();
    if rng.gen_bool(0.55) {
        claim.push("Promotional hype / exaggerated profit guarantee");
    }
    if rng.gen_bool(0.50) {
        claim.push("Scarcity/FOMO tactic");
    }
    if claim.len() < 3 && rng.gen_bool(0.25) {
        claim.push("Speculative forecast / prediction");
    }
    if claim.len() < 3 && rng.gen_bool(0.10) {
        claim.push("Verifiable factual statement");
    }
    if claim.is_empty() {
        claim.push("Opinion / subjective statement");
    }
    claim.truncate(3);
    let mut cta = Vec::new();
    if rng.gen_bool(0.60) {
        cta.push("Buy / invest / donate");
    }
    if rng.gen_bool(0.45) {
        cta.push("Join/Subscribe");
    }
    if rng.gen_bool(0.08) {
        cta.push("Engage/Ask questions");
    }
    if cta.is_empty() {
        cta.push("No CTA");
    }
    let mut evidence = Vec::new();
    if rng.gen_bool(0.60) {
        evidence.push("Link/URL");
    }
    if rng.gen_bool(0.40) {
        evidence.push("Chart / price graph / TA diagram");
    }
    if rng.gen_bool(0.30) {
        evidence.push("Statistics");
    }
    if evidence.is_empty() {
        evidence.push("None / assertion only");
    }
    build_assignment(vocab, &[theme], &claim, &cta, &evidence)
}

fn safe_assignment(rng: &mut ChaCha8Rng, vocab: &Vocabulary) -> TagAssignment {
    let theme = pick(
        rng,
        &[
            ("News/Information", 0.42),
            ("Technology", 0.30),
            ("Conversation/Chat/Other", 0.18),
            ("Finance/Crypto", 0.10),
        ],
    );
    let primary = pick(
        rng,
        &[
            ("Verifiable factual statement", 0.50),
            ("Announcement", 0.25),
            ("Opinion / subjective statement", 0.20),
            ("No substantive claim", 0.05),
        ],
    );
    let mut claim = vec![primary];
    if primary != "No substantive claim" && rng.gen_bool(0.04) {
        claim.push("Scarcity/FOMO tactic");
    }
    let mut cta = Vec::new();
    if rng.gen_bool(0.30) {
        cta.push("Engage/Ask questions");
    }
    if rng.gen_bool(0.25) {
        cta.push("Visit external link / watch video");
    }
    if rng.gen_bool(0.03) {
        cta.push("Buy / invest / donate");
    }
    if rng.gen_bool(0.05) {
        cta.push("Join/Subscribe");
    }
    if cta.is_empty() {
        cta.push("No CTA");
    }
    let mut evidence = Vec::new();
    if rng.gen_bool(0.45) {
        evidence.push("Link/URL");
    }
    if rng.gen_bool(0.25) {
        evidence.push("Quotes/Testimony");
    }
    if rng.gen_bool(0.12) {
        evidence.push("Statistics");
    }
    if rng.gen_bool(0.03) {
        evidence.push("Chart / price graph / TA diagram");
    }
    if evidence.is_empty() {
        evidence.push("None / assertion only");
    }
    build_assignment(vocab, &[theme], &claim, &cta, &evidence)
}

/// Label-blind fields with label-dependent CTA.
fn cta_only_assignment(rng: &mut ChaCha8Rng, vocab: &Vocabulary, label: u8) -> TagAssignment {
    let theme = pick(
        rng,
        &[
            ("News/Information", 0.30),
            ("Finance/Crypto", 0.30),
            ("Technology", 0.20),
            ("Sports", 0.20),
        ],
    );
    let claim = pick(
        rng,
        &[
            ("Verifiable factual statement", 0.40),
            ("Opinion / subjective statement", 0.35),
            ("Announcement", 0.25),
        ],
    );
    let mut cta = Vec::new();
    if label == 1 {
        if rng.gen_bool(0.75) {
            cta.push("Buy / invest / donate");
        }
        if rng.gen_bool(0.40) {
            cta.push("Join/Subscribe");
        }
    } else {
        if rng.gen_bool(0.05) {
            cta.push("Buy / invest / donate");
        }
        if rng.gen_bool(0.10) {
            cta.push("Join/Subscribe");
        }
        if rng.gen_bool(0.35) {
            cta.push("Engage/Ask questions");
        }
    }
    if cta.is_empty() {
        cta.push("No CTA");
    }
    let evidence = pick(
        rng,
        &[
            ("Link/URL", 0.45),
            ("None / assertion only", 0.40),
            ("Statistics", 0.15),
        ],
    );
    build_assignment(vocab, &[theme], &[claim], &cta, &[evidence])
}

fn build_assignment(
    vocab: &Vocabulary,
    theme: &[&str],
    claim: &[&str],
    cta: &[&str],
    evidence: &[&str],
) -> TagAssignment {
    let mut assignment = TagAssignment::new(
        theme.iter().map(|s| s.to_string()).collect(),
        claim.iter().map(|s| s.to_string()).collect(),
        cta.iter().map(|s| s.to_string()).collect(),
        evidence.iter().map(|s| s.to_string()).collect(),
    );
    assignment.canonicalize(vocab);
    debug_assert!(
        crate::codebook::validate_assignment(&assignment, vocab, &ValidationConfig::default())
            .is_empty(),
        "generator produced invalid assignment: {assignment:?}"
    );
    assignment
}

/// Generate a labeled tag dataset in which tag bits determine risk.
pub fn generate_experiment(config: &SynthExperimentConfig) -> SynthExperiment {
    let vocab = Vocabulary::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_messages;
    let mut ids = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut domains = Vec::with_capacity(n);
    let mut channels = Vec::with_capacity(n);
    let mut assignments = Vec::with_capacity(n);
    for i in 0..n {
        let label = u8::from(rng.gen_bool(0.5));
        let assignment = match config.profile {
            SignalProfile::AllFields => {
                if label == 1 {
                    risky_assignment(&mut rng, vocab)
                } else {
                    safe_assignment(&mut rng, vocab)
                }
            }
            SignalProfile::CtaOnly => cta_only_assignment(&mut rng, vocab, label),
        };
        let pool = if label == 1 { "risk" } else { "safe" };
        let domain = format!("{pool}{}.example", rng.gen_range(0..config.domains_per_class));
        ids.push(format!("m{i:06}"));
        labels.push(label);
        domains.push(domain);
        channels.push(format!("ch{:02}", rng.gen_range(0..config.n_channels)));
        assignments.push(assignment);
    }
    let index = fit_tag_index(&assignments, vocab, IndexMode::FullVocabulary)
        .expect("non-empty generated assignments");
    SynthExperiment {
        ids,
        labels,
        domains,
        channels,
        assignments,
        index,
    }
}

// ---------------------------------------------------------------------------
// File-based demo corpus
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SynthCorpusConfig {
    pub n_messages: usize,
    pub weeks: usize,
    pub domains_per_class: usize,
    pub n_channels: usize,
    pub seed: u64,
    pub embedding_dim: usize,
}

impl Default for SynthCorpusConfig {
    fn default() -> Self {
        SynthCorpusConfig {
            n_messages: 6000,
            weeks: 10,
            domains_per_class: 15,
            n_channels: 12,
            seed: 7,
            embedding_dim: 8,
        }
    }
}

/// Paths of the files a corpus generation run writes.
#[derive(Debug, Clone)]
pub struct SynthCorpusFiles {
    pub messages: std::path::PathBuf,
    pub ratings: std::path::PathBuf,
    pub redirects: std::path::PathBuf,
    pub embeddings: std::path::PathBuf,
}

const RISKY_PHRASES: &[&str] = &[
    "buy now before the presale closes",
    "guaranteed 10x profit on this coin",
    "last chance to join the whitelist",
    "limited time airdrop ends today",
    "watch the chart on tradingview",
    "entry at 42000 usdt target soon",
    "5000 usdt prize pool do not miss",
    "invest in the new token launch",
];

const SAFE_PHRASES: &[&str] = &[
    "the committee confirmed the quarterly report according to the minutes",
    "software update released for the server api",
    "we will add the feature in docker next release",
    "published figures show steady adoption this quarter",
    "what do you all think about the latest announcement?",
    "the maintainers scheduled the community call for next week",
    "reply with your feedback on the new policy draft",
    "news roundup covering the technology sector today",
];

const FILLER_WORDS: &[&str] = &[
    "meanwhile",
    "overall",
    "currently",
    "reportedly",
    "finally",
    "however",
    "elsewhere",
    "separately",
    "notably",
    "briefly",
];

/// Monday 2025-01-06 00:00:00 UTC.
const DEMO_EPOCH: i64 = 1_736_121_600;

/// Write the demo corpus files and return their paths. Deterministic per
/// seed; the texts are phrased so the rule-based mock tagger recovers the
/// planted signal and every risky message links a high-risk domain.
pub fn generate_corpus_files(
    config: &SynthCorpusConfig,
    dir: &Path,
) -> std::io::Result<SynthCorpusFiles> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    std::fs::create_dir_all(dir)?;

    let risky_domains: Vec<String> = (0..config.domains_per_class)
        .map(|i| format!("risk{i}.example"))
        .collect();
    let safe_domains: Vec<String> = (0..config.domains_per_class)
        .map(|i| format!("safe{i}.example"))
        .collect();
    let fuzzy_domains: Vec<String> = (0..3).map(|i| format!("fuzzy{i}.example")).collect();
    let unrated_domains: Vec<String> = (0..3).map(|i| format!("unrated{i}.example")).collect();

    // Rating dump: safe pool maps to R <= 0.3, risky pool to R >= 0.8,
    // fuzzy pool to the unlabeled band. A couple of alias rows exercise
    // canonicalization.
    let mut ratings =
        String::from("domain,credibility,factual_reporting,bias,media_type,country\n");
    for (i, domain) in safe_domains.iter().enumerate() {
        let factual = if i % 2 == 0 { "Very High" } else { "High" };
        let _ = writeln!(ratings, "{domain},High,{factual},least biased,website,US");
    }
    for (i, domain) in risky_domains.iter().enumerate() {
        let (credibility, factual) = match i % 3 {
            0 => ("Low", "Very Low"),
            1 => ("Low", "Low"),
            _ => ("Medium", "Very Low"),
        };
        let _ = writeln!(ratings, "{domain},{credibility},{factual},questionable,website,");
        if i == 0 {
            // Conflicting alias rows; the modal pair must win.
            let _ = writeln!(ratings, "www.{domain},Low,Very Low,questionable,website,");
            let _ = writeln!(ratings, "{domain},High,High,questionable,website,");
        }
    }
    for domain in &fuzzy_domains {
        let _ = writeln!(ratings, "{domain},Medium,Mixed,center,website,");
    }
    let ratings_path = dir.join("ratings.csv");
    std::fs::write(&ratings_path, ratings)?;

    // Redirect fixture: shortener entries pointing at pool domains.
    let mut redirects = String::from("pattern,target\n");
    let shortener_targets: Vec<String> = (0..20)
        .map(|i| {
            let target = if i % 2 == 0 {
                &risky_domains[i % risky_domains.len()]
            } else {
                &safe_domains[i % safe_domains.len()]
            };
            let _ = writeln!(redirects, "t.ly/s{i},https://{target}/via-shortener");
            format!("https://t.ly/s{i}")
        })
        .collect();
    let redirects_path = dir.join("redirects.csv");
    std::fs::write(&redirects_path, redirects)?;

    let mut messages: Vec<RawMessage> = Vec::with_capacity(config.n_messages + 64);
    let mut embeddings: Vec<(String, Vec<f64>)> = Vec::new();
    let per_week = (config.n_messages / config.weeks.max(1)).max(1);
    let burst_week = config.weeks.saturating_sub(2);
    let mut counter = 0usize;

    for week in 0..config.weeks {
        // The burst week raises risky volume: a planted spike for the
        // burstiness and drift series.
        let week_volume = if week == burst_week {
            per_week + per_week / 2
        } else {
            per_week
        };
        for _ in 0..week_volume {
            let risky = if week == burst_week {
                rng.gen_bool(0.65)
            } else {
                rng.gen_bool(0.45)
            };
            let id = format!("msg{counter:07}");
            let channel = format!("ch{:02}", rng.gen_range(0..config.n_channels));
            let timestamp = DEMO_EPOCH
                + (week as i64) * 7 * 86_400
                + rng.gen_range(0..7 * 86_400) as i64;

            let (pool, phrases): (&[String], &[&str]) = if risky {
                (&risky_domains, RISKY_PHRASES)
            } else {
                (&safe_domains, SAFE_PHRASES)
            };
            let mut parts: Vec<String> = Vec::new();
            let n_phrases = rng.gen_range(1..=2);
            for _ in 0..n_phrases {
                parts.push(phrases[rng.gen_range(0..phrases.len())].to_string());
            }
            // Mild cross-talk keeps the task non-degenerate.
            if rng.gen_bool(0.08) {
                let other: &[&str] = if risky { SAFE_PHRASES } else { RISKY_PHRASES };
                parts.push(other[rng.gen_range(0..other.len())].to_string());
            }
            parts.push(FILLER_WORDS[rng.gen_range(0..FILLER_WORDS.len())].to_string());

            // URL placement: shortened, bare, fuzzy, unrated, or direct.
            let url = match rng.gen_range(0..10) {
                0 => shortener_targets[rng.gen_range(0..shortener_targets.len())].clone(),
                1 => pool[rng.gen_range(0..pool.len())].clone(),
                2 if !risky => format!("https://{}/story", fuzzy_domains[rng.gen_range(0..3)]),
                3 if !risky => format!("https://{}/post", unrated_domains[rng.gen_range(0..3)]),
                _ => format!(
                    "https://{}/p/{}",
                    pool[rng.gen_range(0..pool.len())],
                    counter
                ),
            };
            parts.push(url);
            let text = parts.join(" ");

            // Embedding: label-centered vector plus noise, so the
            // embedding representation carries its own signal.
            let mut vector = vec![0.0f64; config.embedding_dim];
            for (j, slot) in vector.iter_mut().enumerate() {
                let center = if risky { 0.6 } else { -0.6 };
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                *slot = center * sign + rng.gen_range(-0.8..0.8);
            }
            embeddings.push((id.clone(), vector));

            messages.push(RawMessage {
                id,
                channel_id: channel,
                timestamp,
                text,
                fwd_id: None,
            });
            counter += 1;
        }
    }

    // Planted near-duplicates: copy with one filler token appended, posted
    // later from another channel.
    let dup_count = config.n_messages / 25;
    for d in 0..dup_count {
        let source = messages[rng.gen_range(0..messages.len())].clone();
        let mut text = source.text.clone();
        text.push(' ');
        text.push_str(FILLER_WORDS[rng.gen_range(0..FILLER_WORDS.len())]);
        let id = format!("dup{d:05}");
        if let Some(vector) = embeddings.iter().find(|(i, _)| *i == source.id) {
            embeddings.push((id.clone(), vector.1.clone()));
        }
        messages.push(RawMessage {
            id,
            channel_id: format!("ch{:02}", rng.gen_range(0..config.n_channels)),
            timestamp: source.timestamp + rng.gen_range(60..86_400) as i64,
            text,
            fwd_id: None,
        });
    }

    // Forwarded exact duplicates.
    let fwd_count = config.n_messages / 50;
    for f in 0..fwd_count {
        let source = messages[rng.gen_range(0..config.n_messages)].clone();
        let fwd_id = format!("fwd{f:04}");
        for copy in 0..2 {
            let id = format!("fw{f:04}c{copy}");
            if let Some(vector) = embeddings.iter().find(|(i, _)| *i == source.id) {
                embeddings.push((id.clone(), vector.1.clone()));
            }
            messages.push(RawMessage {
                id,
                channel_id: format!("ch{:02}", rng.gen_range(0..config.n_channels)),
                timestamp: source.timestamp + 3600 * (copy as i64 + 1),
                text: source.text.clone(),
                fwd_id: Some(fwd_id.clone()),
            });
        }
    }

    // Low-information noise, dropped at ingest.
    for j in 0..config.n_messages / 50 {
        messages.push(RawMessage {
            id: format!("low{j:04}"),
            channel_id: format!("ch{:02}", rng.gen_range(0..config.n_channels)),
            timestamp: DEMO_EPOCH + rng.gen_range(0..config.weeks.max(1) * 7 * 86_400) as i64,
            text: if j % 2 == 0 { "ok" } else { ":) !!!" }.to_string(),
            fwd_id: None,
        });
    }

    let messages_path = dir.join("messages.jsonl");
    crate::artifact::write_jsonl(&messages_path, &messages)
        .map_err(|e| std::io::Error::other(e.to_string()))?;

    let embeddings_path = dir.join("embeddings.csv");
    write_embeddings(&embeddings_path, config.embedding_dim, &embeddings)?;

    Ok(SynthCorpusFiles {
        messages: messages_path,
        ratings: ratings_path,
        redirects: redirects_path,
        embeddings: embeddings_path,
    })
}

// ---------------------------------------------------------------------------
// Dedup verification corpora
// ---------------------------------------------------------------------------

fn random_word(rng: &mut ChaCha8Rng) -> String {
    let len = rng.gen_range(4..10);
    (0..len)
        .map(|_| char::from(b'a' + rng.gen_range(0..26u8)))
        .collect()
}

/// A corpus with planted exact duplicates, light paraphrases (one token
/// swapped), heavier rewrites (below the merge thresholds), and a few
/// sub-shingle-length messages.
pub fn generate_dedup_corpus(seed: u64, n_bases: usize) -> Vec<RawMessage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab: Vec<String> = (0..400).map(|_| random_word(&mut rng)).collect();
    let mut messages = Vec::new();
    let mut counter = 0;
    let mut push = |rng: &mut ChaCha8Rng, counter: &mut usize, text: String| {
        messages.push(RawMessage {
            id: format!("m{:04}", *counter),
            channel_id: format!("ch{}", *counter % 6),
            timestamp: 1000 + *counter as i64,
            text,
            fwd_id: if rng.gen_bool(0.05) {
                Some(format!("src{}", *counter % 9))
            } else {
                None
            },
        });
        *counter += 1;
    };
    for b in 0..n_bases {
        let len = rng.gen_range(12..30);
        let base: Vec<String> = (0..len)
            .map(|_| vocab[rng.gen_range(0..vocab.len())].clone())
            .collect();
        push(&mut rng, &mut counter, base.join(" "));
        match b % 5 {
            0 => {
                // Exact duplicate.
                push(&mut rng, &mut counter, base.join(" "));
            }
            1 => {
                // Light paraphrase: one token swapped; above the Jaccard
                // threshold at these lengths.
                let mut copy = base.clone();
                let pos = rng.gen_range(0..copy.len());
                copy[pos] = vocab[rng.gen_range(0..vocab.len())].clone();
                push(&mut rng, &mut counter, copy.join(" "));
            }
            2 => {
                // Heavy rewrite: half the tokens replaced; stays separate.
                let mut copy = base.clone();
                for _ in 0..copy.len() / 2 {
                    let pos = rng.gen_range(0..copy.len());
                    copy[pos] = vocab[rng.gen_range(0..vocab.len())].clone();
                }
                push(&mut rng, &mut counter, copy.join(" "));
            }
            3 => {
                // Sub-shingle-length message: exact-only fallback.
                push(
                    &mut rng,
                    &mut counter,
                    format!("{} {}", base[0], base[1 % base.len()]),
                );
            }
            _ => {}
        }
    }
    messages
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::validate_assignment;

    #[test]
    fn experiment_generator_is_deterministic_and_valid() {
        let config = SynthExperimentConfig {
            n_messages: 500,
            ..SynthExperimentConfig::default()
        };
        let a = generate_experiment(&config);
        let b = generate_experiment(&config);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.assignments, b.assignments);
        let vocab = Vocabulary::builtin();
        let validation = ValidationConfig::default();
        for assignment in &a.assignments {
            assert!(validate_assignment(assignment, vocab, &validation).is_empty());
        }
        // Domain pools track labels exactly.
        for (label, domain) in a.labels.iter().zip(&a.domains) {
            let expected_prefix = if *label == 1 { "risk" } else { "safe" };
            assert!(domain.starts_with(expected_prefix));
        }
    }

    #[test]
    fn cta_only_profile_keeps_other_fields_label_blind() {
        let config = SynthExperimentConfig {
            n_messages: 4000,
            profile: SignalProfile::CtaOnly,
            seed: 9,
            ..SynthExperimentConfig::default()
        };
        let experiment = generate_experiment(&config);
        // Theme distribution per label should be close: compare the
        // Finance/Crypto rate across classes.
        let mut finance = [0usize; 2];
        let mut totals = [0usize; 2];
        for (label, assignment) in experiment.labels.iter().zip(&experiment.assignments) {
            totals[*label as usize] += 1;
            if assignment.theme.iter().any(|t| t == "Finance/Crypto") {
                finance[*label as usize] += 1;
            }
        }
        let rate0 = finance[0] as f64 / totals[0] as f64;
        let rate1 = finance[1] as f64 / totals[1] as f64;
        assert!((rate0 - rate1).abs() < 0.06, "theme leaked: {rate0} vs {rate1}");
    }

    #[test]
    fn corpus_files_are_written_and_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let config = SynthCorpusConfig {
            n_messages: 400,
            weeks: 4,
            ..SynthCorpusConfig::default()
        };
        let files = generate_corpus_files(&config, dir.path()).unwrap();
        let first = std::fs::read_to_string(&files.messages).unwrap();
        let files2 = generate_corpus_files(&config, dir.path()).unwrap();
        let second = std::fs::read_to_string(&files2.messages).unwrap();
        assert_eq!(first, second, "generator must be byte-deterministic");
        assert!(files.ratings.is_file());
        assert!(files.redirects.is_file());
        assert!(files.embeddings.is_file());
        let messages: Vec<RawMessage> = crate::artifact::read_jsonl(&files.messages).unwrap();
        assert!(messages.len() > 400);
        assert!(messages.iter().any(|m| m.fwd_id.is_some()));
        assert!(messages.iter().any(|m| m.text.contains("t.ly/")));
    }

    #[test]
    fn dedup_corpus_plants_duplicates() {
        let messages = generate_dedup_corpus(3, 50);
        assert!(messages.len() > 50);
        // At least one exact duplicate pair exists.
        let mut texts: Vec<&str> = messages.iter().map(|m| m.text.as_str()).collect();
        texts.sort_unstable();
        let has_dup = texts.windows(2).any(|w| w[0] == w[1]);
        assert!(has_dup);
        // Deterministic.
        let again = generate_dedup_corpus(3, 50);
        assert_eq!(messages.len(), again.len());
        assert_eq!(messages[0].text, again[0].text);
    }
}
