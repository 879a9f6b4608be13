//! Stage implementations behind the subcommands.
//!
//! Artifact layout under the output directory:
//!
//! ```text
//! resolved_config.toml      ingest.meta.json, dedup.meta.json, ...
//! normalized.jsonl          (ingest)
//! clean.jsonl               cluster_audit.csv        (dedup)
//! urls.jsonl                                        (urls)
//! supervision.jsonl                                 (supervise)
//! tags.jsonl                                        (tag)
//! features_tags.fmat.gz     tag_index.json          (featurize)
//! model.json                scored.jsonl            (train)
//! evaluate_report.{json,csv}  predictions_<repr>.jsonl  (evaluate)
//! ablation.{json,csv}       stress.csv              (ablate, stress)
//! enrichment.csv prototypes.csv family_assignments.csv
//! drift.csv bursts.csv monitor_summary.json         (monitor)
//! report.json report.csv                            (report)
//! ```
//!
//! Each stage validates its inputs, writes deterministically, and records
//! provenance(config hash + input/output digests) in `<stage>.meta.json`.

use anyhow::{bail, Context as _};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::time::Duration;

use tagrisk_core::artifact::{
    read_jsonl, require_input, write_jsonl, AuditRecord, StageMeta,
};
use tagrisk_core::codebook::{parse_tagger_output, Field, TagAssignment, Vocabulary};
use tagrisk_core::config::PipelineConfig;
use tagrisk_core::corpus::{
    cluster_near_duplicates, compute_fingerprints, drop_forwarded_duplicates, exact_prints,
    normalize_corpus, CleanMessage, MessagePrints, NormalizedMessage, RawMessage,
};
use tagrisk_core::eval::{
    ablation_suite, noise_stress, run_experiment, standard_ablation_subsets, ExperimentConfig,
    ExperimentData, GroupKind, MetricsReport, RepresentationSource, SplitConfig,
};
use tagrisk_core::features::{
    embedding_matrix, fit_standardizer, fit_tag_index, fit_tfidf, load_embeddings, tag_feature_set, EmbeddingTable, FeatureData, FeatureKind, FeatureSet, IndexMode, TagIndex,
    TfidfConfig,
};
use tagrisk_core::learn::{
    ensemble_protocol, full_protocol, EnsembleOutcome, EnsemblePart, LogRegModel,
    PlattCalibrator, ProtocolConfig, TrainedModel,
};
use tagrisk_core::monitor::{
    build_prototypes, cluster_families, high_risk_tail, log_odds_enrichment, peak_to_median,
    risk_mass, tag_shares, week_key, weekly_family_distributions, weekly_js_drift,
    weekly_tag_shares, KmeansOptions, ScoredMessage,
};
use tagrisk_core::supervision::{
    canonicalize_ratings, load_ratings_csv, normalize_domain, risk_table, supervise_message,
    MbfcRecord, Supervision,
};
use tagrisk_core::tagger::{TagFileRow, Tagger, TaggerMode};
use tagrisk_core::urlkit::{
    mask_urls, process_urls, ExtractedUrl, FixtureResolver, MaskedText, SuffixRules,
};

const NORMALIZED: &str = "normalized.jsonl";
const CLEAN: &str = "clean.jsonl";
const CLUSTER_AUDIT: &str = "cluster_audit.csv";
const URLS: &str = "urls.jsonl";
const SUPERVISION: &str = "supervision.jsonl";
const TAGS: &str = "tags.jsonl";
const TAG_MATRIX: &str = "features_tags.fmat.gz";
const TAG_INDEX: &str = "tag_index.json";
const MODEL: &str = "model.json";
const SCORED: &str = "scored.jsonl";
const EVAL_JSON: &str = "evaluate_report.json";
const EVAL_CSV: &str = "evaluate_report.csv";
const ABLATION_JSON: &str = "ablation.json";
const ABLATION_CSV: &str = "ablation.csv";
const STRESS_CSV: &str = "stress.csv";
const ENRICHMENT_CSV: &str = "enrichment.csv";
const PROTOTYPES_CSV: &str = "prototypes.csv";
const FAMILY_ASSIGNMENTS_CSV: &str = "family_assignments.csv";
const DRIFT_CSV: &str = "drift.csv";
const BURSTS_CSV: &str = "bursts.csv";
const MONITOR_SUMMARY: &str = "monitor_summary.json";
const REPORT_JSON: &str = "report.json";
const REPORT_CSV: &str = "report.csv";

pub struct Context {
    pub config: PipelineConfig,
    pub out_dir: PathBuf,
    pub config_hash: String,
}

impl Context {
    pub fn new(config: PipelineConfig, out_dir: PathBuf) -> anyhow::Result<Context> {
        std::fs::create_dir_all(&out_dir)
            .with_context(|| format!("creating {}", out_dir.display()))?;
        config.write_snapshot(&out_dir)?;
        let config_hash = config.hash();
        Ok(Context {
            config,
            out_dir,
            config_hash,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn suffix_rules(&self) -> anyhow::Result<SuffixRules> {
        Ok(match &self.config.paths.suffix_rules {
            Some(path) => SuffixRules::from_file(path)
                .with_context(|| format!("loading suffix rules from {}", path.display()))?,
            None => SuffixRules::builtin(),
        })
    }

    fn meta(&self, stage: &str) -> StageMeta {
        StageMeta::new(stage, &self.config_hash)
    }

    fn write_audit(&self, stage: &str, records: &[AuditRecord]) -> anyhow::Result<PathBuf> {
        let path = self.path(&format!("{stage}_audit.jsonl"));
        write_jsonl(&path, records)?;
        Ok(path)
    }
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

pub fn ingest(ctx: &Context) -> anyhow::Result<()> {
    let input = &ctx.config.paths.messages;
    require_input(input)?;
    let rules = ctx.suffix_rules()?;
    let raw: Vec<RawMessage> = read_jsonl(input)?;
    let (kept, dropped) = normalize_corpus(&raw, ctx.config.corpus.min_tokens, &rules);

    let out = ctx.path(NORMALIZED);
    write_jsonl(&out, &kept)?;
    let audits: Vec<AuditRecord> = dropped
        .iter()
        .map(|id| AuditRecord::new("ingest", "low_information_dropped", Some(id), ""))
        .collect();
    let audit_path = ctx.write_audit("ingest", &audits)?;

    let mut meta = ctx.meta("ingest");
    meta.add_input("messages", input)?;
    meta.add_output(&out)?;
    if !audits.is_empty() {
        meta.add_output(&audit_path)?;
    }
    meta.write(&ctx.out_dir)?;
    println!(
        "ingest: {} raw -> {} normalized ({} low-information dropped)",
        raw.len(),
        kept.len(),
        dropped.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// dedup
// ---------------------------------------------------------------------------

pub fn dedup(ctx: &Context) -> anyhow::Result<()> {
    let input = ctx.path(NORMALIZED);
    require_input(&input)?;
    let messages: Vec<NormalizedMessage> = read_jsonl(&input)?;
    let total_in = messages.len();
    let (survivors, dropped_fwd) = drop_forwarded_duplicates(messages);

    let params = &ctx.config.corpus.fingerprint;
    use rayon::prelude::*;
    let prints: Vec<MessagePrints> = survivors
        .par_iter()
        .map(|m| match compute_fingerprints(&m.canonical_text, params) {
            Ok(fp) => MessagePrints::Full(fp),
            Err(_) => {
                let (canon_hash, tokenset_hash) = exact_prints(&m.canonical_text);
                MessagePrints::ExactOnly {
                    canon_hash,
                    tokenset_hash,
                }
            }
        })
        .collect();

    let embeddings = match &ctx.config.paths.embeddings {
        Some(path) if path.is_file() => Some(load_embeddings(path)?.as_map().clone()),
        _ => None,
    };
    let result = cluster_near_duplicates(
        &survivors,
        &prints,
        embeddings.as_ref(),
        &ctx.config.corpus.dedup,
    );

    let clean: Vec<CleanMessage> = survivors
        .iter()
        .zip(&result.assignments)
        .map(|(m, a)| CleanMessage {
            id: m.id.clone(),
            channel_id: m.channel_id.clone(),
            timestamp: m.timestamp,
            canonical_text: m.canonical_text.clone(),
            cluster_id: a.cluster_id.clone(),
            kept: a.kept,
        })
        .collect();
    let out = ctx.path(CLEAN);
    write_jsonl(&out, &clean)?;

    // Edge audit: final cluster id, the two merged members, the criterion.
    let cluster_of: HashMap<&str, &str> = result
        .assignments
        .iter()
        .map(|a| (a.message_id.as_str(), a.cluster_id.as_str()))
        .collect();
    let audit_path = ctx.path(CLUSTER_AUDIT);
    {
        let mut writer = csv::Writer::from_path(&audit_path)?;
        writer.write_record(["cluster_id", "from_id", "to_id", "reason"])?;
        for edge in &result.audit {
            writer.write_record([
                cluster_of.get(edge.from_id.as_str()).copied().unwrap_or(""),
                edge.from_id.as_str(),
                edge.to_id.as_str(),
                edge.reason.as_str(),
            ])?;
        }
        writer.flush()?;
    }

    let audits: Vec<AuditRecord> = dropped_fwd
        .iter()
        .map(|id| AuditRecord::new("dedup", "forwarded_duplicate_dropped", Some(id), ""))
        .collect();
    ctx.write_audit("dedup", &audits)?;

    let mut meta = ctx.meta("dedup");
    meta.add_input("normalized", &input)?;
    meta.add_output(&out)?;
    meta.add_output(&audit_path)?;
    meta.write(&ctx.out_dir)?;
    let kept = clean.iter().filter(|m| m.kept).count();
    println!(
        "dedup: {total_in} in, {} forwarded duplicates dropped, {} clusters ({} merges)",
        dropped_fwd.len(),
        kept,
        result.audit.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// urls
// ---------------------------------------------------------------------------

/// Per-message URL-processing record; carries channel and timestamp forward
/// so later stages need only this file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UrlRecord {
    pub message_id: String,
    pub channel_id: String,
    pub timestamp: i64,
    pub masked_text: String,
    pub url_count: usize,
    pub urls: Vec<ExtractedUrl>,
    pub domains: Vec<String>,
}

pub fn urls(ctx: &Context) -> anyhow::Result<()> {
    let input = ctx.path(CLEAN);
    require_input(&input)?;
    let rules = ctx.suffix_rules()?;
    let resolver = match &ctx.config.paths.redirects {
        Some(path) if path.is_file() => FixtureResolver::from_csv(path)?,
        _ => FixtureResolver::new(),
    };

    let clean: Vec<CleanMessage> = read_jsonl(&input)?;
    let mut records = Vec::new();
    let mut audits = Vec::new();
    for message in clean.iter().filter(|m| m.kept) {
        let (urls, warnings, loops) =
            process_urls(&message.canonical_text, &rules, &resolver);
        let masked = mask_urls(&message.canonical_text, &rules);
        for warning in warnings {
            audits.push(AuditRecord::new(
                "urls",
                "canonicalization_warning",
                Some(&message.id),
                serde_json::to_string(&warning).unwrap_or_default(),
            ));
        }
        for resolution in loops {
            audits.push(AuditRecord::new(
                "urls",
                "redirect_loop",
                Some(&message.id),
                format!("stopped at {} after {} hops", resolution.url, resolution.hops),
            ));
        }
        let mut domains: Vec<String> =
            urls.iter().map(|u| u.canonical_domain.clone()).collect();
        domains.sort();
        domains.dedup();
        records.push(UrlRecord {
            message_id: message.id.clone(),
            channel_id: message.channel_id.clone(),
            timestamp: message.timestamp,
            masked_text: masked.text,
            url_count: masked.url_count,
            urls,
            domains,
        });
    }

    let out = ctx.path(URLS);
    write_jsonl(&out, &records)?;
    ctx.write_audit("urls", &audits)?;

    let mut meta = ctx.meta("urls");
    meta.add_input("clean", &input)?;
    meta.add_output(&out)?;
    meta.write(&ctx.out_dir)?;
    let with_urls = records.iter().filter(|r| r.url_count > 0).count();
    println!(
        "urls: {} kept messages, {} with URLs, {} warnings",
        records.len(),
        with_urls,
        audits.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// supervise
// ---------------------------------------------------------------------------

pub fn supervise(ctx: &Context) -> anyhow::Result<()> {
    let urls_path = ctx.path(URLS);
    require_input(&urls_path)?;
    let ratings_path = &ctx.config.paths.ratings;
    require_input(ratings_path)?;
    let rules = ctx.suffix_rules()?;

    let (records, mut audits) = load_ratings_csv(ratings_path)?;
    // Canonicalize rating domains the same way message URLs are.
    let canonical_records: Vec<MbfcRecord> = records
        .into_iter()
        .map(|mut record| {
            let normalized = normalize_domain(&record.domain);
            record.domain = match tagrisk_core::urlkit::canonical_domain(&normalized, &rules) {
                Ok(outcome) => outcome.domain,
                Err(_) => normalized,
            };
            record
        })
        .collect();
    let (ratings, conflict_audits) = canonicalize_ratings(&canonical_records);
    audits.extend(conflict_audits);
    let risk_map = risk_table(&ratings);

    let url_records: Vec<UrlRecord> = read_jsonl(&urls_path)?;
    let thresholds = &ctx.config.supervision.thresholds;
    let mut supervision = Vec::with_capacity(url_records.len());
    for record in &url_records {
        let domains: BTreeSet<String> = record.domains.iter().cloned().collect();
        supervision.push(supervise_message(
            &record.message_id,
            &domains,
            &risk_map,
            thresholds,
        )?);
    }

    let out = ctx.path(SUPERVISION);
    write_jsonl(&out, &supervision)?;
    ctx.write_audit("supervise", &audits)?;

    let mut meta = ctx.meta("supervise");
    meta.add_input("urls", &urls_path)?;
    meta.add_input("ratings", ratings_path)?;
    meta.add_output(&out)?;
    meta.write(&ctx.out_dir)?;

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &supervision {
        *counts
            .entry(match s.label {
                tagrisk_core::Label::Safe => "safe",
                tagrisk_core::Label::Risky => "risky",
                tagrisk_core::Label::Unlabeled => "unlabeled",
                tagrisk_core::Label::NoRatedDomain => "no_rated_domain",
            })
            .or_insert(0) += 1;
    }
    println!(
        "supervise: {} rated domains; labels {:?}",
        risk_map.len(),
        counts
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// tag
// ---------------------------------------------------------------------------

pub fn tag(ctx: &Context) -> anyhow::Result<()> {
    let urls_path = ctx.path(URLS);
    require_input(&urls_path)?;
    let vocab = Vocabulary::builtin();
    let transport: Option<Box<dyn tagrisk_core::net::HttpTransport>> =
        match &ctx.config.tagger.mode {
            TaggerMode::Http { .. } => Some(Box::new(tagrisk_core::net::UreqTransport::new(
                Duration::from_secs(ctx.config.tagger.timeout_secs),
            ))),
            _ => None,
        };
    let tagger = Tagger::new(
        ctx.config.tagger.clone(),
        vocab,
        Default::default(),
        transport,
    )?;

    let url_records: Vec<UrlRecord> = read_jsonl(&urls_path)?;
    let mut rows = Vec::new();
    let mut audits = Vec::new();
    for record in &url_records {
        let masked = MaskedText {
            text: record.masked_text.clone(),
            url_count: record.url_count,
        };
        match tagger.tag_message(&record.message_id, &masked) {
            Ok(assignment) => {
                let doc = assignment.to_schema_json();
                rows.push(TagFileRow {
                    message_id: record.message_id.clone(),
                    theme: doc["theme"].clone(),
                    claim_types: doc["claim_types"].clone(),
                    ctas: doc["ctas"].clone(),
                    evidence: doc["evidence"].clone(),
                });
            }
            Err(error) => audits.push(AuditRecord::new(
                "tag",
                "quarantined",
                Some(&record.message_id),
                error.to_string(),
            )),
        }
    }

    let out = ctx.path(TAGS);
    write_jsonl(&out, &rows)?;
    ctx.write_audit("tag", &audits)?;

    let mut meta = ctx.meta("tag");
    meta.add_input("urls", &urls_path)?;
    meta.add_output(&out)?;
    meta.write(&ctx.out_dir)?;
    println!(
        "tag: {} tagged, {} quarantined",
        rows.len(),
        audits.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// featurize
// ---------------------------------------------------------------------------

fn read_assignments(path: &Path) -> anyhow::Result<Vec<(String, TagAssignment)>> {
    let vocab = Vocabulary::builtin();
    let rows: Vec<TagFileRow> = read_jsonl(path)?;
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let doc = serde_json::json!({
            "theme": row.theme,
            "claim_types": row.claim_types,
            "ctas": row.ctas,
            "evidence": row.evidence,
        });
        let assignment = parse_tagger_output(&doc.to_string(), vocab)
            .with_context(|| format!("tag row {}", row.message_id))?;
        out.push((row.message_id, assignment));
    }
    Ok(out)
}

pub fn featurize(ctx: &Context) -> anyhow::Result<()> {
    let tags_path = ctx.path(TAGS);
    require_input(&tags_path)?;
    let vocab = Vocabulary::builtin();
    let tagged = read_assignments(&tags_path)?;
    if tagged.is_empty() {
        bail!("no tagged messages to featurize");
    }
    let assignments: Vec<TagAssignment> = tagged.iter().map(|(_, a)| a.clone()).collect();
    let ids: Vec<String> = tagged.iter().map(|(id, _)| id.clone()).collect();
    let index = fit_tag_index(&assignments, vocab, IndexMode::FullVocabulary)?;
    let set = tag_feature_set(&assignments, &ids, &index);

    let matrix_path = ctx.path(TAG_MATRIX);
    set.write(&matrix_path)?;
    let index_path = ctx.path(TAG_INDEX);
    std::fs::write(&index_path, serde_json::to_string_pretty(&index)?)?;

    let mut meta = ctx.meta("featurize");
    meta.add_input("tags", &tags_path)?;
    meta.add_output(&matrix_path)?;
    meta.add_output(&index_path)?;

    if let Some(path) = &ctx.config.paths.embeddings {
        require_input(path)?;
        let table = load_embeddings(path)?;
        let missing = ids.iter().filter(|id| table.get(id).is_none()).count();
        if missing > 0 {
            bail!("embeddings file lacks vectors for {missing} tagged messages");
        }
        meta.add_input("embeddings", path)?;
        println!(
            "featurize: embeddings cover all {} ids (dim {})",
            ids.len(),
            table.dim
        );
    }
    meta.write(&ctx.out_dir)?;
    println!(
        "featurize: {} x {} tag matrix ({} labels)",
        set.nrows(),
        set.ncols(),
        vocab.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// shared assembly for train / evaluate / ablate / stress
// ---------------------------------------------------------------------------

struct Assembled {
    ids: Vec<String>,
    channels: Vec<String>,
    timestamps: Vec<i64>,
    masked: Vec<MaskedText>,
    assignments: Vec<TagAssignment>,
    supervision: HashMap<String, Supervision>,
    index: TagIndex,
    tag_set: FeatureSet,
    embeddings: Option<EmbeddingTable>,
    /// Rows (into the vectors above) with high-confidence binary labels.
    labeled_rows: Vec<usize>,
}

impl Assembled {
    fn labels(&self) -> Vec<u8> {
        self.labeled_rows
            .iter()
            .map(|&i| {
                self.supervision[&self.ids[i]]
                    .label
                    .as_binary()
                    .expect("labeled rows are binary")
            })
            .collect()
    }

    fn domains(&self) -> Vec<String> {
        self.labeled_rows
            .iter()
            .map(|&i| {
                self.supervision[&self.ids[i]]
                    .supervising_domain
                    .clone()
                    .expect("labeled rows have a supervising domain")
            })
            .collect()
    }

    fn labeled_ids(&self) -> Vec<String> {
        self.labeled_rows.iter().map(|&i| self.ids[i].clone()).collect()
    }

    fn labeled_channels(&self) -> Vec<String> {
        self.labeled_rows
            .iter()
            .map(|&i| self.channels[i].clone())
            .collect()
    }

    /// A representation source over the labeled subset.
    fn source(&self, part: &str, ctx: &Context) -> anyhow::Result<RepresentationSource> {
        match part {
            "tags" => Ok(RepresentationSource::Precomputed(
                self.tag_set.gather(&self.labeled_rows),
            )),
            "tfidf" => Ok(RepresentationSource::TfidfTexts {
                texts: self
                    .labeled_rows
                    .iter()
                    .map(|&i| self.masked[i].clone())
                    .collect(),
                config: TfidfConfig {
                    max_vocab: ctx.config.training.tfidf_max_vocab,
                    ..TfidfConfig::default()
                },
            }),
            "embedding" => {
                let table = self
                    .embeddings
                    .as_ref()
                    .context("representation 'embedding' needs paths.embeddings")?;
                Ok(RepresentationSource::from_embeddings(
                    &self.labeled_ids(),
                    table,
                )?)
            }
            other => bail!("unknown representation part {other:?}"),
        }
    }

    fn experiment_data(&self, spec: &str, ctx: &Context) -> anyhow::Result<ExperimentData> {
        let mut representations = Vec::new();
        for part in spec.split('+') {
            let part = part.trim();
            representations.push((part.to_string(), self.source(part, ctx)?));
        }
        Ok(ExperimentData {
            ids: self.labeled_ids(),
            labels: self.labels(),
            domains: self.domains(),
            channels: self.labeled_channels(),
            representations,
        })
    }
}

fn assemble(ctx: &Context) -> anyhow::Result<Assembled> {
    for name in [URLS, SUPERVISION, TAGS, TAG_MATRIX, TAG_INDEX] {
        require_input(&ctx.path(name))?;
    }
    let url_records: Vec<UrlRecord> = read_jsonl(&ctx.path(URLS))?;
    let by_id: HashMap<&str, &UrlRecord> = url_records
        .iter()
        .map(|r| (r.message_id.as_str(), r))
        .collect();
    let supervision_rows: Vec<Supervision> = read_jsonl(&ctx.path(SUPERVISION))?;
    let supervision: HashMap<String, Supervision> = supervision_rows
        .into_iter()
        .map(|s| (s.message_id.clone(), s))
        .collect();

    let tag_set = FeatureSet::read(&ctx.path(TAG_MATRIX))?;
    let mut index: TagIndex = serde_json::from_str(&std::fs::read_to_string(ctx.path(TAG_INDEX))?)?;
    index.rehydrate();
    let tagged = read_assignments(&ctx.path(TAGS))?;
    let assignment_of: HashMap<&str, &TagAssignment> =
        tagged.iter().map(|(id, a)| (id.as_str(), a)).collect();

    let mut ids = Vec::new();
    let mut channels = Vec::new();
    let mut timestamps = Vec::new();
    let mut masked = Vec::new();
    let mut assignments = Vec::new();
    for id in &tag_set.ids {
        let record = by_id
            .get(id.as_str())
            .with_context(|| format!("message {id} in tag matrix but not in {URLS}"))?;
        let assignment = assignment_of
            .get(id.as_str())
            .with_context(|| format!("message {id} in tag matrix but not in {TAGS}"))?;
        ids.push(id.clone());
        channels.push(record.channel_id.clone());
        timestamps.push(record.timestamp);
        masked.push(MaskedText {
            text: record.masked_text.clone(),
            url_count: record.url_count,
        });
        assignments.push((*assignment).clone());
    }

    let labeled_rows: Vec<usize> = ids
        .iter()
        .enumerate()
        .filter(|(_, id)| {
            supervision
                .get(*id)
                .is_some_and(|s| s.label.as_binary().is_some() && s.supervising_domain.is_some())
        })
        .map(|(i, _)| i)
        .collect();

    let embeddings = match &ctx.config.paths.embeddings {
        Some(path) if path.is_file() => Some(load_embeddings(path)?),
        _ => None,
    };

    Ok(Assembled {
        ids,
        channels,
        timestamps,
        masked,
        assignments,
        supervision,
        index,
        tag_set,
        embeddings,
        labeled_rows,
    })
}

fn experiment_config(ctx: &Context) -> ExperimentConfig {
    ExperimentConfig {
        seeds: ctx.config.training.seeds.clone(),
        group_kind: GroupKind::Domain,
        split: SplitConfig {
            test_frac: ctx.config.training.test_frac,
            val_frac: ctx.config.training.val_frac,
            candidates: ctx.config.training.channel_candidates,
        },
        protocol: ProtocolConfig {
            c_grid: ctx.config.training.c_grid.clone(),
            max_iter: ctx.config.training.max_iter,
            seed: ctx.config.seed,
        },
        use_calibrated_bases: ctx.config.training.use_calibrated_bases,
    }
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

/// Persisted model bundle: single model or stacked ensemble.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelBundle {
    Single {
        representation: String,
        model: TrainedModel,
    },
    Ensemble {
        representation: String,
        bases: Vec<(String, LogRegModel)>,
        base_calibrators: Vec<PlattCalibrator>,
        meta: TrainedModel,
    },
}

/// Full-corpus feature sets for the parts of a representation spec, with
/// transformers fit on the labeled training rows only.
fn full_sets_for_training(
    assembled: &Assembled,
    spec: &str,
    train_rows_global: &[usize],
    ctx: &Context,
) -> anyhow::Result<Vec<(String, FeatureSet)>> {
    let mut sets = Vec::new();
    let all_rows: Vec<usize> = (0..assembled.ids.len()).collect();
    for part in spec.split('+') {
        let part = part.trim();
        let set = match part {
            "tags" => assembled.tag_set.gather(&all_rows),
            "tfidf" => {
                let train_texts: Vec<MaskedText> = train_rows_global
                    .iter()
                    .map(|&i| assembled.masked[i].clone())
                    .collect();
                let model = fit_tfidf(
                    &train_texts,
                    TfidfConfig {
                        max_vocab: ctx.config.training.tfidf_max_vocab,
                        ..TfidfConfig::default()
                    },
                )?;
                FeatureSet {
                    kind: FeatureKind::Tfidf,
                    space_hash: model.fingerprint(),
                    ids: assembled.ids.clone(),
                    data: FeatureData::Sparse(model.transform(&assembled.masked)),
                }
            }
            "embedding" => {
                let table = assembled
                    .embeddings
                    .as_ref()
                    .context("representation 'embedding' needs paths.embeddings")?;
                let full = embedding_matrix(&assembled.ids, table)?;
                let train = full.gather_rows(train_rows_global);
                let standardizer = fit_standardizer(&train);
                FeatureSet {
                    kind: FeatureKind::Embedding,
                    space_hash: tagrisk_core::hashing::sha256_hex(
                        format!("embedding:dim={}:train", full.cols).as_bytes(),
                    ),
                    ids: assembled.ids.clone(),
                    data: FeatureData::Dense(standardizer.apply(&full)),
                }
            }
            other => bail!("unknown representation part {other:?}"),
        };
        sets.push((part.to_string(), set));
    }
    Ok(sets)
}

pub fn train(ctx: &Context) -> anyhow::Result<()> {
    let assembled = assemble(ctx)?;
    if assembled.labeled_rows.len() < 10 {
        bail!(
            "only {} labeled messages; need at least 10 to train",
            assembled.labeled_rows.len()
        );
    }
    let spec = ctx.config.training.representations[0].clone();
    let labels = assembled.labels();
    let domains = assembled.domains();
    let split = tagrisk_core::eval::domain_disjoint_split(
        &domains,
        ctx.config.seed,
        &SplitConfig {
            test_frac: ctx.config.training.test_frac,
            val_frac: ctx.config.training.val_frac,
            candidates: ctx.config.training.channel_candidates,
        },
    )?;
    // Split indices are into the labeled subset; lift to corpus rows.
    let lift = |indices: &[usize]| -> Vec<usize> {
        indices.iter().map(|&i| assembled.labeled_rows[i]).collect()
    };
    let train_global = lift(&split.train);

    let full_sets = full_sets_for_training(&assembled, &spec, &train_global, ctx)?;
    let gather = |set: &FeatureSet, indices: &[usize]| set.gather(&lift(indices));
    let pick_labels = |indices: &[usize]| -> Vec<u8> {
        indices.iter().map(|&i| labels[i]).collect()
    };
    let train_y = pick_labels(&split.train);
    let val_y = pick_labels(&split.val);
    let test_y = pick_labels(&split.test);
    let protocol = ProtocolConfig {
        c_grid: ctx.config.training.c_grid.clone(),
        max_iter: ctx.config.training.max_iter,
        seed: ctx.config.seed,
    };

    let (bundle, test_row, probs_all) = if full_sets.len() == 1 {
        let (_, set) = &full_sets[0];
        let outcome = full_protocol(
            (&gather(set, &split.train), &train_y),
            (&gather(set, &split.val), &val_y),
            (&gather(set, &split.test), &test_y),
            &protocol,
        )?;
        let probs = outcome.model.predict(set)?;
        (
            ModelBundle::Single {
                representation: spec.clone(),
                model: outcome.model,
            },
            outcome.test,
            probs,
        )
    } else {
        let gathered: Vec<(String, FeatureSet, FeatureSet, FeatureSet)> = full_sets
            .iter()
            .map(|(name, set)| {
                (
                    name.clone(),
                    gather(set, &split.train),
                    gather(set, &split.val),
                    gather(set, &split.test),
                )
            })
            .collect();
        let parts: Vec<EnsemblePart<'_>> = gathered
            .iter()
            .map(|(name, train, val, test)| EnsemblePart {
                name: name.clone(),
                train,
                val,
                test,
            })
            .collect();
        let outcome: EnsembleOutcome = ensemble_protocol(
            &parts,
            &train_y,
            &val_y,
            &test_y,
            &protocol,
            ctx.config.training.use_calibrated_bases,
        )?;
        let full_refs: Vec<&FeatureSet> = full_sets.iter().map(|(_, s)| s).collect();
        let probs = outcome.predict(&full_refs)?;
        (
            ModelBundle::Ensemble {
                representation: spec.clone(),
                bases: outcome.bases,
                base_calibrators: outcome.base_calibrators,
                meta: outcome.meta,
            },
            outcome.test,
            probs,
        )
    };

    let vocab = Vocabulary::builtin();
    let model_path = ctx.path(MODEL);
    let doc = serde_json::json!({
        "schema_version": tagrisk_core::artifact::SCHEMA_VERSION,
        "config_hash": ctx.config_hash,
        "seed": ctx.config.seed,
        "vocabulary_fingerprint": vocab.fingerprint(),
        "index_fingerprint": assembled.index.fingerprint(),
        "test_metrics": test_row,
        "bundle": bundle,
    });
    std::fs::write(&model_path, serde_json::to_string_pretty(&doc)?)?;

    let scored: Vec<ScoredMessage> = (0..assembled.ids.len())
        .map(|i| ScoredMessage {
            message_id: assembled.ids[i].clone(),
            channel_id: assembled.channels[i].clone(),
            week: week_key(assembled.timestamps[i]),
            assignment: assembled.assignments[i].clone(),
            p_hat: probs_all[i],
        })
        .collect();
    let scored_path = ctx.path(SCORED);
    write_jsonl(&scored_path, &scored)?;

    let mut meta = ctx.meta("train");
    for name in [URLS, SUPERVISION, TAGS, TAG_MATRIX] {
        meta.add_input(name, &ctx.path(name))?;
    }
    meta.add_output(&model_path)?;
    meta.add_output(&scored_path)?;
    meta.write(&ctx.out_dir)?;
    println!(
        "train: {spec} on {} labeled messages; test AUC {:.3}, macro-F1 {:.3}; scored {} messages",
        assembled.labeled_rows.len(),
        test_row.roc_auc,
        test_row.macro_f1,
        scored.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate / ablate / stress
// ---------------------------------------------------------------------------

fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.3}±{std:.3}")
}

fn write_report_csv(path: &Path, rows: &[(String, MetricsReport)]) -> anyhow::Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["Model", "Acc.", "AUC", "Macro-F1", "Brier", "ECE"])?;
    for (name, report) in rows {
        writer.write_record([
            name.as_str(),
            &format_mean_std(report.mean.accuracy, report.std.accuracy),
            &format_mean_std(report.mean.roc_auc, report.std.roc_auc),
            &format_mean_std(report.mean.macro_f1, report.std.macro_f1),
            &format_mean_std(report.mean.brier, report.std.brier),
            &format_mean_std(report.mean.ece, report.std.ece),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn evaluate(ctx: &Context) -> anyhow::Result<()> {
    let assembled = assemble(ctx)?;
    let config = experiment_config(ctx);
    let mut rows: Vec<(String, MetricsReport)> = Vec::new();
    let mut meta = ctx.meta("evaluate");
    for name in [URLS, SUPERVISION, TAGS, TAG_MATRIX] {
        meta.add_input(name, &ctx.path(name))?;
    }
    for spec in &ctx.config.training.representations {
        let data = assembled.experiment_data(spec, ctx)?;
        let outcome = run_experiment(&data, &config)?;
        let predictions_path =
            ctx.path(&format!("predictions_{}.jsonl", spec.replace('+', "_")));
        write_jsonl(&predictions_path, &outcome.predictions)?;
        meta.add_output(&predictions_path)?;
        println!(
            "evaluate[{spec}]: AUC {} macro-F1 {} Brier {} ECE {}",
            format_mean_std(outcome.report.mean.roc_auc, outcome.report.std.roc_auc),
            format_mean_std(outcome.report.mean.macro_f1, outcome.report.std.macro_f1),
            format_mean_std(outcome.report.mean.brier, outcome.report.std.brier),
            format_mean_std(outcome.report.mean.ece, outcome.report.std.ece),
        );
        rows.push((spec.clone(), outcome.report));
    }

    let json_path = ctx.path(EVAL_JSON);
    let doc: BTreeMap<String, &MetricsReport> =
        rows.iter().map(|(n, r)| (n.clone(), r)).collect();
    std::fs::write(
        &json_path,
        serde_json::to_string_pretty(&serde_json::json!({
            "config_hash": ctx.config_hash,
            "seeds": ctx.config.training.seeds,
            "reports": doc,
        }))?,
    )?;
    let csv_path = ctx.path(EVAL_CSV);
    write_report_csv(&csv_path, &rows)?;
    meta.add_output(&json_path)?;
    meta.add_output(&csv_path)?;
    meta.write(&ctx.out_dir)?;
    Ok(())
}

pub fn ablate(ctx: &Context) -> anyhow::Result<()> {
    let assembled = assemble(ctx)?;
    let config = experiment_config(ctx);
    let data = assembled.experiment_data("tags", ctx)?;
    let rows = ablation_suite(
        &data,
        &assembled.index,
        &standard_ablation_subsets(),
        &config,
    )?;

    let json_path = ctx.path(ABLATION_JSON);
    let doc: BTreeMap<String, &MetricsReport> =
        rows.iter().map(|(n, r)| (n.clone(), r)).collect();
    std::fs::write(
        &json_path,
        serde_json::to_string_pretty(&serde_json::json!({
            "config_hash": ctx.config_hash,
            "reports": doc,
        }))?,
    )?;
    let csv_path = ctx.path(ABLATION_CSV);
    write_report_csv(&csv_path, &rows)?;

    let mut meta = ctx.meta("ablate");
    meta.add_input("tag_matrix", &ctx.path(TAG_MATRIX))?;
    meta.add_output(&json_path)?;
    meta.add_output(&csv_path)?;
    meta.write(&ctx.out_dir)?;
    for (name, report) in &rows {
        println!(
            "ablate[{name}]: AUC {} macro-F1 {}",
            format_mean_std(report.mean.roc_auc, report.std.roc_auc),
            format_mean_std(report.mean.macro_f1, report.std.macro_f1),
        );
    }
    Ok(())
}

pub fn stress(ctx: &Context) -> anyhow::Result<()> {
    let assembled = assemble(ctx)?;
    let config = experiment_config(ctx);
    let data = assembled.experiment_data("tags", ctx)?;
    let curve = noise_stress(
        &data,
        &ctx.config.training.noise_rates,
        ctx.config.seed,
        &config,
    )?;

    let csv_path = ctx.path(STRESS_CSV);
    {
        let mut writer = csv::Writer::from_path(&csv_path)?;
        writer.write_record(["flip_rate", "macro_f1"])?;
        for (rate, f1) in &curve {
            writer.write_record([format!("{rate:.2}"), format!("{f1:.6}")])?;
        }
        writer.flush()?;
    }
    let mut meta = ctx.meta("stress");
    meta.add_input("tag_matrix", &ctx.path(TAG_MATRIX))?;
    meta.add_output(&csv_path)?;
    meta.write(&ctx.out_dir)?;
    println!(
        "stress: {}",
        curve
            .iter()
            .map(|(r, f)| format!("{r:.2}->{f:.3}"))
            .collect::<Vec<_>>()
            .join(" ")
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// monitor
// ---------------------------------------------------------------------------

pub fn monitor(ctx: &Context) -> anyhow::Result<()> {
    let scored_path = ctx.path(SCORED);
    require_input(&scored_path)?;
    let messages: Vec<ScoredMessage> = read_jsonl(&scored_path)?;
    if messages.is_empty() {
        bail!("scored stream is empty");
    }
    let mcfg = &ctx.config.monitor;

    let (tail, threshold) = high_risk_tail(&messages, mcfg.tail_frac)?;
    let shares = tag_shares(&messages)?;
    let enrichment = log_odds_enrichment(&messages, &tail, mcfg.alpha0_factor)?;

    // Per-tag overall and tail counts for lift.
    let mut tail_counts: BTreeMap<(Field, String), usize> = BTreeMap::new();
    for &i in &tail {
        for field in Field::ALL {
            for tag in messages[i].assignment.field(field) {
                *tail_counts.entry((field, tag.clone())).or_insert(0) += 1;
            }
        }
    }
    let enrichment_path = ctx.path(ENRICHMENT_CSV);
    {
        let mut writer = csv::Writer::from_path(&enrichment_path)?;
        writer.write_record(["field", "tag", "tail_count", "rest_count", "z", "lift"])?;
        for row in &enrichment {
            let overall = row.tail_count + row.rest_count;
            let lift = tagrisk_core::monitor::tail_lift(
                row.tail_count,
                tail.len(),
                overall,
                messages.len(),
            )
            .unwrap_or(f64::NAN);
            writer.write_record([
                row.field.name(),
                row.tag.as_str(),
                &row.tail_count.to_string(),
                &row.rest_count.to_string(),
                &format!("{:.4}", row.z),
                &format!("{lift:.4}"),
            ])?;
        }
        writer.flush()?;
    }

    let (prototypes, coverage) = build_prototypes(&messages, &tail)?;
    let prototypes_path = ctx.path(PROTOTYPES_CSV);
    {
        let mut writer = csv::Writer::from_path(&prototypes_path)?;
        writer.write_record([
            "rank",
            "key",
            "count",
            "tail_count",
            "tail_lift",
            "coverage_total",
            "coverage_tail",
        ])?;
        for (rank, p) in prototypes.iter().enumerate() {
            writer.write_record([
                &(rank + 1).to_string(),
                p.key.as_str(),
                &p.count.to_string(),
                &p.tail_count.to_string(),
                &format!("{:.4}", p.tail_lift),
                &format!("{:.4}", coverage.total[rank]),
                &format!("{:.4}", coverage.tail[rank]),
            ])?;
        }
        writer.flush()?;
    }

    let clustering = cluster_families(
        &prototypes,
        tail.len(),
        messages.len(),
        &KmeansOptions {
            k: mcfg.families_k.min(prototypes.len().max(1)),
            restarts: mcfg.kmeans_restarts,
            seed: ctx.config.seed,
            ..KmeansOptions::default()
        },
    )?;
    let assignments_path = ctx.path(FAMILY_ASSIGNMENTS_CSV);
    {
        let mut writer = csv::Writer::from_path(&assignments_path)?;
        writer.write_record(["prototype_key", "family_id"])?;
        for p in &prototypes {
            writer.write_record([p.key.as_str(), &clustering.assignment[&p.key].to_string()])?;
        }
        writer.flush()?;
    }

    let weekly =
        weekly_family_distributions(&messages, &clustering.assignment, clustering.families.len());
    let drift = weekly_js_drift(&weekly, mcfg.min_week_count);
    let drift_path = ctx.path(DRIFT_CSV);
    {
        let mut writer = csv::Writer::from_path(&drift_path)?;
        writer.write_record(["from_week", "to_week", "jsd_nats"])?;
        for point in &drift {
            writer.write_record([
                point.from_week.as_str(),
                point.to_week.as_str(),
                &format!("{:.6}", point.jsd),
            ])?;
        }
        writer.flush()?;
    }

    // Burstiness: peak-to-median of weekly shares for every tag with
    // enough retained weeks.
    #[derive(Serialize)]
    struct BurstRow {
        field: String,
        tag: String,
        peak_week: String,
        peak_share: f64,
        median_share: f64,
        peak_to_median: f64,
    }
    let mut bursts: Vec<BurstRow> = Vec::new();
    for row in &shares {
        let series = weekly_tag_shares(
            &messages,
            row.field,
            &row.tag,
            mcfg.share_basis,
            mcfg.min_week_count,
        );
        let values: Vec<f64> = series.iter().map(|(_, s)| *s).collect();
        if let Ok(ratio) = peak_to_median(&values) {
            let (peak_week, peak_share) = series
                .iter()
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .map(|(w, s)| (w.clone(), *s))
                .unwrap();
            let mut sorted = values.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = if sorted.len() % 2 == 1 {
                sorted[sorted.len() / 2]
            } else {
                0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
            };
            bursts.push(BurstRow {
                field: row.field.name().to_string(),
                tag: row.tag.clone(),
                peak_week,
                peak_share,
                median_share: median,
                peak_to_median: ratio,
            });
        }
    }
    bursts.sort_by(|a, b| b.peak_to_median.partial_cmp(&a.peak_to_median).unwrap());
    let bursts_path = ctx.path(BURSTS_CSV);
    {
        let mut writer = csv::Writer::from_path(&bursts_path)?;
        writer.write_record([
            "field",
            "tag",
            "peak_week",
            "peak_share",
            "median_share",
            "peak_to_median",
        ])?;
        for b in &bursts {
            writer.write_record([
                b.field.as_str(),
                b.tag.as_str(),
                b.peak_week.as_str(),
                &format!("{:.4}", b.peak_share),
                &format!("{:.4}", b.median_share),
                &format!("{:.4}", b.peak_to_median),
            ])?;
        }
        writer.flush()?;
    }

    let max_drift = drift.iter().map(|d| d.jsd).fold(0.0f64, f64::max);
    let top10_coverage = coverage.total.get(9).copied().unwrap_or(1.0);
    let summary = serde_json::json!({
        "config_hash": ctx.config_hash,
        "window_messages": messages.len(),
        "risk_mass": risk_mass(&messages),
        "tail_size": tail.len(),
        "tail_threshold": threshold,
        "prototypes": prototypes.len(),
        "top10_prototype_coverage": top10_coverage,
        "families": clustering.families.len(),
        "family_silhouette": clustering.silhouette,
        "max_weekly_drift": max_drift,
        "retained_weeks": weekly
            .iter()
            .filter(|(_, (_, count))| *count >= mcfg.min_week_count)
            .count(),
        "top_bursts": bursts.iter().take(5).map(|b| {
            serde_json::json!({
                "field": b.field,
                "tag": b.tag,
                "peak_to_median": b.peak_to_median,
                "peak_week": b.peak_week,
            })
        }).collect::<Vec<_>>(),
    });
    let summary_path = ctx.path(MONITOR_SUMMARY);
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;

    let mut meta = ctx.meta("monitor");
    meta.add_input("scored", &scored_path)?;
    for path in [
        &enrichment_path,
        &prototypes_path,
        &assignments_path,
        &drift_path,
        &bursts_path,
        &summary_path,
    ] {
        meta.add_output(path)?;
    }
    meta.write(&ctx.out_dir)?;
    println!(
        "monitor: {} messages, tail {} (threshold {:.4}), {} prototypes, {} families, max weekly drift {:.4}",
        messages.len(),
        tail.len(),
        threshold,
        prototypes.len(),
        clustering.families.len(),
        max_drift
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

pub fn report(ctx: &Context) -> anyhow::Result<()> {
    let eval_path = ctx.path(EVAL_JSON);
    require_input(&eval_path)?;
    let evaluate: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&eval_path)?)?;
    let mut doc = serde_json::json!({
        "config_hash": ctx.config_hash,
        "evaluation": evaluate,
    });
    for (key, name) in [
        ("ablation", ABLATION_JSON),
        ("monitoring", MONITOR_SUMMARY),
    ] {
        let path = ctx.path(name);
        if path.is_file() {
            doc[key] = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
        }
    }
    let stress_path = ctx.path(STRESS_CSV);
    if stress_path.is_file() {
        doc["stress_csv"] = serde_json::Value::String(std::fs::read_to_string(&stress_path)?);
    }

    let report_path = ctx.path(REPORT_JSON);
    std::fs::write(&report_path, serde_json::to_string_pretty(&doc)?)?;
    let csv_out = ctx.path(REPORT_CSV);
    std::fs::copy(ctx.path(EVAL_CSV), &csv_out)
        .with_context(|| "report needs evaluate_report.csv")?;

    let mut meta = ctx.meta("report");
    meta.add_input("evaluation", &eval_path)?;
    meta.add_output(&report_path)?;
    meta.add_output(&csv_out)?;
    meta.write(&ctx.out_dir)?;
    println!("report: wrote {}", report_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// demo
// ---------------------------------------------------------------------------

pub fn demo(ctx: Context, messages: usize, weeks: usize) -> anyhow::Result<()> {
    use tagrisk_core::synth::{generate_corpus_files, SynthCorpusConfig};

    let input_dir = ctx.out_dir.join("input");
    let files = generate_corpus_files(
        &SynthCorpusConfig {
            n_messages: messages,
            weeks,
            seed: ctx.config.seed,
            ..SynthCorpusConfig::default()
        },
        &input_dir,
    )?;
    println!("demo: generated corpus under {}", input_dir.display());

    let mut config = ctx.config.clone();
    config.paths.messages = files.messages;
    config.paths.ratings = files.ratings;
    config.paths.redirects = Some(files.redirects);
    config.paths.embeddings = Some(files.embeddings);
    config.tagger.mode = TaggerMode::Mock;
    config.training.representations = vec![
        "tags".to_string(),
        "tfidf".to_string(),
        "embedding".to_string(),
        "tags+tfidf+embedding".to_string(),
    ];
    // Demo-scale monitoring: fewer distinct mock prototypes than a real
    // window would carry, and thinner weeks.
    config.monitor.families_k = config.monitor.families_k.min(12);
    config.monitor.min_week_count = config.monitor.min_week_count.min(messages / weeks.max(1) / 2);

    let demo_config_path = ctx.out_dir.join("demo_config.toml");
    std::fs::write(&demo_config_path, config.snapshot())?;
    let ctx = Context::new(config, ctx.out_dir)?;

    ingest(&ctx)?;
    dedup(&ctx)?;
    urls(&ctx)?;
    supervise(&ctx)?;
    tag(&ctx)?;
    featurize(&ctx)?;
    train(&ctx)?;
    evaluate(&ctx)?;
    ablate(&ctx)?;
    stress(&ctx)?;
    monitor(&ctx)?;
    report(&ctx)?;
    println!("demo: complete; artifacts in {}", ctx.out_dir.display());
    Ok(())
}

