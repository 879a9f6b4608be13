//! Risk-weighted monitoring over scored, tagged message streams.
//!
//! Inputs are messages with validated tag assignments and calibrated risk
//! scores. The analytics: risk mass and per-tag shares, the top-fraction
//! high-risk tail, Dirichlet-prior log-odds tag enrichment with z-scores,
//! tail lift, prototype (unique tag combination) coverage, k-means strategy
//! families over tag-token TF-IDF, week-over-week Jensen-Shannon drift of
//! the family distribution, and peak-to-median burstiness of tag shares.

mod kmeans;

pub use kmeans::{kmeans, silhouette, KmeansOptions, KmeansResult};

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

use crate::codebook::{Field, TagAssignment};

/// One message ready for monitoring.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoredMessage {
    pub message_id: String,
    pub channel_id: String,
    /// ISO week key, UTC Monday-start (`2025-W23`).
    pub week: String,
    pub assignment: TagAssignment,
    /// Calibrated risk score in [0, 1].
    pub p_hat: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum MonitorError {
    #[error("empty message set")]
    EmptySet,
    #[error("tag has zero overall share: {0}")]
    ZeroShare(String),
    #[error("too few prototypes: {have} < k = {need}")]
    TooFewPrototypes { have: usize, need: usize },
    #[error("need at least 3 retained weeks, have {0}")]
    TooFewWeeks(usize),
    #[error("median share is zero")]
    ZeroMedian,
}

/// ISO week key (UTC, Monday-start) for an epoch-seconds timestamp.
pub fn week_key(timestamp: i64) -> String {
    use chrono::Datelike;
    let dt = chrono::DateTime::from_timestamp(timestamp, 0)
        .unwrap_or_else(|| chrono::DateTime::from_timestamp(0, 0).unwrap());
    let iso = dt.date_naive().iso_week();
    format!("{:04}-W{:02}", iso.year(), iso.week())
}

// ---------------------------------------------------------------------------
// Risk mass and shares
// ---------------------------------------------------------------------------

/// Risk mass: the sum of calibrated scores, read as the expected count of
/// risky messages under the proxy label.
pub fn risk_mass<'a>(messages: impl IntoIterator<Item = &'a ScoredMessage>) -> f64 {
    messages.into_iter().map(|m| m.p_hat).sum()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TagShareRow {
    pub field: Field,
    pub tag: String,
    pub count: usize,
    pub tag_risk_mass: f64,
    pub risk_share: f64,
    pub vol_share: f64,
}

/// Per-tag risk share and volume share over the whole window.
pub fn tag_shares(messages: &[ScoredMessage]) -> Result<Vec<TagShareRow>, MonitorError> {
    if messages.is_empty() {
        return Err(MonitorError::EmptySet);
    }
    let total_mass = risk_mass(messages);
    let n = messages.len() as f64;
    let mut by_tag: BTreeMap<(Field, String), (usize, f64)> = BTreeMap::new();
    for message in messages {
        for field in Field::ALL {
            for tag in message.assignment.field(field) {
                let entry = by_tag.entry((field, tag.clone())).or_insert((0, 0.0));
                entry.0 += 1;
                entry.1 += message.p_hat;
            }
        }
    }
    Ok(by_tag
        .into_iter()
        .map(|((field, tag), (count, mass))| TagShareRow {
            field,
            tag,
            count,
            tag_risk_mass: mass,
            risk_share: if total_mass > 0.0 { mass / total_mass } else { 0.0 },
            vol_share: count as f64 / n,
        })
        .collect())
}

// ---------------------------------------------------------------------------
// High-risk tail
// ---------------------------------------------------------------------------

/// Indices of the top `ceil(frac * n)` messages by score (ties at the
/// boundary broken by message id), plus the minimum score inside the tail.
pub fn high_risk_tail(
    messages: &[ScoredMessage],
    frac: f64,
) -> Result<(Vec<usize>, f64), MonitorError> {
    if messages.is_empty() {
        return Err(MonitorError::EmptySet);
    }
    let mut order: Vec<usize> = (0..messages.len()).collect();
    order.sort_by(|&a, &b| {
        messages[b]
            .p_hat
            .partial_cmp(&messages[a].p_hat)
            .expect("finite scores")
            .then_with(|| messages[a].message_id.cmp(&messages[b].message_id))
    });
    let size = ((frac * messages.len() as f64).ceil() as usize)
        .max(1)
        .min(messages.len());
    let tail: Vec<usize> = order[..size].to_vec();
    let threshold = tail
        .iter()
        .map(|&i| messages[i].p_hat)
        .fold(f64::INFINITY, f64::min);
    Ok((tail, threshold))
}

// ---------------------------------------------------------------------------
// Log-odds enrichment with an informative Dirichlet prior
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnrichmentRow {
    pub field: Field,
    pub tag: String,
    pub tail_count: usize,
    pub rest_count: usize,
    pub delta: f64,
    pub variance: f64,
    pub z: f64,
}

/// Tag enrichment of the tail versus the rest, per field: the log-odds
/// ratio with an informative Dirichlet prior scaled from full-window tag
/// shares (`alpha_t = alpha0 * share(t)`, `alpha0 = alpha0_factor * n_field`).
/// Rows come back sorted by z descending.
pub fn log_odds_enrichment(
    messages: &[ScoredMessage],
    tail: &[usize],
    alpha0_factor: f64,
) -> Result<Vec<EnrichmentRow>, MonitorError> {
    if messages.is_empty() {
        return Err(MonitorError::EmptySet);
    }
    let in_tail: Vec<bool> = {
        let mut v = vec![false; messages.len()];
        for &i in tail {
            v[i] = true;
        }
        v
    };

    let mut rows = Vec::new();
    for field in Field::ALL {
        let mut tail_counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut rest_counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut global_counts: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, message) in messages.iter().enumerate() {
            for tag in message.assignment.field(field) {
                *global_counts.entry(tag.as_str()).or_insert(0) += 1;
                if in_tail[i] {
                    *tail_counts.entry(tag.as_str()).or_insert(0) += 1;
                } else {
                    *rest_counts.entry(tag.as_str()).or_insert(0) += 1;
                }
            }
        }
        let n_field: usize = global_counts.values().sum();
        if n_field == 0 {
            continue;
        }
        let alpha0 = alpha0_factor * n_field as f64;
        let n_tail: usize = tail_counts.values().sum();
        let n_rest: usize = rest_counts.values().sum();

        for (tag, &global) in &global_counts {
            let alpha_t = alpha0 * global as f64 / n_field as f64;
            let y_tail = *tail_counts.get(tag).unwrap_or(&0);
            let y_rest = *rest_counts.get(tag).unwrap_or(&0);
            let tail_num = y_tail as f64 + alpha_t;
            let tail_den = n_tail as f64 + alpha0 - tail_num;
            let rest_num = y_rest as f64 + alpha_t;
            let rest_den = n_rest as f64 + alpha0 - rest_num;
            let delta = (tail_num / tail_den).ln() - (rest_num / rest_den).ln();
            let variance = 1.0 / tail_num + 1.0 / rest_num;
            rows.push(EnrichmentRow {
                field,
                tag: tag.to_string(),
                tail_count: y_tail,
                rest_count: y_rest,
                delta,
                variance,
                z: delta / variance.sqrt(),
            });
        }
    }
    rows.sort_by(|a, b| b.z.partial_cmp(&a.z).expect("finite z"));
    Ok(rows)
}

/// Tail lift: P(tag | tail) / P(tag | all messages).
pub fn tail_lift(
    tag_tail_count: usize,
    tail_size: usize,
    tag_total_count: usize,
    total: usize,
) -> Result<f64, MonitorError> {
    if tag_total_count == 0 || total == 0 {
        return Err(MonitorError::ZeroShare(format!(
            "{tag_tail_count}/{tail_size} vs {tag_total_count}/{total}"
        )));
    }
    if tail_size == 0 {
        return Err(MonitorError::EmptySet);
    }
    let tail_share = tag_tail_count as f64 / tail_size as f64;
    let overall_share = tag_total_count as f64 / total as f64;
    Ok(tail_share / overall_share)
}

// ---------------------------------------------------------------------------
// Prototypes and strategy families
// ---------------------------------------------------------------------------

/// A strategy fingerprint: one unique four-field tag combination.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prototype {
    pub key: String,
    pub assignment: TagAssignment,
    pub count: usize,
    pub tail_count: usize,
    pub tail_lift: f64,
}

/// Canonical prototype key: fields in order, labels in canonical order.
pub fn prototype_key(assignment: &TagAssignment) -> String {
    Field::ALL
        .iter()
        .map(|&f| format!("{}={}", f.name(), assignment.field(f).join("|")))
        .collect::<Vec<_>>()
        .join(";")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageCurve {
    /// Cumulative share of all messages covered by the top-k prototypes.
    pub total: Vec<f64>,
    /// Cumulative share of tail messages covered by the top-k prototypes.
    pub tail: Vec<f64>,
}

/// Group messages by prototype, counting overall and in-tail occurrences;
/// prototypes sort by count descending (key ascending on ties) and the
/// coverage curve accumulates their shares.
pub fn build_prototypes(
    messages: &[ScoredMessage],
    tail: &[usize],
) -> Result<(Vec<Prototype>, CoverageCurve), MonitorError> {
    if messages.is_empty() {
        return Err(MonitorError::EmptySet);
    }
    let in_tail: Vec<bool> = {
        let mut v = vec![false; messages.len()];
        for &i in tail {
            v[i] = true;
        }
        v
    };
    let mut groups: BTreeMap<String, (TagAssignment, usize, usize)> = BTreeMap::new();
    for (i, message) in messages.iter().enumerate() {
        let key = prototype_key(&message.assignment);
        let entry = groups
            .entry(key)
            .or_insert_with(|| (message.assignment.clone(), 0, 0));
        entry.1 += 1;
        if in_tail[i] {
            entry.2 += 1;
        }
    }
    let n = messages.len();
    let tail_size = tail.len().max(1);
    let mut prototypes: Vec<Prototype> = groups
        .into_iter()
        .map(|(key, (assignment, count, tail_count))| Prototype {
            key,
            assignment,
            count,
            tail_count,
            tail_lift: (tail_count as f64 / tail_size as f64) / (count as f64 / n as f64),
        })
        .collect();
    prototypes.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.key.cmp(&b.key)));

    let mut total_curve = Vec::with_capacity(prototypes.len());
    let mut tail_curve = Vec::with_capacity(prototypes.len());
    let mut cum_total = 0usize;
    let mut cum_tail = 0usize;
    for p in &prototypes {
        cum_total += p.count;
        cum_tail += p.tail_count;
        total_curve.push(cum_total as f64 / n as f64);
        tail_curve.push(cum_tail as f64 / tail_size as f64);
    }
    Ok((
        prototypes,
        CoverageCurve {
            total: total_curve,
            tail: tail_curve,
        },
    ))
}

/// One strategy family: a cluster of prototypes in tag-token TF-IDF space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrategyFamily {
    pub family_id: usize,
    pub member_keys: Vec<String>,
    pub message_count: usize,
    pub tail_count: usize,
    pub tail_lift: f64,
}

#[derive(Debug, Clone)]
pub struct FamilyClustering {
    pub families: Vec<StrategyFamily>,
    /// Prototype key -> family id.
    pub assignment: HashMap<String, usize>,
    pub silhouette: f64,
    pub inertia: f64,
}

/// Render each prototype as a bag of field-namespaced tag tokens and embed
/// with TF-IDF over the prototype corpus (smoothed idf, L2 rows).
fn prototype_vectors(prototypes: &[Prototype]) -> Vec<Vec<f64>> {
    let docs: Vec<Vec<String>> = prototypes
        .iter()
        .map(|p| {
            Field::ALL
                .iter()
                .flat_map(|&f| {
                    p.assignment
                        .field(f)
                        .iter()
                        .map(move |l| format!("{}:{}", f.name(), l))
                })
                .collect()
        })
        .collect();
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in &docs {
        let mut seen: Vec<&str> = doc.iter().map(String::as_str).collect();
        seen.sort_unstable();
        seen.dedup();
        for token in seen {
            *df.entry(token).or_insert(0) += 1;
        }
    }
    let vocab: Vec<&str> = df.keys().copied().collect();
    let column: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let n = docs.len() as f64;
    let idf: Vec<f64> = vocab
        .iter()
        .map(|t| ((1.0 + n) / (1.0 + df[t] as f64)).ln() + 1.0)
        .collect();
    docs.iter()
        .map(|doc| {
            let mut row = vec![0.0; vocab.len()];
            for token in doc {
                let c = column[token.as_str()];
                row[c] = idf[c];
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for v in row.iter_mut() {
                    *v /= norm;
                }
            }
            row
        })
        .collect()
}

/// Cluster prototypes into k strategy families (k-means++ seeding, 10
/// restarts, 100 iterations, relative tolerance 1e-6), reporting the
/// silhouette of the chosen k.
pub fn cluster_families(
    prototypes: &[Prototype],
    tail_size: usize,
    total_messages: usize,
    options: &KmeansOptions,
) -> Result<FamilyClustering, MonitorError> {
    if prototypes.len() < options.k {
        return Err(MonitorError::TooFewPrototypes {
            have: prototypes.len(),
            need: options.k,
        });
    }
    let vectors = prototype_vectors(prototypes);
    let result = kmeans(&vectors, options);
    let score = silhouette(&vectors, &result.assignments, options.k);

    let mut families: Vec<StrategyFamily> = (0..options.k)
        .map(|family_id| StrategyFamily {
            family_id,
            member_keys: Vec::new(),
            message_count: 0,
            tail_count: 0,
            tail_lift: 0.0,
        })
        .collect();
    let mut assignment = HashMap::new();
    for (p, &family_id) in prototypes.iter().zip(&result.assignments) {
        assignment.insert(p.key.clone(), family_id);
        let family = &mut families[family_id];
        family.member_keys.push(p.key.clone());
        family.message_count += p.count;
        family.tail_count += p.tail_count;
    }
    for family in &mut families {
        if family.message_count > 0 && tail_size > 0 && total_messages > 0 {
            family.tail_lift = (family.tail_count as f64 / tail_size as f64)
                / (family.message_count as f64 / total_messages as f64);
        }
    }
    Ok(FamilyClustering {
        families,
        assignment,
        silhouette: score,
        inertia: result.inertia,
    })
}

// ---------------------------------------------------------------------------
// Temporal dynamics: drift and bursts
// ---------------------------------------------------------------------------

/// KL divergence in nats with the 0 ln 0 = 0 convention.
fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum()
}

/// Jensen-Shannon divergence (natural log), bounded by [0, ln 2]. Inputs
/// are normalized defensively.
pub fn jensen_shannon(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distribution support mismatch");
    let sp: f64 = p.iter().sum();
    let sq: f64 = q.iter().sum();
    if sp <= 0.0 || sq <= 0.0 {
        return 0.0;
    }
    let pn: Vec<f64> = p.iter().map(|v| v / sp).collect();
    let qn: Vec<f64> = q.iter().map(|v| v / sq).collect();
    let mid: Vec<f64> = pn.iter().zip(&qn).map(|(a, b)| 0.5 * (a + b)).collect();
    0.5 * kl_divergence(&pn, &mid) + 0.5 * kl_divergence(&qn, &mid)
}

/// Weekly family count distributions: week -> (per-family counts, total).
pub fn weekly_family_distributions(
    messages: &[ScoredMessage],
    family_of: &HashMap<String, usize>,
    k: usize,
) -> BTreeMap<String, (Vec<f64>, usize)> {
    let mut weekly: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
    for message in messages {
        let key = prototype_key(&message.assignment);
        let Some(&family) = family_of.get(&key) else { continue };
        let entry = weekly
            .entry(message.week.clone())
            .or_insert_with(|| (vec![0.0; k], 0));
        entry.0[family] += 1.0;
        entry.1 += 1;
    }
    weekly
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftPoint {
    pub from_week: String,
    pub to_week: String,
    pub jsd: f64,
}

/// Week-over-week Jensen-Shannon drift between consecutive retained weeks.
/// Weeks under `min_week_count` are skipped; drift is computed between the
/// surviving neighbors.
pub fn weekly_js_drift(
    weekly: &BTreeMap<String, (Vec<f64>, usize)>,
    min_week_count: usize,
) -> Vec<DriftPoint> {
    let retained: Vec<(&String, &Vec<f64>)> = weekly
        .iter()
        .filter(|(_, (_, count))| *count >= min_week_count)
        .map(|(week, (dist, _))| (week, dist))
        .collect();
    retained
        .windows(2)
        .map(|pair| DriftPoint {
            from_week: pair[0].0.clone(),
            to_week: pair[1].0.clone(),
            jsd: jensen_shannon(pair[0].1, pair[1].1),
        })
        .collect()
}

/// Share basis for weekly tag series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareBasis {
    Count,
    RiskMass,
}

/// Weekly share series of one tag over retained weeks.
pub fn weekly_tag_shares(
    messages: &[ScoredMessage],
    field: Field,
    tag: &str,
    basis: ShareBasis,
    min_week_count: usize,
) -> Vec<(String, f64)> {
    let mut weekly: BTreeMap<String, (f64, f64, usize)> = BTreeMap::new();
    for message in messages {
        let entry = weekly
            .entry(message.week.clone())
            .or_insert((0.0, 0.0, 0));
        let weight = match basis {
            ShareBasis::Count => 1.0,
            ShareBasis::RiskMass => message.p_hat,
        };
        entry.1 += weight;
        entry.2 += 1;
        if message.assignment.field(field).iter().any(|l| l == tag) {
            entry.0 += weight;
        }
    }
    weekly
        .into_iter()
        .filter(|(_, (_, _, count))| *count >= min_week_count)
        .map(|(week, (tagged, total, _))| (week, if total > 0.0 { tagged / total } else { 0.0 }))
        .collect()
}

/// Peak-to-median ratio of a weekly share series (midpoint median for even
/// counts). Requires at least three retained weeks and a nonzero median.
pub fn peak_to_median(shares: &[f64]) -> Result<f64, MonitorError> {
    if shares.len() < 3 {
        return Err(MonitorError::TooFewWeeks(shares.len()));
    }
    let mut sorted = shares.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite shares"));
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    if median <= 0.0 {
        return Err(MonitorError::ZeroMedian);
    }
    Ok(sorted[n - 1] / median)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{reference_gold_rows, Vocabulary};

    fn scored(id: &str, p: f64, assignment: TagAssignment, week: &str) -> ScoredMessage {
        ScoredMessage {
            message_id: id.to_string(),
            channel_id: "ch".to_string(),
            week: week.to_string(),
            assignment,
            p_hat: p,
        }
    }

    fn sample_messages(n: usize) -> Vec<ScoredMessage> {
        let rows = reference_gold_rows();
        (0..n)
            .map(|i| {
                scored(
                    &format!("m{i:04}"),
                    (i % 100) as f64 / 100.0,
                    rows[i % rows.len()].clone(),
                    &format!("2025-W{:02}", 1 + (i % 20)),
                )
            })
            .collect()
    }

    #[test]
    fn week_key_is_monday_start_iso() {
        // 2025-06-02 is a Monday (ISO week 23); the preceding Sunday
        // belongs to week 22.
        let monday = chrono::DateTime::parse_from_rfc3339("2025-06-02T00:00:00Z")
            .unwrap()
            .timestamp();
        let sunday = monday - 1;
        assert_eq!(week_key(monday), "2025-W23");
        assert_eq!(week_key(sunday), "2025-W22");
    }

    #[test]
    fn risk_mass_and_shares() {
        let rows = reference_gold_rows();
        // Uniform scores: risk share equals volume share for every tag.
        let messages: Vec<ScoredMessage> = (0..10)
            .map(|i| scored(&format!("m{i}"), 1.0, rows[i % rows.len()].clone(), "2025-W01"))
            .collect();
        assert_eq!(risk_mass(&messages), 10.0);
        for row in tag_shares(&messages).unwrap() {
            assert!(
                (row.risk_share - row.vol_share).abs() < 1e-12,
                "{:?}",
                row
            );
        }
        // Arithmetic check: tagged message 0.5 of total mass 2.0.
        let messages = vec![
            scored("a", 0.5, rows[0].clone(), "2025-W01"),
            scored("b", 1.5, rows[3].clone(), "2025-W01"),
        ];
        let shares = tag_shares(&messages).unwrap();
        let finance = shares
            .iter()
            .find(|r| r.tag == "Finance/Crypto")
            .unwrap();
        assert!((finance.risk_share - 0.25).abs() < 1e-12);
        assert_eq!(tag_shares(&[]).unwrap_err(), MonitorError::EmptySet);
    }

    #[test]
    fn vol_shares_sum_exceeds_one_with_multilabel_and_equals_one_on_partition() {
        let rows = reference_gold_rows();
        let messages: Vec<ScoredMessage> = (0..8)
            .map(|i| scored(&format!("m{i}"), 0.5, rows[0].clone(), "2025-W01"))
            .collect();
        // Multi-label: claim shares sum to 2 (two claim labels everywhere).
        let shares = tag_shares(&messages).unwrap();
        let claim_sum: f64 = shares
            .iter()
            .filter(|r| r.field == Field::Claim)
            .map(|r| r.vol_share)
            .sum();
        assert!(claim_sum > 1.0 + 1e-12);
        // Theme is single-label here: a partition, so shares sum to 1.
        let theme_sum: f64 = shares
            .iter()
            .filter(|r| r.field == Field::Theme)
            .map(|r| r.vol_share)
            .sum();
        assert!((theme_sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tail_size_and_threshold() {
        let messages = sample_messages(100);
        let (tail, threshold) = high_risk_tail(&messages, 0.05).unwrap();
        assert_eq!(tail.len(), 5);
        for &i in &tail {
            assert!(messages[i].p_hat >= threshold);
        }
        // Everyone else is at or below the threshold.
        let tail_set: std::collections::HashSet<usize> = tail.iter().copied().collect();
        for i in 0..messages.len() {
            if !tail_set.contains(&i) {
                assert!(messages[i].p_hat <= threshold);
            }
        }
    }

    #[test]
    fn tail_ties_break_by_message_id() {
        let rows = reference_gold_rows();
        let messages: Vec<ScoredMessage> = (0..10)
            .map(|i| scored(&format!("m{i}"), 0.7, rows[0].clone(), "2025-W01"))
            .collect();
        let (tail, _) = high_risk_tail(&messages, 0.3).unwrap();
        let mut ids: Vec<&str> = tail.iter().map(|&i| messages[i].message_id.as_str()).collect();
        ids.sort_unstable();
        assert_eq!(ids, vec!["m0", "m1", "m2"]);
    }

    #[test]
    fn ceiling_rule() {
        let messages = sample_messages(21);
        let (tail, _) = high_risk_tail(&messages, 0.05).unwrap();
        assert_eq!(tail.len(), 2); // ceil(1.05)
    }

    #[test]
    fn enrichment_flags_planted_tag() {
        let vocab = Vocabulary::builtin();
        let mut planted = TagAssignment::new(
            vec!["Finance/Crypto".into()],
            vec!["Scarcity/FOMO tactic".into()],
            vec!["Buy / invest / donate".into()],
            vec!["Chart / price graph / TA diagram".into()],
        );
        planted.canonicalize(vocab);
        let mut neutral = TagAssignment::new(
            vec!["News/Information".into()],
            vec!["Verifiable factual statement".into()],
            vec!["No CTA".into()],
            vec!["Link/URL".into()],
        );
        neutral.canonicalize(vocab);

        // 2000 messages; tail = top 5% by score. The planted assignment
        // appears in 50% of the tail but only ~5% of the rest.
        let n = 2000;
        let mut messages = Vec::new();
        for i in 0..n {
            let in_tail = i < 100;
            let use_planted = if in_tail { i % 2 == 0 } else { i % 20 == 0 };
            let p = if in_tail { 0.99 } else { 0.2 };
            let assignment = if use_planted {
                planted.clone()
            } else {
                neutral.clone()
            };
            messages.push(scored(&format!("m{i:05}"), p, assignment, "2025-W01"));
        }
        let (tail, _) = high_risk_tail(&messages, 0.05).unwrap();
        let rows = log_odds_enrichment(&messages, &tail, 0.01).unwrap();
        let z_of = |field: Field, tag: &str| {
            rows.iter()
                .find(|r| r.field == field && r.tag == tag)
                .map(|r| r.z)
                .unwrap()
        };
        assert!(
            z_of(Field::Cta, "Buy / invest / donate") > 3.0,
            "planted CTA z = {}",
            z_of(Field::Cta, "Buy / invest / donate")
        );
        assert!(
            z_of(Field::Evidence, "Chart / price graph / TA diagram") > 3.0,
            "planted evidence z too small"
        );
        // Sorted by z descending.
        for pair in rows.windows(2) {
            assert!(pair[0].z >= pair[1].z);
        }
    }

    #[test]
    fn enrichment_near_zero_when_proportions_match() {
        let rows_src = reference_gold_rows();
        let messages: Vec<ScoredMessage> = (0..2000)
            .map(|i| {
                scored(
                    &format!("m{i:05}"),
                    (i % 100) as f64 / 100.0,
                    rows_src[i % rows_src.len()].clone(),
                    "2025-W01",
                )
            })
            .collect();
        // Tail and rest see the same assignment mix by construction.
        let (tail, _) = high_risk_tail(&messages, 0.05).unwrap();
        let rows = log_odds_enrichment(&messages, &tail, 0.01).unwrap();
        for row in rows {
            assert!(
                row.z.abs() < 0.5,
                "{:?} z = {} on identical proportions",
                row.tag,
                row.z
            );
        }
    }

    #[test]
    fn enrichment_antisymmetric_under_swap() {
        let messages = sample_messages(500);
        let (tail, _) = high_risk_tail(&messages, 0.1).unwrap();
        let rest: Vec<usize> = (0..messages.len())
            .filter(|i| !tail.contains(i))
            .collect();
        let forward = log_odds_enrichment(&messages, &tail, 0.01).unwrap();
        let swapped = log_odds_enrichment(&messages, &rest, 0.01).unwrap();
        for row in &forward {
            let mirror = swapped
                .iter()
                .find(|r| r.field == row.field && r.tag == row.tag)
                .unwrap();
            assert!(
                (row.delta + mirror.delta).abs() < 1e-9,
                "delta not antisymmetric for {}",
                row.tag
            );
            assert!((row.z + mirror.z).abs() < 1e-9);
        }
    }

    #[test]
    fn tail_lift_examples() {
        // Uniformly distributed tag: lift 1.
        assert!((tail_lift(5, 100, 50, 1000).unwrap() - 1.0).abs() < 1e-12);
        // Tag only inside a 5% tail: lift 20.
        assert!((tail_lift(50, 50, 50, 1000).unwrap() - 20.0).abs() < 1e-12);
        // The reported-pattern check: share 29.7% of tail vs 5% overall.
        let lift = tail_lift(297, 1000, 1000, 20_000).unwrap();
        assert!((lift - 5.94).abs() < 1e-12);
        assert!(tail_lift(0, 100, 0, 1000).is_err());
    }

    #[test]
    fn prototypes_group_and_cover() {
        let rows = reference_gold_rows();
        // One assignment shared by everyone: a single prototype covering 100%.
        let messages: Vec<ScoredMessage> = (0..10)
            .map(|i| scored(&format!("m{i}"), 0.5, rows[0].clone(), "2025-W01"))
            .collect();
        let (tail, _) = high_risk_tail(&messages, 0.1).unwrap();
        let (prototypes, coverage) = build_prototypes(&messages, &tail).unwrap();
        assert_eq!(prototypes.len(), 1);
        assert_eq!(coverage.total, vec![1.0]);

        // Mixed: curve is nondecreasing and reaches 1.
        let messages = sample_messages(200);
        let (tail, _) = high_risk_tail(&messages, 0.05).unwrap();
        let (prototypes, coverage) = build_prototypes(&messages, &tail).unwrap();
        assert_eq!(prototypes.len(), 5);
        for pair in coverage.total.windows(2) {
            assert!(pair[1] >= pair[0]);
        }
        assert!((coverage.total.last().unwrap() - 1.0).abs() < 1e-12);
        assert!((coverage.tail.last().unwrap() - 1.0).abs() < 1e-12);
        // Counts descend.
        for pair in prototypes.windows(2) {
            assert!(pair[0].count >= pair[1].count);
        }
    }

    #[test]
    fn families_cluster_planted_blocks() {
        let vocab = Vocabulary::builtin();
        // Two clearly distinct prototype groups; k = 2 must separate them.
        let mut prototypes = Vec::new();
        for (i, theme) in ["Finance/Crypto", "Sports"].iter().enumerate() {
            for claim in [
                "Scarcity/FOMO tactic",
                "Opinion / subjective statement",
                "Announcement",
            ] {
                let mut a = TagAssignment::new(
                    vec![theme.to_string()],
                    vec![claim.to_string()],
                    vec![if i == 0 {
                        "Buy / invest / donate".to_string()
                    } else {
                        "No CTA".to_string()
                    }],
                    vec![if i == 0 {
                        "Chart / price graph / TA diagram".to_string()
                    } else {
                        "None / assertion only".to_string()
                    }],
                );
                a.canonicalize(vocab);
                prototypes.push(Prototype {
                    key: prototype_key(&a),
                    assignment: a,
                    count: 10,
                    tail_count: if i == 0 { 5 } else { 0 },
                    tail_lift: 0.0,
                });
            }
        }
        let clustering = cluster_families(
            &prototypes,
            30,
            120,
            &KmeansOptions {
                k: 2,
                seed: 9,
                ..KmeansOptions::default()
            },
        )
        .unwrap();
        assert!(clustering.silhouette > 0.3, "silhouette {}", clustering.silhouette);
        // The two theme groups end up in different families.
        let f0 = clustering.assignment[&prototypes[0].key];
        let f3 = clustering.assignment[&prototypes[3].key];
        assert_ne!(f0, f3);
        assert_eq!(
            clustering.assignment[&prototypes[1].key], f0,
            "same-group prototypes should share a family"
        );

        // Too few prototypes for k is an error.
        assert!(matches!(
            cluster_families(&prototypes[..1], 30, 120, &KmeansOptions::default()),
            Err(MonitorError::TooFewPrototypes { .. })
        ));
    }

    #[test]
    fn jsd_bounds_and_symmetry() {
        let p = [0.5, 0.5, 0.0];
        let q = [0.0, 0.0, 1.0];
        let jsd = jensen_shannon(&p, &q);
        assert!((jsd - std::f64::consts::LN_2).abs() < 1e-12, "max is ln 2, got {jsd}");
        assert_eq!(jensen_shannon(&p, &p), 0.0);
        let r = [0.2, 0.3, 0.5];
        assert!((jensen_shannon(&p, &r) - jensen_shannon(&r, &p)).abs() < 1e-15);
        assert!(jensen_shannon(&p, &r) > 0.0);
        assert!(jensen_shannon(&p, &r) <= std::f64::consts::LN_2);
    }

    #[test]
    fn drift_skips_thin_weeks() {
        let mut weekly: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
        weekly.insert("2025-W01".into(), (vec![10.0, 10.0], 300));
        weekly.insert("2025-W02".into(), (vec![1.0, 1.0], 50)); // under floor
        weekly.insert("2025-W03".into(), (vec![10.0, 10.0], 280));
        weekly.insert("2025-W04".into(), (vec![30.0, 10.0], 400));
        let drift = weekly_js_drift(&weekly, 200);
        assert_eq!(drift.len(), 2);
        assert_eq!(drift[0].from_week, "2025-W01");
        assert_eq!(drift[0].to_week, "2025-W03");
        assert!(drift[0].jsd.abs() < 1e-12, "identical distributions");
        assert!(drift[1].jsd > 0.0);
        assert!(drift[1].jsd <= std::f64::consts::LN_2);
    }

    #[test]
    fn peak_to_median_fixtures() {
        assert!((peak_to_median(&[0.1, 0.1, 0.1]).unwrap() - 1.0).abs() < 1e-12);
        assert!((peak_to_median(&[0.08, 0.08, 0.24]).unwrap() - 3.0).abs() < 1e-12);
        // The reported-pattern check: peak 23.5% over median 8.17%.
        let ratio = peak_to_median(&[0.05, 0.0817, 0.235]).unwrap();
        assert!((ratio - 0.235 / 0.0817).abs() < 1e-12);
        assert!((ratio - 2.88).abs() < 0.01);
        assert_eq!(
            peak_to_median(&[0.1, 0.2]).unwrap_err(),
            MonitorError::TooFewWeeks(2)
        );
        assert_eq!(
            peak_to_median(&[0.0, 0.0, 0.5]).unwrap_err(),
            MonitorError::ZeroMedian
        );
        // Even count: midpoint median.
        let ratio = peak_to_median(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert!((ratio - 0.4 / 0.25).abs() < 1e-12);
    }

    #[test]
    fn weekly_tag_share_bases() {
        let rows = reference_gold_rows();
        let messages = vec![
            scored("a", 0.9, rows[0].clone(), "2025-W01"),
            scored("b", 0.1, rows[3].clone(), "2025-W01"),
            scored("c", 0.5, rows[0].clone(), "2025-W02"),
        ];
        let count_shares =
            weekly_tag_shares(&messages, Field::Theme, "Finance/Crypto", ShareBasis::Count, 0);
        assert_eq!(count_shares[0], ("2025-W01".to_string(), 0.5));
        assert_eq!(count_shares[1], ("2025-W02".to_string(), 1.0));
        let mass_shares = weekly_tag_shares(
            &messages,
            Field::Theme,
            "Finance/Crypto",
            ShareBasis::RiskMass,
            0,
        );
        assert!((mass_shares[0].1 - 0.9).abs() < 1e-12);
    }
}
