//! Evaluation harness: repeated-seed experiments, ablations, noise stress.
//!
//! One experiment = for each seed: build a group-disjoint split, run the
//! full supervised protocol (single representation or stacked ensemble),
//! collect test metrics. Reports carry mean and population standard
//! deviation over the seed list plus per-seed predictions for audit. A
//! failed seed aborts the experiment; nothing is skipped silently.

pub mod metrics;
mod splits;

pub use splits::{
    channel_disjoint_split, domain_disjoint_split, groups_disjoint, GroupKind, Split, SplitConfig,
    SplitError,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

use crate::codebook::Field;
use crate::features::{
    embedding_matrix, fit_standardizer, fit_tfidf, flip_noise_matrix, select_fields, DenseMatrix,
    EmbeddingTable, FeatureData, FeatureKind, FeatureSet, TagIndex, TfidfConfig,
};
use crate::hashing::sha256_hex;
use crate::learn::{
    ensemble_protocol, full_protocol, EnsemblePart, EvalRow, ProtocolConfig, TrainError,
};
use crate::urlkit::MaskedText;
use metrics::mean_std;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error("seed {seed}: {source}")]
    SeedFailed { seed: u64, source: TrainError },
    #[error("experiment needs at least one representation")]
    NoRepresentations,
    #[error("labels, groups, and features must align: {0}")]
    Misaligned(String),
    #[error("representation build failed: {0}")]
    Representation(String),
}

/// How one representation's feature matrices come into being per split.
///
/// Precomputed matrices (tag multi-hot, stacked inputs) are row-gathered;
/// TF-IDF and embedding standardization are *fit on the training rows of
/// each split* and then applied to validation and test, which is what
/// keeps the fit-on-train discipline inside the harness.
#[derive(Debug, Clone)]
pub enum RepresentationSource {
    Precomputed(FeatureSet),
    TfidfTexts {
        texts: Vec<MaskedText>,
        config: TfidfConfig,
    },
    Embeddings(DenseMatrix),
}

impl RepresentationSource {
    pub fn nrows(&self) -> usize {
        match self {
            RepresentationSource::Precomputed(set) => set.nrows(),
            RepresentationSource::TfidfTexts { texts, .. } => texts.len(),
            RepresentationSource::Embeddings(matrix) => matrix.rows,
        }
    }

    /// Convenience constructor from an embedding table and aligned ids.
    pub fn from_embeddings(
        ids: &[String],
        table: &EmbeddingTable,
    ) -> Result<RepresentationSource, crate::features::FeatureError> {
        Ok(RepresentationSource::Embeddings(embedding_matrix(
            ids, table,
        )?))
    }

    /// Build (train, val, test) feature sets for one split.
    fn build_split_sets(
        &self,
        ids: &[String],
        split: &Split,
    ) -> Result<(FeatureSet, FeatureSet, FeatureSet), EvalError> {
        match self {
            RepresentationSource::Precomputed(set) => Ok((
                set.gather(&split.train),
                set.gather(&split.val),
                set.gather(&split.test),
            )),
            RepresentationSource::TfidfTexts { texts, config } => {
                let pick = |indices: &[usize]| -> Vec<MaskedText> {
                    indices.iter().map(|&i| texts[i].clone()).collect()
                };
                let train_texts = pick(&split.train);
                let model = fit_tfidf(&train_texts, config.clone())
                    .map_err(|e| EvalError::Representation(e.to_string()))?;
                let space_hash = model.fingerprint();
                let make = |indices: &[usize], docs: &[MaskedText]| FeatureSet {
                    kind: FeatureKind::Tfidf,
                    space_hash: space_hash.clone(),
                    ids: indices.iter().map(|&i| ids[i].clone()).collect(),
                    data: FeatureData::Sparse(model.transform(docs)),
                };
                let val_texts = pick(&split.val);
                let test_texts = pick(&split.test);
                Ok((
                    make(&split.train, &train_texts),
                    make(&split.val, &val_texts),
                    make(&split.test, &test_texts),
                ))
            }
            RepresentationSource::Embeddings(matrix) => {
                let train = matrix.gather_rows(&split.train);
                let standardizer = fit_standardizer(&train);
                let space_hash = sha256_hex(
                    format!("embedding:dim={}:split={}", matrix.cols, split.seed).as_bytes(),
                );
                let make = |indices: &[usize], m: &DenseMatrix| FeatureSet {
                    kind: FeatureKind::Embedding,
                    space_hash: space_hash.clone(),
                    ids: indices.iter().map(|&i| ids[i].clone()).collect(),
                    data: FeatureData::Dense(standardizer.apply(m)),
                };
                let val = matrix.gather_rows(&split.val);
                let test = matrix.gather_rows(&split.test);
                Ok((
                    make(&split.train, &train),
                    make(&split.val, &val),
                    make(&split.test, &test),
                ))
            }
        }
    }
}

/// Everything a supervised experiment consumes. `representations` holds
/// one source for a single model, several for a stacked ensemble; all must
/// be row-aligned with `ids`.
pub struct ExperimentData {
    pub ids: Vec<String>,
    pub labels: Vec<u8>,
    pub domains: Vec<String>,
    pub channels: Vec<String>,
    pub representations: Vec<(String, RepresentationSource)>,
}

impl ExperimentData {
    fn validate(&self) -> Result<(), EvalError> {
        if self.representations.is_empty() {
            return Err(EvalError::NoRepresentations);
        }
        let n = self.ids.len();
        if self.labels.len() != n || self.domains.len() != n || self.channels.len() != n {
            return Err(EvalError::Misaligned(format!(
                "ids {} labels {} domains {} channels {}",
                n,
                self.labels.len(),
                self.domains.len(),
                self.channels.len()
            )));
        }
        for (name, source) in &self.representations {
            if source.nrows() != n {
                return Err(EvalError::Misaligned(format!(
                    "representation {name} has {} rows, expected {n}",
                    source.nrows()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub group_kind: GroupKind,
    pub split: SplitConfig,
    pub protocol: ProtocolConfig,
    /// Feed calibrated (instead of raw) base probabilities to the meta
    /// model of stacked ensembles.
    pub use_calibrated_bases: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seeds: (0..10).map(|i| 101 + i).collect(),
            group_kind: GroupKind::Domain,
            split: SplitConfig::default(),
            protocol: ProtocolConfig::default(),
            use_calibrated_bases: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub metrics: EvalRow,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
}

/// Per-seed test predictions, persisted for audit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedPredictions {
    pub seed: u64,
    pub ids: Vec<String>,
    pub labels: Vec<u8>,
    pub probs: Vec<f64>,
    pub preds: Vec<u8>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_seed: Vec<SeedOutcome>,
    pub mean: EvalRow,
    pub std: EvalRow,
}

impl MetricsReport {
    fn from_seed_outcomes(per_seed: Vec<SeedOutcome>) -> MetricsReport {
        let collect = |f: fn(&EvalRow) -> f64| -> Vec<f64> {
            per_seed.iter().map(|s| f(&s.metrics)).collect()
        };
        let agg = |f: fn(&EvalRow) -> f64| mean_std(&collect(f));
        let (acc_m, acc_s) = agg(|r| r.accuracy);
        let (auc_m, auc_s) = agg(|r| r.roc_auc);
        let (f1_m, f1_s) = agg(|r| r.macro_f1);
        let (brier_m, brier_s) = agg(|r| r.brier);
        let (ece_m, ece_s) = agg(|r| r.ece);
        MetricsReport {
            per_seed,
            mean: EvalRow {
                accuracy: acc_m,
                roc_auc: auc_m,
                macro_f1: f1_m,
                brier: brier_m,
                ece: ece_m,
            },
            std: EvalRow {
                accuracy: acc_s,
                roc_auc: auc_s,
                macro_f1: f1_s,
                brier: brier_s,
                ece: ece_s,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: MetricsReport,
    pub predictions: Vec<SeedPredictions>,
}

fn make_split(data: &ExperimentData, config: &ExperimentConfig, seed: u64) -> Result<Split, SplitError> {
    match config.group_kind {
        GroupKind::Domain => domain_disjoint_split(&data.domains, seed, &config.split),
        GroupKind::Channel => {
            channel_disjoint_split(&data.channels, &data.labels, seed, &config.split)
        }
    }
}

fn gather_labels(labels: &[u8], indices: &[usize]) -> Vec<u8> {
    indices.iter().map(|&i| labels[i]).collect()
}

fn run_one_seed(
    data: &ExperimentData,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(SeedOutcome, SeedPredictions), EvalError> {
    let split = make_split(data, config, seed)?;
    debug_assert!(groups_disjoint(
        &split,
        match config.group_kind {
            GroupKind::Domain => &data.domains,
            GroupKind::Channel => &data.channels,
        }
    ));
    let train_y = gather_labels(&data.labels, &split.train);
    let val_y = gather_labels(&data.labels, &split.val);
    let test_y = gather_labels(&data.labels, &split.test);
    let mut protocol = config.protocol.clone();
    protocol.seed = seed;

    let (test_row, test_probs, test_preds) = if data.representations.len() == 1 {
        let (_, source) = &data.representations[0];
        let (train_x, val_x, test_x) = source.build_split_sets(&data.ids, &split)?;
        let outcome = full_protocol(
            (&train_x, &train_y),
            (&val_x, &val_y),
            (&test_x, &test_y),
            &protocol,
        )
        .map_err(|source| EvalError::SeedFailed { seed, source })?;
        (outcome.test, outcome.test_probs, outcome.test_preds)
    } else {
        let mut gathered: Vec<(String, FeatureSet, FeatureSet, FeatureSet)> = Vec::new();
        for (name, source) in &data.representations {
            let (train, val, test) = source.build_split_sets(&data.ids, &split)?;
            gathered.push((name.clone(), train, val, test));
        }
        let parts: Vec<EnsemblePart<'_>> = gathered
            .iter()
            .map(|(name, train, val, test)| EnsemblePart {
                name: name.clone(),
                train,
                val,
                test,
            })
            .collect();
        let outcome = ensemble_protocol(
            &parts,
            &train_y,
            &val_y,
            &test_y,
            &protocol,
            config.use_calibrated_bases,
        )
        .map_err(|source| EvalError::SeedFailed { seed, source })?;
        (outcome.test, outcome.test_probs, outcome.test_preds)
    };

    let outcome = SeedOutcome {
        seed,
        metrics: test_row,
        train_size: split.train.len(),
        val_size: split.val.len(),
        test_size: split.test.len(),
    };
    let predictions = SeedPredictions {
        seed,
        ids: split.test.iter().map(|&i| data.ids[i].clone()).collect(),
        labels: test_y,
        probs: test_probs,
        preds: test_preds,
    };
    Ok((outcome, predictions))
}

/// Run the protocol across every seed; seeds execute in parallel and the
/// report preserves seed order.
pub fn run_experiment(
    data: &ExperimentData,
    config: &ExperimentConfig,
) -> Result<ExperimentOutcome, EvalError> {
    data.validate()?;
    let results: Result<Vec<_>, EvalError> = config
        .seeds
        .par_iter()
        .map(|&seed| run_one_seed(data, config, seed))
        .collect();
    let mut per_seed = Vec::new();
    let mut predictions = Vec::new();
    for (outcome, preds) in results? {
        per_seed.push(outcome);
        predictions.push(preds);
    }
    Ok(ExperimentOutcome {
        report: MetricsReport::from_seed_outcomes(per_seed),
        predictions,
    })
}

// ---------------------------------------------------------------------------
// Tag-field ablations
// ---------------------------------------------------------------------------

/// The standard ablation rows: all fields, theme only, style (claim + cta
/// + evidence), cta only, and everything minus cta.
pub fn standard_ablation_subsets() -> Vec<(String, BTreeSet<Field>)> {
    let set = |fields: &[Field]| fields.iter().copied().collect::<BTreeSet<Field>>();
    vec![
        ("all_tags".to_string(), set(&Field::ALL)),
        ("theme_only".to_string(), set(&[Field::Theme])),
        (
            "style_only".to_string(),
            set(&[Field::Claim, Field::Cta, Field::Evidence]),
        ),
        ("cta_only".to_string(), set(&[Field::Cta])),
        (
            "all_minus_cta".to_string(),
            set(&[Field::Theme, Field::Claim, Field::Evidence]),
        ),
    ]
}

/// Run one experiment per field subset over the tag representation. The
/// first representation must be a precomputed tag matrix.
pub fn ablation_suite(
    data: &ExperimentData,
    index: &TagIndex,
    subsets: &[(String, BTreeSet<Field>)],
    config: &ExperimentConfig,
) -> Result<Vec<(String, MetricsReport)>, EvalError> {
    data.validate()?;
    let (base_name, base_source) = &data.representations[0];
    let RepresentationSource::Precomputed(base_set) = base_source else {
        return Err(EvalError::Representation(
            "ablations need a precomputed tag matrix".into(),
        ));
    };
    let mut rows = Vec::new();
    for (name, subset) in subsets {
        let restricted = select_fields(base_set, index, subset)
            .map_err(|e| EvalError::Misaligned(e.to_string()))?;
        let subset_data = ExperimentData {
            ids: data.ids.clone(),
            labels: data.labels.clone(),
            domains: data.domains.clone(),
            channels: data.channels.clone(),
            representations: vec![(
                base_name.clone(),
                RepresentationSource::Precomputed(restricted),
            )],
        };
        let outcome = run_experiment(&subset_data, config)?;
        rows.push((name.clone(), outcome.report));
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Tagger-noise stress test
// ---------------------------------------------------------------------------

/// Macro-F1 under independent bit-flip noise at each rate, on one fixed
/// representative split. Noise is injected into the tag matrix before the
/// split is taken, so train, validation, and test features are all
/// corrupted: end-to-end tagger noise.
pub fn noise_stress(
    data: &ExperimentData,
    rates: &[f64],
    seed: u64,
    config: &ExperimentConfig,
) -> Result<Vec<(f64, f64)>, EvalError> {
    use rand::SeedableRng;
    data.validate()?;
    let (name, base_source) = &data.representations[0];
    let RepresentationSource::Precomputed(base_set) = base_source else {
        return Err(EvalError::Representation(
            "noise stress needs a precomputed tag matrix".into(),
        ));
    };
    let mut curve = Vec::new();
    for (rate_idx, &rate) in rates.iter().enumerate() {
        let mut noisy = base_set.clone();
        if rate > 0.0 {
            let FeatureData::Dense(matrix) = &mut noisy.data else {
                return Err(EvalError::Misaligned(
                    "noise stress needs a dense tag matrix".into(),
                ));
            };
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(
                crate::hashing::mix64(seed ^ (rate_idx as u64) << 32),
            );
            flip_noise_matrix(matrix, rate, &mut rng);
        }
        let noisy_data = ExperimentData {
            ids: data.ids.clone(),
            labels: data.labels.clone(),
            domains: data.domains.clone(),
            channels: data.channels.clone(),
            representations: vec![(name.clone(), RepresentationSource::Precomputed(noisy))],
        };
        let single_seed = ExperimentConfig {
            seeds: vec![seed],
            ..config.clone()
        };
        let outcome = run_experiment(&noisy_data, &single_seed)?;
        curve.push((rate, outcome.report.mean.macro_f1));
    }
    Ok(curve)
}
