//! Pipeline configuration: one TOML file covering every stage.
//!
//! Defaults follow the declared constants throughout the crate (label
//! thresholds 0.3/0.8, dedup 0.85/3/0.95, C grid {0.1, 1, 10}, threshold
//! grid 0.05..0.95, 15 calibration bins, 5% tail, k = 25 families, 200
//! messages per retained week). `${VAR}` references in path and string
//! fields interpolate from the environment so secrets never live in files.
//! Every run writes a resolved-config snapshot next to its outputs, and
//! the snapshot's hash threads through all stage provenance.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::corpus::{DedupThresholds, FingerprintParams};
use crate::hashing::sha256_hex;
use crate::supervision::{RatingApiConfig, Thresholds};
use crate::tagger::TaggerConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config unreadable: {0}")]
    Unreadable(String),
    #[error("config invalid: {0}")]
    Invalid(String),
    #[error("environment variable {0} referenced by config is not set")]
    MissingEnv(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Raw message dump (JSONL).
    pub messages: PathBuf,
    /// Rating dump CSV.
    pub ratings: PathBuf,
    /// Public-suffix rules file; empty means the built-in subset.
    pub suffix_rules: Option<PathBuf>,
    /// Redirect fixture CSV; empty means no offline redirects.
    pub redirects: Option<PathBuf>,
    /// External embedding vectors (CSV with a dim header).
    pub embeddings: Option<PathBuf>,
    /// Precomputed tag file for the file-mode tagger.
    pub tag_file: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            messages: PathBuf::from("messages.jsonl"),
            ratings: PathBuf::from("ratings.csv"),
            suffix_rules: None,
            redirects: None,
            embeddings: None,
            tag_file: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub min_tokens: usize,
    pub fingerprint: FingerprintParams,
    pub dedup: DedupThresholds,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            min_tokens: 3,
            fingerprint: FingerprintParams::default(),
            dedup: DedupThresholds::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupervisionConfig {
    pub thresholds: Thresholds,
    /// Optional remote rating API; absent keeps runs offline.
    pub api: Option<RatingApiConfig>,
}

impl Default for SupervisionConfig {
    fn default() -> Self {
        SupervisionConfig {
            thresholds: Thresholds::default(),
            api: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub c_grid: Vec<f64>,
    pub max_iter: usize,
    pub seeds: Vec<u64>,
    pub val_frac: f64,
    pub test_frac: f64,
    pub channel_candidates: usize,
    /// Representations to evaluate: subsets of {tags, tfidf, embedding},
    /// plus ensembles written as "a+b".
    pub representations: Vec<String>,
    pub use_calibrated_bases: bool,
    pub tfidf_max_vocab: usize,
    pub noise_rates: Vec<f64>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            c_grid: vec![0.1, 1.0, 10.0],
            max_iter: 1000,
            seeds: (0..10).map(|i| 101 + i).collect(),
            val_frac: 0.2,
            test_frac: 0.2,
            channel_candidates: 50,
            representations: vec!["tags".to_string()],
            use_calibrated_bases: false,
            tfidf_max_vocab: 50_000,
            noise_rates: vec![0.0, 0.05, 0.10, 0.20],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorConfig {
    pub tail_frac: f64,
    pub families_k: usize,
    pub kmeans_restarts: usize,
    /// Dirichlet prior strength as a fraction of the per-field tag count.
    pub alpha0_factor: f64,
    pub min_week_count: usize,
    /// Weekly share numerator: "count" or "risk_mass".
    pub share_basis: crate::monitor::ShareBasis,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            tail_frac: 0.05,
            families_k: 25,
            kmeans_restarts: 10,
            alpha0_factor: 0.01,
            min_week_count: 200,
            share_basis: crate::monitor::ShareBasis::Count,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub corpus: CorpusConfig,
    pub supervision: SupervisionConfig,
    pub tagger: TaggerConfig,
    pub training: TrainingConfig,
    pub monitor: MonitorConfig,
    pub seed: u64,
}

/// Replace `${VAR}` references with environment values.
fn interpolate(text: &str) -> Result<String, ConfigError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let tail = &rest[start + 2..];
        let end = tail
            .find('}')
            .ok_or_else(|| ConfigError::Invalid("unterminated ${ reference".into()))?;
        let name = &tail[..end];
        let value =
            std::env::var(name).map_err(|_| ConfigError::MissingEnv(name.to_string()))?;
        out.push_str(&value);
        rest = &tail[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<PipelineConfig, ConfigError> {
        let interpolated = interpolate(text)?;
        toml::from_str(&interpolated).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<PipelineConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Unreadable(format!("{}: {e}", path.display())))?;
        let config = Self::from_toml(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.supervision
            .thresholds
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.training.c_grid.is_empty() {
            return Err(ConfigError::Invalid("empty C grid".into()));
        }
        if self.training.seeds.is_empty() {
            return Err(ConfigError::Invalid("empty seed list".into()));
        }
        if !(0.0 < self.monitor.tail_frac && self.monitor.tail_frac < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "tail_frac {} outside (0, 1)",
                self.monitor.tail_frac
            )));
        }
        if self.training.representations.is_empty() {
            return Err(ConfigError::Invalid("no representations configured".into()));
        }
        Ok(())
    }

    /// Canonical serialized form: the resolved-config snapshot.
    pub fn snapshot(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Hash of the resolved snapshot; threads through stage provenance.
    pub fn hash(&self) -> String {
        sha256_hex(self.snapshot().as_bytes())
    }

    /// Write the snapshot next to a run's outputs.
    pub fn write_snapshot(&self, out_dir: &Path) -> std::io::Result<PathBuf> {
        let path = out_dir.join("resolved_config.toml");
        std::fs::write(&path, self.snapshot())?;
        Ok(path)
    }
}
