//! Artifact provenance and structured audit records.
//!
//! Every pipeline stage writes its outputs together with a `*.meta.json`
//! provenance document carrying the resolved config hash, the digests of the
//! input artifacts it consumed, and the digests of the files it produced.
//! Re-running a stage with identical inputs and config must reproduce every
//! output byte for byte, so nothing here ever records wall-clock time.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::hashing::sha256_hex;

/// Version stamped into stage outputs; bump on breaking format changes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("missing input: expected {0}")]
    MissingInput(PathBuf),
    #[error("schema version mismatch in {path}: found {found}, expected {expected}")]
    SchemaVersionMismatch {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error in {path}: {detail}")]
    Parse { path: PathBuf, detail: String },
}

impl ArtifactError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        ArtifactError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Structured audit record: warnings and quarantine events emitted as JSONL.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditRecord {
    pub stage: String,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message_id: Option<String>,
    pub detail: String,
}

impl AuditRecord {
    pub fn new(stage: &str, kind: &str, message_id: Option<&str>, detail: impl Into<String>) -> Self {
        AuditRecord {
            stage: stage.to_string(),
            kind: kind.to_string(),
            message_id: message_id.map(String::from),
            detail: detail.into(),
        }
    }
}

/// Provenance document for one stage run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageMeta {
    pub stage: String,
    pub schema_version: u32,
    pub config_hash: String,
    /// Digests of consumed artifacts, keyed by role name.
    pub inputs: BTreeMap<String, String>,
    /// Digests of produced files, keyed by file name.
    pub outputs: BTreeMap<String, String>,
}

impl StageMeta {
    pub fn new(stage: &str, config_hash: &str) -> Self {
        StageMeta {
            stage: stage.to_string(),
            schema_version: SCHEMA_VERSION,
            config_hash: config_hash.to_string(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    /// Record an input file digest; errors if the file is missing.
    pub fn add_input(&mut self, role: &str, path: &Path) -> Result<(), ArtifactError> {
        let digest = hash_file(path)?;
        self.inputs.insert(role.to_string(), digest);
        Ok(())
    }

    /// Record an output file digest after it has been written.
    pub fn add_output(&mut self, path: &Path) -> Result<(), ArtifactError> {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().to_string())
            .unwrap_or_else(|| path.display().to_string());
        let digest = hash_file(path)?;
        self.outputs.insert(name, digest);
        Ok(())
    }

    /// Write `<stage>.meta.json` next to the stage outputs.
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf, ArtifactError> {
        let path = out_dir.join(format!("{}.meta.json", self.stage));
        let body = serde_json::to_string_pretty(self).expect("meta serializes");
        fs::write(&path, body).map_err(|e| ArtifactError::io(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<StageMeta, ArtifactError> {
        let body = fs::read_to_string(path).map_err(|_| ArtifactError::MissingInput(path.into()))?;
        let meta: StageMeta = serde_json::from_str(&body).map_err(|e| ArtifactError::Parse {
            path: path.into(),
            detail: e.to_string(),
        })?;
        if meta.schema_version != SCHEMA_VERSION {
            return Err(ArtifactError::SchemaVersionMismatch {
                path: path.into(),
                found: meta.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        Ok(meta)
    }
}

/// SHA-256 digest of a file's contents.
pub fn hash_file(path: &Path) -> Result<String, ArtifactError> {
    let bytes = fs::read(path).map_err(|_| ArtifactError::MissingInput(path.into()))?;
    Ok(sha256_hex(&bytes))
}

/// Require that an upstream artifact exists before a stage starts.
pub fn require_input(path: &Path) -> Result<(), ArtifactError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(ArtifactError::MissingInput(path.to_path_buf()))
    }
}

/// Write records as JSONL (one JSON document per line).
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), ArtifactError> {
    let mut buf = Vec::new();
    for record in records {
        serde_json::to_writer(&mut buf, record).map_err(|e| ArtifactError::Parse {
            path: path.into(),
            detail: e.to_string(),
        })?;
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(|e| ArtifactError::io(path, e))
}

/// Read JSONL records, skipping blank lines.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, ArtifactError> {
    let file = fs::File::open(path).map_err(|_| ArtifactError::MissingInput(path.into()))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| ArtifactError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| ArtifactError::Parse {
            path: path.into(),
            detail: format!("line {}: {}", lineno + 1, e),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Append-or-create an audit JSONL file.
pub fn append_audit(path: &Path, records: &[AuditRecord]) -> Result<(), ArtifactError> {
    if records.is_empty() {
        return Ok(());
    }
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| ArtifactError::io(path, e))?;
    for record in records {
        let line = serde_json::to_string(record).expect("audit record serializes");
        writeln!(file, "{line}").map_err(|e| ArtifactError::io(path, e))?;
    }
    Ok(())
}
