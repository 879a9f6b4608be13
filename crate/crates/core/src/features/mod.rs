//! Feature construction: multi-hot tag vectors, TF-IDF, external embeddings
//! with train-fit standardization, field subsets, and noise injection.
//!
//! Fit-on-train discipline is structural: every `fit_*` function consumes
//! only the training-split slice handed to it, and the resulting models are
//! immutable. Text enters exclusively as [`MaskedText`], so raw URLs cannot
//! reach any feature path.

mod matrix;
mod tfidf;

pub use matrix::{
    read_matrix_file, write_matrix_file, CsrMatrix, DenseMatrix, FeatureData, RowFeatures,
};
pub use tfidf::{fit_tfidf, TfidfConfig, TfidfModel};

use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use thiserror::Error;

use crate::codebook::{Field, TagAssignment, Vocabulary};
use crate::hashing::sha256_hex;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("empty training split")]
    EmptyTraining,
    #[error("empty field subset")]
    EmptySubset,
    #[error("embedding dimension mismatch: expected {expected}, row {row} has {found}")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        row: usize,
    },
    #[error("missing embedding vectors for {0} ids (first: {1})")]
    MissingIds(usize, String),
    #[error("bad embedding file: {0}")]
    BadEmbeddingFile(String),
}

/// The feature spaces the trainer understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    TagMultihot,
    Tfidf,
    Embedding,
    /// Stacked base-model probability columns.
    StackedProbs,
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            FeatureKind::TagMultihot => "tag_multihot",
            FeatureKind::Tfidf => "tfidf",
            FeatureKind::Embedding => "embedding",
            FeatureKind::StackedProbs => "stacked_probs",
        };
        f.write_str(name)
    }
}

/// A feature matrix bound to the ids of its rows and the hash of its
/// column space. Models refuse predictions on a mismatched hash.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSet {
    pub kind: FeatureKind,
    pub space_hash: String,
    pub ids: Vec<String>,
    pub data: FeatureData,
}

impl FeatureSet {
    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    /// Row subset in the given order; the column space is unchanged.
    pub fn gather(&self, indices: &[usize]) -> FeatureSet {
        FeatureSet {
            kind: self.kind,
            space_hash: self.space_hash.clone(),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            data: self.data.gather_rows(indices),
        }
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        write_matrix_file(
            path,
            &self.kind.to_string(),
            &self.space_hash,
            &self.ids,
            &self.data,
        )
    }

    pub fn read(path: &Path) -> std::io::Result<FeatureSet> {
        let (kind, space_hash, ids, data) = read_matrix_file(path)?;
        let kind = match kind.as_str() {
            "tag_multihot" => FeatureKind::TagMultihot,
            "tfidf" => FeatureKind::Tfidf,
            "embedding" => FeatureKind::Embedding,
            "stacked_probs" => FeatureKind::StackedProbs,
            other => {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("unknown feature kind {other:?}"),
                ))
            }
        };
        Ok(FeatureSet {
            kind,
            space_hash,
            ids,
            data,
        })
    }
}

// ---------------------------------------------------------------------------
// Tag index and multi-hot vectors
// ---------------------------------------------------------------------------

/// Column policy for the tag index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexMode {
    /// Every vocabulary label gets a column (default): ablation column
    /// spaces stay comparable across splits.
    FullVocabulary,
    /// Only labels seen in the training assignments get columns.
    SeenOnly,
}

/// Ordered (field, label) -> column mapping, fit on training data only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TagIndex {
    columns: Vec<(Field, String)>,
    #[serde(skip)]
    lookup: HashMap<(Field, String), usize>,
    fingerprint: String,
}

impl TagIndex {
    fn build(columns: Vec<(Field, String)>) -> TagIndex {
        let lookup = columns
            .iter()
            .enumerate()
            .map(|(i, (f, l))| ((*f, l.clone()), i))
            .collect();
        let mut buf = String::from("tag_index");
        for (field, label) in &columns {
            buf.push('\u{1f}');
            buf.push_str(field.name());
            buf.push(':');
            buf.push_str(label);
        }
        TagIndex {
            columns,
            lookup,
            fingerprint: sha256_hex(buf.as_bytes()),
        }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn columns(&self) -> &[(Field, String)] {
        &self.columns
    }

    pub fn column_of(&self, field: Field, label: &str) -> Option<usize> {
        self.lookup.get(&(field, label.to_string())).copied()
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Rebuild the lookup after deserialization.
    pub fn rehydrate(&mut self) {
        self.lookup = self
            .columns
            .iter()
            .enumerate()
            .map(|(i, (f, l))| ((*f, l.clone()), i))
            .collect();
    }

    /// Column mask for a field subset.
    pub fn field_mask(&self, subset: &BTreeSet<Field>) -> Result<Vec<bool>, FeatureError> {
        if subset.is_empty() {
            return Err(FeatureError::EmptySubset);
        }
        Ok(self
            .columns
            .iter()
            .map(|(field, _)| subset.contains(field))
            .collect())
    }
}

/// Fit the tag index. Order is canonical: theme, claim, cta, evidence, with
/// vocabulary label order inside each field.
pub fn fit_tag_index(
    train_assignments: &[TagAssignment],
    vocab: &Vocabulary,
    mode: IndexMode,
) -> Result<TagIndex, FeatureError> {
    if train_assignments.is_empty() {
        return Err(FeatureError::EmptyTraining);
    }
    let mut columns = Vec::new();
    for field in Field::ALL {
        for label in vocab.labels(field) {
            let include = match mode {
                IndexMode::FullVocabulary => true,
                IndexMode::SeenOnly => train_assignments
                    .iter()
                    .any(|a| a.field(field).iter().any(|l| l == label)),
            };
            if include {
                columns.push((field, label.clone()));
            }
        }
    }
    Ok(TagIndex::build(columns))
}

/// Multi-hot row for one assignment. Labels outside the index are collected
/// for the audit trail instead of failing.
pub fn tag_vector(assignment: &TagAssignment, index: &TagIndex) -> (Vec<f64>, Vec<(Field, String)>) {
    let mut row = vec![0.0; index.len()];
    let mut ignored = Vec::new();
    for field in Field::ALL {
        for label in assignment.field(field) {
            match index.column_of(field, label) {
                Some(col) => row[col] = 1.0,
                None => ignored.push((field, label.clone())),
            }
        }
    }
    (row, ignored)
}

/// Multi-hot matrix for a list of assignments.
pub fn tag_matrix(
    assignments: &[TagAssignment],
    index: &TagIndex,
) -> (DenseMatrix, Vec<(usize, Field, String)>) {
    let mut matrix = DenseMatrix::zeros(assignments.len(), index.len());
    let mut audit = Vec::new();
    for (i, assignment) in assignments.iter().enumerate() {
        let (row, ignored) = tag_vector(assignment, index);
        matrix.row_mut(i).copy_from_slice(&row);
        for (field, label) in ignored {
            audit.push((i, field, label));
        }
    }
    (matrix, audit)
}

/// Feature set wrapper for a tag matrix.
pub fn tag_feature_set(
    assignments: &[TagAssignment],
    ids: &[String],
    index: &TagIndex,
) -> FeatureSet {
    let (matrix, _) = tag_matrix(assignments, index);
    FeatureSet {
        kind: FeatureKind::TagMultihot,
        space_hash: index.fingerprint().to_string(),
        ids: ids.to_vec(),
        data: FeatureData::Dense(matrix),
    }
}

/// Zero out the columns of fields outside `subset`, keeping the dimension
/// (column spaces stay comparable across ablations). The space hash records
/// the subset.
pub fn select_fields(
    set: &FeatureSet,
    index: &TagIndex,
    subset: &BTreeSet<Field>,
) -> Result<FeatureSet, FeatureError> {
    let mask = index.field_mask(subset)?;
    let FeatureData::Dense(dense) = &set.data else {
        panic!("field selection applies to dense tag matrices");
    };
    let mut restricted = dense.clone();
    for i in 0..restricted.rows {
        let row = restricted.row_mut(i);
        for (col, keep) in mask.iter().enumerate() {
            if !keep {
                row[col] = 0.0;
            }
        }
    }
    let subset_names: Vec<&str> = subset.iter().map(|f| f.name()).collect();
    Ok(FeatureSet {
        kind: set.kind,
        space_hash: sha256_hex(
            format!("{}|subset:{}", set.space_hash, subset_names.join(",")).as_bytes(),
        ),
        ids: set.ids.clone(),
        data: FeatureData::Dense(restricted),
    })
}

// ---------------------------------------------------------------------------
// Embeddings and standardization
// ---------------------------------------------------------------------------

/// Externally computed embedding vectors, keyed by message id.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub dim: usize,
    map: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn get(&self, id: &str) -> Option<&Vec<f64>> {
        self.map.get(id)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn as_map(&self) -> &HashMap<String, Vec<f64>> {
        &self.map
    }
}

/// Load embeddings from CSV: a one-line header `dim,D`, then rows
/// `id,v1,...,vD`.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable, FeatureError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| FeatureError::BadEmbeddingFile(e.to_string()))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| FeatureError::BadEmbeddingFile("empty file".into()))?;
    let dim: usize = header
        .strip_prefix("dim,")
        .and_then(|d| d.trim().parse().ok())
        .ok_or_else(|| {
            FeatureError::BadEmbeddingFile(format!("header must be `dim,<n>`, got {header:?}"))
        })?;
    let mut map = HashMap::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let id = parts
            .next()
            .ok_or_else(|| FeatureError::BadEmbeddingFile(format!("line {}", lineno + 1)))?
            .to_string();
        let values: Result<Vec<f64>, _> = parts.map(|p| p.trim().parse::<f64>()).collect();
        let values =
            values.map_err(|e| FeatureError::BadEmbeddingFile(format!("line {}: {e}", lineno + 1)))?;
        if values.len() != dim {
            return Err(FeatureError::DimensionMismatch {
                expected: dim,
                found: values.len(),
                row: lineno + 1,
            });
        }
        map.insert(id, values);
    }
    Ok(EmbeddingTable { dim, map })
}

/// Write an embedding table (used by the synthetic generator).
pub fn write_embeddings(
    path: &Path,
    dim: usize,
    rows: &[(String, Vec<f64>)],
) -> std::io::Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "dim,{dim}")?;
    for (id, values) in rows {
        let joined: Vec<String> = values.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{id},{}", joined.join(","))?;
    }
    Ok(())
}

/// Dense matrix of embeddings for the given ids, in order. Missing ids are
/// an error that lists them.
pub fn embedding_matrix(ids: &[String], table: &EmbeddingTable) -> Result<DenseMatrix, FeatureError> {
    let missing: Vec<&String> = ids.iter().filter(|id| table.get(id).is_none()).collect();
    if !missing.is_empty() {
        return Err(FeatureError::MissingIds(
            missing.len(),
            missing[0].clone(),
        ));
    }
    let rows: Vec<Vec<f64>> = ids.iter().map(|id| table.get(id).unwrap().clone()).collect();
    Ok(DenseMatrix::from_rows(rows))
}

/// Per-column mean and standard deviation, fit on the training split only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Standard-deviation floor guarding constant columns.
pub const STD_FLOOR: f64 = 1e-8;

pub fn fit_standardizer(train: &DenseMatrix) -> Standardizer {
    let n = train.rows.max(1) as f64;
    let mut mean = vec![0.0; train.cols];
    for i in 0..train.rows {
        for (m, x) in mean.iter_mut().zip(train.row(i)) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut var = vec![0.0; train.cols];
    for i in 0..train.rows {
        for ((v, x), m) in var.iter_mut().zip(train.row(i)).zip(&mean) {
            let d = x - m;
            *v += d * d;
        }
    }
    let std = var
        .into_iter()
        .map(|v| (v / n).sqrt().max(STD_FLOOR))
        .collect();
    Standardizer { mean, std }
}

impl Standardizer {
    /// Z-score a matrix with the fitted (train) statistics.
    pub fn apply(&self, matrix: &DenseMatrix) -> DenseMatrix {
        assert_eq!(matrix.cols, self.mean.len(), "column count mismatch");
        let mut out = matrix.clone();
        for i in 0..out.rows {
            let row = out.row_mut(i);
            for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *x = (*x - m) / s;
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Noise injection
// ---------------------------------------------------------------------------

/// Flip each binary entry independently with probability `q`.
pub fn flip_noise<R: rand::Rng>(row: &mut [f64], q: f64, rng: &mut R) {
    if q <= 0.0 {
        return;
    }
    for x in row.iter_mut() {
        if rng.gen::<f64>() < q {
            *x = 1.0 - *x;
        }
    }
}

/// Flip every entry of a binary matrix independently with probability `q`.
pub fn flip_noise_matrix<R: rand::Rng>(matrix: &mut DenseMatrix, q: f64, rng: &mut R) {
    flip_noise(&mut matrix.data, q, rng);
}
