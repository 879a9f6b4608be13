//! Dense and compressed-sparse-row matrices shared by the feature builders
//! and the trainer.
//!
//! The trainer only needs row dot products and scaled row accumulation, so
//! both layouts implement [`RowFeatures`] and the optimizer is written once.

use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * cols);
        for row in rows {
            assert_eq!(row.len(), cols, "ragged rows");
            data.extend(row);
        }
        DenseMatrix { rows: n, cols, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// New matrix holding the given rows, in the given order.
    pub fn gather_rows(&self, indices: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        DenseMatrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    pub rows: usize,
    pub cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn row_entries(&self, i: usize) -> (&[u32], &[f64]) {
        let span = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn gather_rows(&self, indices: &[usize]) -> CsrMatrix {
        let mut indptr = Vec::with_capacity(indices.len() + 1);
        indptr.push(0);
        let mut idx = Vec::new();
        let mut values = Vec::new();
        for &i in indices {
            let (cols, vals) = self.row_entries(i);
            idx.extend_from_slice(cols);
            values.extend_from_slice(vals);
            indptr.push(idx.len());
        }
        CsrMatrix {
            rows: indices.len(),
            cols: self.cols,
            indptr,
            indices: idx,
            values,
        }
    }
}

/// Row access used by the optimizer.
pub trait RowFeatures {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `w . x_i`
    fn dot_row(&self, i: usize, w: &[f64]) -> f64;
    /// `out += scale * x_i`
    fn add_scaled_row(&self, i: usize, scale: f64, out: &mut [f64]);
    fn all_finite(&self) -> bool;
}

impl RowFeatures for DenseMatrix {
    fn nrows(&self) -> usize {
        self.rows
    }

    fn ncols(&self) -> usize {
        self.cols
    }

    fn dot_row(&self, i: usize, w: &[f64]) -> f64 {
        self.row(i).iter().zip(w).map(|(x, w)| x * w).sum()
    }

    fn add_scaled_row(&self, i: usize, scale: f64, out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(self.row(i)) {
            *o += scale * x;
        }
    }

    fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl RowFeatures for CsrMatrix {
    fn nrows(&self) -> usize {
        self.rows
    }

    fn ncols(&self) -> usize {
        self.cols
    }

    fn dot_row(&self, i: usize, w: &[f64]) -> f64 {
        let (cols, vals) = self.row_entries(i);
        cols.iter()
            .zip(vals)
            .map(|(&c, &v)| v * w[c as usize])
            .sum()
    }

    fn add_scaled_row(&self, i: usize, scale: f64, out: &mut [f64]) {
        let (cols, vals) = self.row_entries(i);
        for (&c, &v) in cols.iter().zip(vals) {
            out[c as usize] += scale * v;
        }
    }

    fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Either matrix layout, as stored in a feature set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "snake_case")]
pub enum FeatureData {
    Dense(DenseMatrix),
    Sparse(CsrMatrix),
}

impl FeatureData {
    pub fn nrows(&self) -> usize {
        match self {
            FeatureData::Dense(m) => m.rows,
            FeatureData::Sparse(m) => m.rows,
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            FeatureData::Dense(m) => m.cols,
            FeatureData::Sparse(m) => m.cols,
        }
    }

    pub fn gather_rows(&self, indices: &[usize]) -> FeatureData {
        match self {
            FeatureData::Dense(m) => FeatureData::Dense(m.gather_rows(indices)),
            FeatureData::Sparse(m) => FeatureData::Sparse(m.gather_rows(indices)),
        }
    }

    pub fn all_finite(&self) -> bool {
        match self {
            FeatureData::Dense(m) => m.all_finite(),
            FeatureData::Sparse(m) => m.all_finite(),
        }
    }
}

impl RowFeatures for FeatureData {
    fn nrows(&self) -> usize {
        FeatureData::nrows(self)
    }

    fn ncols(&self) -> usize {
        FeatureData::ncols(self)
    }

    fn dot_row(&self, i: usize, w: &[f64]) -> f64 {
        match self {
            FeatureData::Dense(m) => m.dot_row(i, w),
            FeatureData::Sparse(m) => m.dot_row(i, w),
        }
    }

    fn add_scaled_row(&self, i: usize, scale: f64, out: &mut [f64]) {
        match self {
            FeatureData::Dense(m) => m.add_scaled_row(i, scale, out),
            FeatureData::Sparse(m) => m.add_scaled_row(i, scale, out),
        }
    }

    fn all_finite(&self) -> bool {
        FeatureData::all_finite(self)
    }
}

/// Persisted feature-matrix envelope: gzip-compressed JSON with the row-id
/// sidecar inline.
#[derive(Debug, Serialize, Deserialize)]
struct MatrixEnvelope {
    kind: String,
    space_hash: String,
    ids: Vec<String>,
    data: FeatureData,
}

pub fn write_matrix_file(
    path: &Path,
    kind: &str,
    space_hash: &str,
    ids: &[String],
    data: &FeatureData,
) -> std::io::Result<()> {
    let envelope = MatrixEnvelope {
        kind: kind.to_string(),
        space_hash: space_hash.to_string(),
        ids: ids.to_vec(),
        data: data.clone(),
    };
    let json = serde_json::to_vec(&envelope)?;
    let file = std::fs::File::create(path)?;
    let mut encoder = flate2::write::GzEncoder::new(file, flate2::Compression::default());
    encoder.write_all(&json)?;
    encoder.finish()?;
    Ok(())
}

pub fn read_matrix_file(
    path: &Path,
) -> std::io::Result<(String, String, Vec<String>, FeatureData)> {
    let file = std::fs::File::open(path)?;
    let mut decoder = flate2::read::GzDecoder::new(file);
    let mut json = Vec::new();
    decoder.read_to_end(&mut json)?;
    let envelope: MatrixEnvelope = serde_json::from_slice(&json)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
    Ok((envelope.kind, envelope.space_hash, envelope.ids, envelope.data))
}
