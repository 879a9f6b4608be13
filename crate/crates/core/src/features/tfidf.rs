//! TF-IDF over masked text.
//!
//! Recipe: lowercase word tokens (letters/digits, length >= 2), unigrams
//! plus bigrams, smoothed idf `ln((1+N)/(1+df)) + 1`, L2-normalized rows,
//! vocabulary capped by document frequency. The vocabulary is fit on the
//! training split only; unseen test tokens contribute nothing.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use super::matrix::CsrMatrix;
use super::FeatureError;
use crate::hashing::sha256_hex;
use crate::urlkit::MaskedText;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TfidfConfig {
    /// Vocabulary cap; terms kept by descending document frequency.
    pub max_vocab: usize,
    /// Minimum token length in characters.
    pub min_token_len: usize,
    /// Include bigrams alongside unigrams.
    pub bigrams: bool,
}

impl Default for TfidfConfig {
    fn default() -> Self {
        TfidfConfig {
            max_vocab: 50_000,
            min_token_len: 2,
            bigrams: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TfidfModel {
    vocab: HashMap<String, u32>,
    idf: Vec<f64>,
    n_docs: usize,
    config: TfidfConfig,
}

fn word_tokens(text: &str, min_len: usize) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= min_len)
        .map(str::to_string)
        .collect()
}

fn terms_of(text: &str, config: &TfidfConfig) -> Vec<String> {
    let tokens = word_tokens(text, config.min_token_len);
    let mut terms = tokens.clone();
    if config.bigrams {
        terms.extend(tokens.windows(2).map(|w| format!("{} {}", w[0], w[1])));
    }
    terms
}

/// Fit the vocabulary and idf weights on the training split only.
pub fn fit_tfidf(train_texts: &[MaskedText], config: TfidfConfig) -> Result<TfidfModel, FeatureError> {
    if train_texts.is_empty() {
        return Err(FeatureError::EmptyTraining);
    }
    let n_docs = train_texts.len();
    let mut df: HashMap<String, usize> = HashMap::new();
    for doc in train_texts {
        let mut terms = terms_of(&doc.text, &config);
        terms.sort_unstable();
        terms.dedup();
        for term in terms {
            *df.entry(term).or_insert(0) += 1;
        }
    }
    // Cap by document frequency, ties broken lexicographically so the
    // vocabulary is deterministic.
    let mut ranked: Vec<(String, usize)> = df.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(config.max_vocab);
    ranked.sort_by(|a, b| a.0.cmp(&b.0));

    let mut vocab = HashMap::with_capacity(ranked.len());
    let mut idf = Vec::with_capacity(ranked.len());
    for (col, (term, term_df)) in ranked.into_iter().enumerate() {
        vocab.insert(term, col as u32);
        idf.push(((1.0 + n_docs as f64) / (1.0 + term_df as f64)).ln() + 1.0);
    }
    Ok(TfidfModel {
        vocab,
        idf,
        n_docs,
        config,
    })
}

impl TfidfModel {
    pub fn vocab_len(&self) -> usize {
        self.vocab.len()
    }

    pub fn idf_of(&self, term: &str) -> Option<f64> {
        self.vocab.get(term).map(|&c| self.idf[c as usize])
    }

    /// Stable descriptor of the fitted vocabulary and weights.
    pub fn fingerprint(&self) -> String {
        let mut entries: Vec<(&String, &u32)> = self.vocab.iter().collect();
        entries.sort();
        let mut buf = format!("tfidf:{}:{}", self.n_docs, self.vocab.len());
        for (term, col) in entries {
            buf.push('\u{1f}');
            buf.push_str(term);
            buf.push(':');
            buf.push_str(&format!("{}:{}", col, self.idf[*col as usize]));
        }
        sha256_hex(buf.as_bytes())
    }

    /// Transform documents into L2-normalized tf-idf rows.
    pub fn transform(&self, texts: &[MaskedText]) -> CsrMatrix {
        let mut indptr = Vec::with_capacity(texts.len() + 1);
        indptr.push(0usize);
        let mut indices: Vec<u32> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        for doc in texts {
            let mut counts: HashMap<u32, f64> = HashMap::new();
            for term in terms_of(&doc.text, &self.config) {
                if let Some(&col) = self.vocab.get(&term) {
                    *counts.entry(col).or_insert(0.0) += 1.0;
                }
            }
            let mut row: Vec<(u32, f64)> = counts
                .into_iter()
                .map(|(col, tf)| (col, tf * self.idf[col as usize]))
                .collect();
            row.sort_by_key(|&(col, _)| col);
            let norm = row.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for (_, v) in row.iter_mut() {
                    *v /= norm;
                }
            }
            for (col, v) in row {
                indices.push(col);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            rows: texts.len(),
            cols: self.vocab.len(),
            indptr,
            indices,
            values,
        }
    }
}
