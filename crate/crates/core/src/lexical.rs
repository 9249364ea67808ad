//! Lexical modality: tokenizer, document-frequency capped vocabulary and
//! sparse TF-IDF vectors.
//!
//! Term weights are `tf(t, text) * idf(t)` where `tf` is the raw occurrence
//! count and `idf(t) = max(0, ln(N / (1 + df(t))))`, the same smoothed form
//! used for entities in [`crate::entity`].

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default vocabulary cap.
pub const DEFAULT_MAX_TERMS: usize = 1024;

#[derive(Debug, Error, PartialEq)]
pub enum LexicalError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("term index {index} out of range for vocabulary of {dim} terms")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("invalid vocabulary: {0}")]
    Invalid(String),
}

/// Lowercased maximal runs of Unicode alphanumeric characters, in order.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|tok| !tok.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Smoothed inverse document frequency shared by terms and entities.
///
/// Returns `ln(n_docs / (1 + df))` clamped at zero.
pub fn smoothed_idf(n_docs: u64, df: u64) -> f64 {
    let idf = (n_docs as f64 / (1.0 + df as f64)).ln();
    if idf > 0.0 {
        idf
    } else {
        0.0
    }
}

/// Corpus vocabulary. Terms are unique and sorted lexicographically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    terms: Vec<String>,
    df: Vec<u32>,
    n_docs: u64,
    #[serde(skip)]
    lookup: HashMap<String, usize>,
}

impl Vocabulary {
    /// Counts document frequencies over `texts` and keeps the `max_terms`
    /// most frequent terms (ties lexicographic ascending).
    pub fn build<I, S>(texts: I, max_terms: usize) -> Result<Self, LexicalError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts: HashMap<String, u32> = HashMap::new();
        let mut n_docs = 0u64;
        for text in texts {
            n_docs += 1;
            let mut seen: Vec<String> = tokenize(text.as_ref());
            seen.sort_unstable();
            seen.dedup();
            for term in seen {
                *counts.entry(term).or_insert(0) += 1;
            }
        }
        if n_docs == 0 {
            return Err(LexicalError::EmptyCorpus);
        }

        let mut ranked: Vec<(String, u32)> = counts.into_iter().collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_terms);
        ranked.sort_unstable_by(|a, b| a.0.cmp(&b.0));

        let (terms, df) = ranked.into_iter().unzip();
        Self::from_parts(terms, df, n_docs)
    }

    /// Reassembles a vocabulary from stored parts, validating invariants.
    pub fn from_parts(terms: Vec<String>, df: Vec<u32>, n_docs: u64) -> Result<Self, LexicalError> {
        if terms.len() != df.len() {
            return Err(LexicalError::Invalid(format!(
                "{} terms but {} document frequencies",
                terms.len(),
                df.len()
            )));
        }
        if terms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LexicalError::Invalid("terms not strictly sorted".into()));
        }
        if let Some(bad) = df.iter().find(|&&d| d == 0 || u64::from(d) > n_docs) {
            return Err(LexicalError::Invalid(format!(
                "document frequency {bad} outside [1, {n_docs}]"
            )));
        }
        let lookup = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(Self {
            terms,
            df,
            n_docs,
            lookup,
        })
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn df(&self) -> &[u32] {
        &self.df
    }

    pub fn n_docs(&self) -> u64 {
        self.n_docs
    }

    pub fn dim(&self) -> usize {
        self.terms.len()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.lookup.get(term).copied()
    }

    pub fn term_idf(&self, term_index: usize) -> Result<f64, LexicalError> {
        let df = self
            .df
            .get(term_index)
            .ok_or(LexicalError::IndexOutOfRange {
                index: term_index,
                dim: self.dim(),
            })?;
        Ok(smoothed_idf(self.n_docs, u64::from(*df)))
    }

    /// Sparse TF-IDF vector for `text`. Out-of-vocabulary terms are ignored
    /// and zero weights are never stored.
    pub fn tfidf_vector(&self, text: &str) -> SparseVector {
        let mut tf: HashMap<usize, u32> = HashMap::new();
        for token in tokenize(text) {
            if let Some(i) = self.index_of(&token) {
                *tf.entry(i).or_insert(0) += 1;
            }
        }
        let mut entries: Vec<(usize, f64)> = tf
            .into_iter()
            .map(|(i, count)| {
                let idf = smoothed_idf(self.n_docs, u64::from(self.df[i]));
                (i, f64::from(count) * idf)
            })
            .filter(|&(_, w)| w > 0.0)
            .collect();
        entries.sort_unstable_by_key(|&(i, _)| i);
        let (indices, values) = entries.into_iter().map(|(i, w)| (i as u32, w)).unzip();
        SparseVector {
            indices,
            values,
            dim: self.dim(),
        }
    }
}

/// Sparse vector with strictly ascending indices and strictly positive values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    indices: Vec<u32>,
    values: Vec<f64>,
    dim: usize,
}

impl SparseVector {
    pub fn empty(dim: usize) -> Self {
        Self {
            indices: Vec::new(),
            values: Vec::new(),
            dim,
        }
    }

    pub fn new(indices: Vec<u32>, values: Vec<f64>, dim: usize) -> Result<Self, LexicalError> {
        if indices.len() != values.len() {
            return Err(LexicalError::Invalid("indices/values length mismatch".into()));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LexicalError::Invalid("indices not strictly ascending".into()));
        }
        if indices.last().is_some_and(|&i| i as usize >= dim) {
            return Err(LexicalError::Invalid("index beyond dimension".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(LexicalError::Invalid("values must be finite and > 0".into()));
        }
        Ok(Self {
            indices,
            values,
            dim,
        })
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn get(&self, index: usize) -> f64 {
        match self.indices.binary_search(&(index as u32)) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            dense[i] = v;
        }
        dense
    }
}
