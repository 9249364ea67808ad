//! Graph modality: entity extraction, entity document frequencies and the
//! IDF-weighted mean entity embedding.
//!
//! For an extracted entity multiset `E` the graph vector is
//!
//! ```text
//! g = sum_e idf(e) * encode(e) / (sum_e idf(e) + 1e-6)
//! ```
//!
//! with `idf(e) = max(0, ln(N / (1 + df(e))))`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::EncoderError;
use crate::lexical::smoothed_idf;

/// Divide-by-zero guard in the graph embedding denominator.
pub const GRAPH_EPSILON: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EntityError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("entity {entity:?} encoded to dimension {got}, expected {expected}")]
    DimensionMismatch {
        entity: String,
        expected: usize,
        got: usize,
    },
    #[error("encoding entity {entity:?}: {source}")]
    Encoder {
        entity: String,
        #[source]
        source: EncoderError,
    },
    #[error("entity sidecar {path}: {source}")]
    SidecarIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("entity sidecar {path} line {line}: {message}")]
    SidecarLine {
        path: String,
        line: usize,
        message: String,
    },
    #[error("invalid entity catalog: {0}")]
    Invalid(String),
}

/// Source of entity mentions for a piece of text.
pub trait EntityExtractor: Send + Sync {
    fn extract(&self, text: &str) -> Vec<String>;
}

/// Capitalized-run heuristic.
///
/// An entity is a maximal run of tokens whose first letter is uppercase.
/// Punctuation attached to a token closes the run. A single capitalized token
/// in sentence-initial position (start of text or start of a line) is skipped,
/// since capitalization there carries no signal.
#[derive(Debug, Default, Clone, Copy)]
pub struct CapitalizedRunExtractor;

impl EntityExtractor for CapitalizedRunExtractor {
    fn extract(&self, text: &str) -> Vec<String> {
        extract_entities(text)
    }
}

pub fn extract_entities(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        let mut run: Vec<&str> = Vec::new();
        let mut run_at_sentence_start = false;
        for (pos, raw) in line.split_whitespace().enumerate() {
            let core = raw.trim_matches(|c: char| !c.is_alphanumeric());
            let leading = core.is_empty() || !raw.starts_with(core);
            let trailing = !core.is_empty() && !raw.ends_with(core);
            let capitalized = core.chars().next().is_some_and(char::is_uppercase);

            if leading || !capitalized {
                flush_run(&mut run, run_at_sentence_start, &mut out);
            }
            if capitalized {
                if run.is_empty() {
                    run_at_sentence_start = pos == 0;
                }
                run.push(core);
            }
            if trailing {
                flush_run(&mut run, run_at_sentence_start, &mut out);
            }
        }
        flush_run(&mut run, run_at_sentence_start, &mut out);
    }
    out
}

fn flush_run(run: &mut Vec<&str>, at_sentence_start: bool, out: &mut Vec<String>) {
    if run.len() >= 2 || (run.len() == 1 && !at_sentence_start) {
        out.push(run.join(" "));
    }
    run.clear();
}

/// Per-document entity overrides read from a JSON-lines sidecar.
#[derive(Debug, Clone, Default)]
pub struct EntitySidecar {
    entries: HashMap<String, Vec<String>>,
}

#[derive(Deserialize)]
struct SidecarLine {
    doc_id: String,
    entities: Vec<String>,
}

impl EntitySidecar {
    pub fn load(path: &Path) -> Result<Self, EntityError> {
        let display = path.display().to_string();
        let file = File::open(path).map_err(|source| EntityError::SidecarIo {
            path: display.clone(),
            source,
        })?;
        let mut entries = HashMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| EntityError::SidecarIo {
                path: display.clone(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: SidecarLine =
                serde_json::from_str(&line).map_err(|e| EntityError::SidecarLine {
                    path: display.clone(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
            entries.insert(parsed.doc_id, parsed.entities);
        }
        Ok(Self { entries })
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (String, Vec<String>)>) -> Self {
        Self {
            entries: entries.into_iter().collect(),
        }
    }

    pub fn get(&self, id: &str) -> Option<&[String]> {
        self.entries.get(id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Extractor plus optional sidecar; the sidecar wins for ids it lists.
pub struct EntitySource {
    extractor: Box<dyn EntityExtractor>,
    sidecar: Option<EntitySidecar>,
}

impl Default for EntitySource {
    fn default() -> Self {
        Self::new(Box::new(CapitalizedRunExtractor), None)
    }
}

impl EntitySource {
    pub fn new(extractor: Box<dyn EntityExtractor>, sidecar: Option<EntitySidecar>) -> Self {
        Self { extractor, sidecar }
    }

    pub fn entities(&self, id: &str, text: &str) -> Vec<String> {
        match self.sidecar.as_ref().and_then(|s| s.get(id)) {
            Some(listed) => listed.to_vec(),
            None => self.extractor.extract(text),
        }
    }
}

/// Entity document frequencies over a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityCatalog {
    df: BTreeMap<String, u32>,
    n_docs: u64,
}

impl EntityCatalog {
    /// Builds the catalog from one entity list per document.
    pub fn build<I, L>(per_doc_entities: I) -> Result<Self, EntityError>
    where
        I: IntoIterator<Item = L>,
        L: AsRef<[String]>,
    {
        let mut df: BTreeMap<String, u32> = BTreeMap::new();
        let mut n_docs = 0u64;
        for entities in per_doc_entities {
            n_docs += 1;
            let unique: HashSet<&String> = entities.as_ref().iter().collect();
            for entity in unique {
                *df.entry(entity.clone()).or_insert(0) += 1;
            }
        }
        if n_docs == 0 {
            return Err(EntityError::EmptyCorpus);
        }
        Ok(Self { df, n_docs })
    }

    pub fn from_parts(
        entries: impl IntoIterator<Item = (String, u32)>,
        n_docs: u64,
    ) -> Result<Self, EntityError> {
        let mut df = BTreeMap::new();
        for (entity, count) in entries {
            if count == 0 || u64::from(count) > n_docs {
                return Err(EntityError::Invalid(format!(
                    "entity {entity:?} has document frequency {count} with {n_docs} documents"
                )));
            }
            if df.insert(entity.clone(), count).is_some() {
                return Err(EntityError::Invalid(format!("duplicate entity {entity:?}")));
            }
        }
        Ok(Self { df, n_docs })
    }

    pub fn n_docs(&self) -> u64 {
        self.n_docs
    }

    pub fn len(&self) -> usize {
        self.df.len()
    }

    pub fn is_empty(&self) -> bool {
        self.df.is_empty()
    }

    pub fn df(&self, entity: &str) -> Option<u32> {
        self.df.get(entity).copied()
    }

    /// Entities and their document frequencies in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.df.iter().map(|(e, &d)| (e.as_str(), d))
    }

    /// Smoothed IDF of a catalogued entity, or `None` for an unseen one
    /// (which callers weight as zero).
    pub fn entity_idf(&self, entity: &str) -> Option<f64> {
        self.df(entity)
            .map(|df| smoothed_idf(self.n_docs, u64::from(df)))
    }

    pub fn idf_or_zero(&self, entity: &str) -> f64 {
        self.entity_idf(entity).unwrap_or(0.0)
    }
}

/// Dense graph-modality vector; all-zero when no weighted entity was found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEmbedding {
    values: Vec<f64>,
}

impl GraphEmbedding {
    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
        }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// IDF-weighted mean of entity embeddings over the multiset `entities`.
///
/// Entities with zero IDF (unseen or ubiquitous) contribute nothing to either
/// sum, so `encode` is not called for them.
pub fn graph_embedding<F>(
    catalog: &EntityCatalog,
    entities: &[String],
    dim: usize,
    mut encode: F,
) -> Result<GraphEmbedding, EntityError>
where
    F: FnMut(&str) -> Result<Vec<f64>, EncoderError>,
{
    let mut numerator = vec![0.0; dim];
    let mut weight_sum = 0.0;
    for entity in entities {
        let idf = catalog.idf_or_zero(entity);
        if idf == 0.0 {
            continue;
        }
        let vector = encode(entity).map_err(|source| EntityError::Encoder {
            entity: entity.clone(),
            source,
        })?;
        if vector.len() != dim {
            return Err(EntityError::DimensionMismatch {
                entity: entity.clone(),
                expected: dim,
                got: vector.len(),
            });
        }
        for (acc, v) in numerator.iter_mut().zip(&vector) {
            *acc += idf * v;
        }
        weight_sum += idf;
    }
    let denominator = weight_sum + GRAPH_EPSILON;
    for acc in &mut numerator {
        *acc /= denominator;
    }
    Ok(GraphEmbedding { values: numerator })
}
