//! Exact (flat) hybrid index: one unit-norm fused row per document, plus the
//! vocabulary, entity catalog and fingerprints needed to embed queries the
//! same way documents were embedded.

mod file;

use std::cmp::Ordering;
use std::collections::HashMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use file::{load_index, save_index, IndexFileError, INDEX_MAGIC, INDEX_VERSION};

use crate::document::{Document, Query};
use crate::encoder::EmbeddingProvider;
use crate::entity::{EntityCatalog, EntityError, EntitySource};
use crate::fusion::{dot, fuse, l2_norm, FusionConfig, FusionError, HybridVector, TriModalEmbedding, ZERO_NORM};
use crate::lexical::{LexicalError, Vocabulary, DEFAULT_MAX_TERMS};
use crate::tri_modal::{EncodeError, EncodeItem, TriModalEncoder};

/// Documents encoded per round during a build.
const BUILD_CHUNK: usize = 2048;
/// Row count above which a query scan is split across threads.
const PARALLEL_SCAN_ROWS: usize = 4096;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("duplicate doc_id {0:?}")]
    DuplicateDocId(String),
    #[error("unknown doc_id {0:?}")]
    UnknownDoc(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("index/query encoder mismatch: index built with {index}, query encoded with {query}")]
    FingerprintMismatch { index: String, query: String },
    #[error("query vector has dimension {got}, index rows have {expected}")]
    QueryDimension { expected: usize, got: usize },
    #[error("invalid index: {0}")]
    Invalid(String),
    #[error(transparent)]
    Lexical(#[from] LexicalError),
    #[error(transparent)]
    Entity(#[from] EntityError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
}

/// Build-time knobs that shape the hybrid space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSettings {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub max_terms: usize,
}

impl Default for IndexSettings {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            max_terms: DEFAULT_MAX_TERMS,
        }
    }
}

/// Identity of the encoders and configuration an index was built with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexFingerprints {
    pub encoder: String,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildStats {
    pub doc_count: usize,
    pub vocab_size: usize,
    pub entity_count: usize,
    pub zero_rows: usize,
    pub hybrid_dim: usize,
    pub timings: Vec<StageTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub doc_id: String,
    pub score: f64,
}

/// Cosine per modality block; zero blocks give 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModalityScores {
    pub semantic: f64,
    pub lexical: f64,
    pub graph: f64,
}

/// A query encoded against a particular index.
#[derive(Debug, Clone)]
pub struct EncodedQuery {
    pub id: String,
    pub tri: TriModalEmbedding,
    pub hybrid: HybridVector,
    pub encoder_fingerprint: String,
}

#[derive(Debug, Clone)]
pub struct HybridIndex {
    doc_ids: Vec<String>,
    positions: HashMap<String, usize>,
    matrix: Vec<f64>,
    config: FusionConfig,
    vocabulary: Vocabulary,
    catalog: EntityCatalog,
    fingerprints: IndexFingerprints,
}

impl HybridIndex {
    /// Fits vocabulary and entity catalog on `corpus`, then encodes, fuses
    /// and stores every document in corpus order.
    pub fn build(
        corpus: &[Document],
        provider: &dyn EmbeddingProvider,
        entities: &EntitySource,
        settings: &IndexSettings,
        config_hash: impl Into<String>,
    ) -> Result<(Self, BuildStats), IndexError> {
        if corpus.is_empty() {
            return Err(IndexError::EmptyCorpus);
        }
        let mut positions = HashMap::with_capacity(corpus.len());
        for (i, doc) in corpus.iter().enumerate() {
            if positions.insert(doc.id.clone(), i).is_some() {
                return Err(IndexError::DuplicateDocId(doc.id.clone()));
            }
        }
        let mut timings = Vec::new();

        let started = Instant::now();
        let texts: Vec<String> = corpus.iter().map(Document::full_text).collect();
        let vocabulary = Vocabulary::build(&texts, settings.max_terms)?;
        timings.push(timing("vocabulary", started));

        let started = Instant::now();
        let mentions: Vec<Vec<String>> = corpus
            .par_iter()
            .zip(&texts)
            .map(|(doc, text)| entities.entities(&doc.id, text))
            .collect();
        let catalog = EntityCatalog::build(&mentions)?;
        timings.push(timing("entities", started));

        let config = FusionConfig::new(
            settings.alpha,
            settings.beta,
            settings.gamma,
            provider.profile().dim,
            vocabulary.dim(),
        );
        config.validate()?;

        let started = Instant::now();
        let encoder = TriModalEncoder::new(provider, &vocabulary, &catalog, entities);
        let mut matrix = Vec::with_capacity(corpus.len() * config.hybrid_dim());
        let mut zero_rows = 0;
        for start in (0..corpus.len()).step_by(BUILD_CHUNK) {
            let end = (start + BUILD_CHUNK).min(corpus.len());
            let items: Vec<EncodeItem<'_>> = corpus[start..end]
                .iter()
                .zip(&texts[start..end])
                .map(|(doc, text)| EncodeItem {
                    id: &doc.id,
                    text: text.clone(),
                })
                .collect();
            let tris = encoder.encode_with_entities(&items, &mentions[start..end])?;
            let rows: Vec<HybridVector> = tris
                .par_iter()
                .map(|tri| fuse(tri, &config))
                .collect::<Result<_, _>>()?;
            for row in rows {
                if row.is_zero() {
                    zero_rows += 1;
                }
                matrix.extend_from_slice(row.values());
            }
            log::debug!("encoded documents {start}..{end}");
        }
        timings.push(timing("encode_and_fuse", started));
        if zero_rows > 0 {
            log::warn!("{zero_rows} document(s) fused to the zero vector");
        }

        let stats = BuildStats {
            doc_count: corpus.len(),
            vocab_size: vocabulary.dim(),
            entity_count: catalog.len(),
            zero_rows,
            hybrid_dim: config.hybrid_dim(),
            timings,
        };
        let index = Self {
            doc_ids: corpus.iter().map(|d| d.id.clone()).collect(),
            positions,
            matrix,
            config,
            vocabulary,
            catalog,
            fingerprints: IndexFingerprints {
                encoder: provider.profile().fingerprint(),
                config_hash: config_hash.into(),
            },
        };
        Ok((index, stats))
    }

    /// Assembles an index from stored parts, validating shape invariants.
    pub fn from_parts(
        doc_ids: Vec<String>,
        matrix: Vec<f64>,
        config: FusionConfig,
        vocabulary: Vocabulary,
        catalog: EntityCatalog,
        fingerprints: IndexFingerprints,
    ) -> Result<Self, IndexError> {
        config.validate()?;
        if config.lexical_dim != vocabulary.dim() {
            return Err(IndexError::Invalid(format!(
                "lexical dimension {} but vocabulary has {} terms",
                config.lexical_dim,
                vocabulary.dim()
            )));
        }
        if matrix.len() != doc_ids.len() * config.hybrid_dim() {
            return Err(IndexError::Invalid(format!(
                "matrix holds {} values, expected {} x {}",
                matrix.len(),
                doc_ids.len(),
                config.hybrid_dim()
            )));
        }
        let mut positions = HashMap::with_capacity(doc_ids.len());
        for (i, id) in doc_ids.iter().enumerate() {
            if positions.insert(id.clone(), i).is_some() {
                return Err(IndexError::DuplicateDocId(id.clone()));
            }
        }
        Ok(Self {
            doc_ids,
            positions,
            matrix,
            config,
            vocabulary,
            catalog,
            fingerprints,
        })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn config(&self) -> &FusionConfig {
        &self.config
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn catalog(&self) -> &EntityCatalog {
        &self.catalog
    }

    pub fn fingerprints(&self) -> &IndexFingerprints {
        &self.fingerprints
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn row(&self, position: usize) -> &[f64] {
        let dim = self.config.hybrid_dim();
        &self.matrix[position * dim..(position + 1) * dim]
    }

    pub fn position(&self, doc_id: &str) -> Option<usize> {
        self.positions.get(doc_id).copied()
    }

    pub fn row_of(&self, doc_id: &str) -> Result<&[f64], IndexError> {
        self.position(doc_id)
            .map(|p| self.row(p))
            .ok_or_else(|| IndexError::UnknownDoc(doc_id.to_string()))
    }

    pub fn check_encoder(&self, fingerprint: &str) -> Result<(), IndexError> {
        if fingerprint == self.fingerprints.encoder {
            Ok(())
        } else {
            Err(IndexError::FingerprintMismatch {
                index: self.fingerprints.encoder.clone(),
                query: fingerprint.to_string(),
            })
        }
    }

    /// Encodes queries with this index's vocabulary and catalog.
    pub fn encode_queries(
        &self,
        provider: &dyn EmbeddingProvider,
        entities: &EntitySource,
        queries: &[Query],
    ) -> Result<Vec<EncodedQuery>, IndexError> {
        let fingerprint = provider.profile().fingerprint();
        self.check_encoder(&fingerprint)?;
        let encoder = TriModalEncoder::new(provider, &self.vocabulary, &self.catalog, entities);
        let items: Vec<EncodeItem<'_>> = queries
            .iter()
            .map(|q| EncodeItem {
                id: &q.id,
                text: q.text.clone(),
            })
            .collect();
        let tris = encoder.encode(&items)?;
        queries
            .iter()
            .zip(tris)
            .map(|(q, tri)| {
                let hybrid = fuse(&tri, &self.config)?;
                Ok(EncodedQuery {
                    id: q.id.clone(),
                    tri,
                    hybrid,
                    encoder_fingerprint: fingerprint.clone(),
                })
            })
            .collect()
    }

    /// Exact top-k by cosine (dot product of unit vectors); ties by doc_id.
    pub fn search(&self, query: &EncodedQuery, k: usize) -> Result<Vec<SearchHit>, IndexError> {
        self.check_encoder(&query.encoder_fingerprint)?;
        self.search_vector(query.hybrid.values(), k)
    }

    /// Full scan of every row against `vector`.
    pub fn search_vector(&self, vector: &[f64], k: usize) -> Result<Vec<SearchHit>, IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        let dim = self.config.hybrid_dim();
        if vector.len() != dim {
            return Err(IndexError::QueryDimension {
                expected: dim,
                got: vector.len(),
            });
        }
        let mut scored: Vec<(usize, f64)> = if self.len() >= PARALLEL_SCAN_ROWS {
            self.matrix
                .par_chunks_exact(dim)
                .map(|row| dot(row, vector))
                .enumerate()
                .collect()
        } else {
            self.matrix
                .chunks_exact(dim)
                .map(|row| dot(row, vector))
                .enumerate()
                .collect()
        };
        let order = |a: &(usize, f64), b: &(usize, f64)| -> Ordering {
            b.1.total_cmp(&a.1)
                .then_with(|| self.doc_ids[a.0].cmp(&self.doc_ids[b.0]))
        };
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_unstable_by(order);
        Ok(scored
            .into_iter()
            .map(|(i, score)| SearchHit {
                doc_id: self.doc_ids[i].clone(),
                score,
            })
            .collect())
    }

    /// Cosine between each normalized query block and the matching block of
    /// the stored document row.
    pub fn per_modality_scores(
        &self,
        query: &TriModalEmbedding,
        doc_id: &str,
    ) -> Result<ModalityScores, IndexError> {
        let row = self.row_of(doc_id)?;
        let cfg = &self.config;

        let semantic = dense_block_cosine(query.semantic.values(), &row[cfg.semantic_range()]);
        let graph = dense_block_cosine(query.graph.values(), &row[cfg.graph_range()]);

        let lexical_row = &row[cfg.lexical_range()];
        let query_norm = l2_norm(query.lexical.values());
        let row_norm = l2_norm(lexical_row);
        let lexical = if query_norm <= ZERO_NORM || row_norm <= ZERO_NORM {
            0.0
        } else {
            query
                .lexical
                .iter()
                .filter(|&(i, _)| i < lexical_row.len())
                .map(|(i, v)| (v / query_norm) * (lexical_row[i] / row_norm))
                .sum()
        };
        Ok(ModalityScores {
            semantic,
            lexical,
            graph,
        })
    }
}

fn dense_block_cosine(query: &[f64], row_block: &[f64]) -> f64 {
    let (qn, rn) = (l2_norm(query), l2_norm(row_block));
    if qn <= ZERO_NORM || rn <= ZERO_NORM || query.len() != row_block.len() {
        return 0.0;
    }
    query
        .iter()
        .zip(row_block)
        .map(|(q, r)| (q / qn) * (r / rn))
        .sum()
}

fn timing(stage: &str, started: Instant) -> StageTiming {
    StageTiming {
        stage: stage.to_string(),
        seconds: started.elapsed().as_secs_f64(),
    }
}
