//! Produces the (semantic, lexical, graph) triple for batches of texts using
//! corpus-fitted lexical and entity statistics.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::encoder::{embed_texts_located, EmbeddingProvider, EncoderError};
use crate::entity::{graph_embedding, EntityCatalog, EntityError, EntitySource};
use crate::fusion::TriModalEmbedding;
use crate::lexical::Vocabulary;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("semantic encoding of {id:?}: {source}")]
    Semantic {
        id: String,
        #[source]
        source: EncoderError,
    },
    #[error("graph encoding of {id:?}: {source}")]
    Graph {
        id: String,
        #[source]
        source: EntityError,
    },
}

impl EncodeError {
    pub fn id(&self) -> &str {
        match self {
            EncodeError::Semantic { id, .. } | EncodeError::Graph { id, .. } => id,
        }
    }

    pub fn is_retryable_transport(&self) -> bool {
        match self {
            EncodeError::Semantic { source, .. } => source.is_retryable(),
            EncodeError::Graph {
                source: EntityError::Encoder { source, .. },
                ..
            } => source.is_retryable(),
            EncodeError::Graph { .. } => false,
        }
    }
}

/// One text to encode, with the id used for sidecar lookup and error reports.
#[derive(Debug, Clone)]
pub struct EncodeItem<'a> {
    pub id: &'a str,
    pub text: String,
}

pub struct TriModalEncoder<'a> {
    provider: &'a dyn EmbeddingProvider,
    vocabulary: &'a Vocabulary,
    catalog: &'a EntityCatalog,
    entities: &'a EntitySource,
}

impl<'a> TriModalEncoder<'a> {
    pub fn new(
        provider: &'a dyn EmbeddingProvider,
        vocabulary: &'a Vocabulary,
        catalog: &'a EntityCatalog,
        entities: &'a EntitySource,
    ) -> Self {
        Self {
            provider,
            vocabulary,
            catalog,
            entities,
        }
    }

    pub fn provider(&self) -> &dyn EmbeddingProvider {
        self.provider
    }

    pub fn semantic_dim(&self) -> usize {
        self.provider.profile().dim
    }

    pub fn encode(&self, items: &[EncodeItem<'_>]) -> Result<Vec<TriModalEmbedding>, EncodeError> {
        let mentions: Vec<Vec<String>> = items
            .iter()
            .map(|item| self.entities.entities(item.id, &item.text))
            .collect();
        self.encode_with_entities(items, &mentions)
    }

    /// Encodes `items` given already-extracted entity mentions per item.
    ///
    /// Each distinct entity with positive IDF is embedded once per call.
    pub fn encode_with_entities(
        &self,
        items: &[EncodeItem<'_>],
        mentions: &[Vec<String>],
    ) -> Result<Vec<TriModalEmbedding>, EncodeError> {
        assert_eq!(items.len(), mentions.len(), "one mention list per item");
        if items.is_empty() {
            return Ok(Vec::new());
        }
        let dim = self.semantic_dim();

        let texts: Vec<String> = items.iter().map(|i| i.text.clone()).collect();
        let semantic =
            embed_texts_located(self.provider, &texts).map_err(|(at, source)| EncodeError::Semantic {
                id: items[at.min(items.len() - 1)].id.to_string(),
                source,
            })?;

        let weighted: BTreeSet<&String> = mentions
            .iter()
            .flatten()
            .filter(|e| self.catalog.idf_or_zero(e) > 0.0)
            .collect();
        let entity_vectors: HashMap<String, Vec<f64>> = if weighted.is_empty() {
            HashMap::new()
        } else {
            let names: Vec<String> = weighted.into_iter().cloned().collect();
            let vectors = embed_texts_located(self.provider, &names).map_err(|(at, source)| {
                let entity = names[at.min(names.len() - 1)].clone();
                let id = items
                    .iter()
                    .zip(mentions)
                    .find(|(_, m)| m.contains(&entity))
                    .map(|(item, _)| item.id.to_string())
                    .unwrap_or_default();
                EncodeError::Graph {
                    id,
                    source: EntityError::Encoder { entity, source },
                }
            })?;
            names
                .into_iter()
                .zip(vectors.into_iter().map(|v| v.into_inner()))
                .collect()
        };

        items
            .iter()
            .zip(mentions)
            .zip(semantic)
            .map(|((item, mentions), semantic)| {
                let graph = graph_embedding(self.catalog, mentions, dim, |entity| {
                    entity_vectors.get(entity).cloned().ok_or_else(|| {
                        EncoderError::Decode(format!("entity {entity:?} missing from batch"))
                    })
                })
                .map_err(|source| EncodeError::Graph {
                    id: item.id.to_string(),
                    source,
                })?;
                Ok(TriModalEmbedding {
                    semantic,
                    lexical: self.vocabulary.tfidf_vector(&item.text),
                    graph,
                })
            })
            .collect()
    }
}
