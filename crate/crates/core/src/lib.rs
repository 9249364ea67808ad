//! Tri-modal hybrid retrieval.
//!
//! Documents and queries are embedded three ways (dense semantic vectors,
//! sparse TF-IDF vectors and IDF-weighted entity embeddings), each block is
//! L2-normalized and scaled, and the concatenation is normalized into a single
//! hybrid vector searched exactly by cosine. Retrieved candidates can be
//! reranked by an LLM, either through per-query modality weights or a
//! listwise ordering, and runs are scored with standard ranking metrics over
//! BEIR-format datasets.

pub mod document;
pub mod encoder;
pub mod entity;
pub mod eval;
pub mod fusion;
mod http;
pub mod index;
pub mod lexical;
pub mod rerank;
pub mod tri_modal;

pub use document::{Document, Query};
pub use encoder::{embed_texts, open_provider, DenseVector, EmbeddingProvider, EncoderProfile};
pub use entity::{EntityCatalog, EntitySource, GraphEmbedding};
pub use fusion::{fuse, normalize_block, FusionConfig, HybridVector, TriModalEmbedding};
pub use index::{HybridIndex, IndexSettings, ModalityScores, SearchHit};
pub use lexical::{tokenize, SparseVector, Vocabulary};
