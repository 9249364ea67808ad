//! Versioned binary index layout (all integers little-endian):
//!
//! ```text
//! "TMX1"  version:u32  n_docs:u64  semantic_dim:u32  vocab_dim:u32
//! alpha:f64  beta:f64  gamma:f64
//! n_docs x (len:u32, utf8 doc_id)
//! n_docs x hybrid_dim x f64          row-major matrix
//! vocab:   corpus_docs:u64  terms:u32     x (len:u32, utf8, df:u32)
//! catalog: corpus_docs:u64  entities:u32  x (len:u32, utf8, df:u32)
//! fingerprints: count:u32 x (len:u32, utf8 "key=value")
//! crc32:u32 over every preceding byte
//! ```

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::{HybridIndex, IndexError, IndexFingerprints};
use crate::entity::EntityCatalog;
use crate::fusion::FusionConfig;
use crate::lexical::Vocabulary;

pub const INDEX_MAGIC: &[u8; 4] = b"TMX1";
pub const INDEX_VERSION: u32 = 1;

const ENCODER_KEY: &str = "encoder";
const CONFIG_KEY: &str = "config";

#[derive(Debug, Error)]
pub enum IndexFileError {
    #[error("index file i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("index file truncated")]
    Truncated,
    #[error("not an index file (bad magic)")]
    BadMagic,
    #[error("index file version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("index file checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("malformed index file: {0}")]
    Malformed(String),
}

impl IndexFileError {
    /// Stable numeric code per failure class.
    pub fn code(&self) -> u8 {
        match self {
            IndexFileError::Io(_) => 10,
            IndexFileError::Truncated => 11,
            IndexFileError::BadMagic => 12,
            IndexFileError::VersionMismatch { .. } => 13,
            IndexFileError::ChecksumMismatch { .. } => 14,
            IndexFileError::Malformed(_) => 15,
        }
    }
}

impl From<IndexError> for IndexFileError {
    fn from(e: IndexError) -> Self {
        IndexFileError::Malformed(e.to_string())
    }
}

pub fn save_index(index: &HybridIndex, path: &Path) -> Result<(), IndexFileError> {
    fs::write(path, encode(index))?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<HybridIndex, IndexFileError> {
    decode(&fs::read(path)?)
}

fn encode(index: &HybridIndex) -> Vec<u8> {
    let cfg = index.config();
    let mut out = Vec::with_capacity(64 + index.matrix().len() * 8);
    out.extend_from_slice(INDEX_MAGIC);
    put_u32(&mut out, INDEX_VERSION);
    out.extend_from_slice(&(index.len() as u64).to_le_bytes());
    put_u32(&mut out, cfg.semantic_dim as u32);
    put_u32(&mut out, cfg.lexical_dim as u32);
    for scale in [cfg.alpha, cfg.beta, cfg.gamma] {
        out.extend_from_slice(&scale.to_le_bytes());
    }
    for id in index.doc_ids() {
        put_str(&mut out, id);
    }
    for x in index.matrix() {
        out.extend_from_slice(&x.to_le_bytes());
    }

    let vocab = index.vocabulary();
    out.extend_from_slice(&vocab.n_docs().to_le_bytes());
    put_u32(&mut out, vocab.dim() as u32);
    for (term, df) in vocab.terms().iter().zip(vocab.df()) {
        put_str(&mut out, term);
        put_u32(&mut out, *df);
    }

    let catalog = index.catalog();
    out.extend_from_slice(&catalog.n_docs().to_le_bytes());
    put_u32(&mut out, catalog.len() as u32);
    for (entity, df) in catalog.iter() {
        put_str(&mut out, entity);
        put_u32(&mut out, df);
    }

    let fp = index.fingerprints();
    put_u32(&mut out, 2);
    put_str(&mut out, &format!("{ENCODER_KEY}={}", fp.encoder));
    put_str(&mut out, &format!("{CONFIG_KEY}={}", fp.config_hash));

    let crc = crc32fast::hash(&out);
    put_u32(&mut out, crc);
    out
}

fn decode(bytes: &[u8]) -> Result<HybridIndex, IndexFileError> {
    if bytes.len() < INDEX_MAGIC.len() {
        return Err(IndexFileError::Truncated);
    }
    if &bytes[..4] != INDEX_MAGIC {
        return Err(IndexFileError::BadMagic);
    }
    if bytes.len() < 8 + 4 {
        return Err(IndexFileError::Truncated);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4-byte tail"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(IndexFileError::ChecksumMismatch { stored, computed });
    }

    let mut r = Reader { buf: body, pos: 4 };
    let version = r.u32()?;
    if version != INDEX_VERSION {
        return Err(IndexFileError::VersionMismatch {
            found: version,
            expected: INDEX_VERSION,
        });
    }
    let n_docs = usize::try_from(r.u64()?).map_err(|_| malformed("document count"))?;
    let semantic_dim = r.u32()? as usize;
    let lexical_dim = r.u32()? as usize;
    let (alpha, beta, gamma) = (r.f64()?, r.f64()?, r.f64()?);
    let config = FusionConfig::new(alpha, beta, gamma, semantic_dim, lexical_dim);

    let mut doc_ids = Vec::with_capacity(n_docs.min(1 << 20));
    for _ in 0..n_docs {
        doc_ids.push(r.string()?);
    }
    let cells = n_docs
        .checked_mul(config.hybrid_dim())
        .ok_or_else(|| malformed("matrix size overflows"))?;
    let raw = r.take(cells.checked_mul(8).ok_or_else(|| malformed("matrix size overflows"))?)?;
    let matrix: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();

    let vocab_docs = r.u64()?;
    let n_terms = r.u32()? as usize;
    let mut terms = Vec::with_capacity(n_terms.min(1 << 20));
    let mut dfs = Vec::with_capacity(n_terms.min(1 << 20));
    for _ in 0..n_terms {
        terms.push(r.string()?);
        dfs.push(r.u32()?);
    }
    let vocabulary =
        Vocabulary::from_parts(terms, dfs, vocab_docs).map_err(|e| malformed(&e.to_string()))?;

    let catalog_docs = r.u64()?;
    let n_entities = r.u32()? as usize;
    let mut entities = Vec::with_capacity(n_entities.min(1 << 20));
    for _ in 0..n_entities {
        let entity = r.string()?;
        entities.push((entity, r.u32()?));
    }
    let catalog =
        EntityCatalog::from_parts(entities, catalog_docs).map_err(|e| malformed(&e.to_string()))?;

    let n_fp = r.u32()?;
    let mut encoder = None;
    let mut config_hash = None;
    for _ in 0..n_fp {
        let entry = r.string()?;
        match entry.split_once('=') {
            Some((ENCODER_KEY, v)) => encoder = Some(v.to_string()),
            Some((CONFIG_KEY, v)) => config_hash = Some(v.to_string()),
            _ => log::debug!("ignoring index fingerprint entry {entry:?}"),
        }
    }
    if r.pos != body.len() {
        return Err(malformed("trailing bytes before checksum"));
    }
    let fingerprints = IndexFingerprints {
        encoder: encoder.ok_or_else(|| malformed("missing encoder fingerprint"))?,
        config_hash: config_hash.ok_or_else(|| malformed("missing config hash"))?,
    };
    Ok(HybridIndex::from_parts(
        doc_ids,
        matrix,
        config,
        vocabulary,
        catalog,
        fingerprints,
    )?)
}

fn malformed(what: &str) -> IndexFileError {
    IndexFileError::Malformed(what.to_string())
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexFileError> {
        let end = self.pos.checked_add(n).ok_or(IndexFileError::Truncated)?;
        let slice = self.buf.get(self.pos..end).ok_or(IndexFileError::Truncated)?;
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, IndexFileError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, IndexFileError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, IndexFileError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, IndexFileError> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| malformed("invalid utf-8 string"))
    }
}
