//! Semantic modality: dense text embeddings behind a provider contract.
//!
//! Two providers ship with the crate: [`HashedEncoder`], a deterministic
//! offline stand-in selected with the endpoint `builtin:test`, and
//! [`HttpEmbedder`] for any server speaking the minimal `/embed` JSON protocol.

mod hashed;
mod remote;

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hashed::{test_encoder, HashedEncoder};
pub use remote::{HttpEmbedder, EMBED_API_KEY_ENV};

pub const BUILTIN_TEST_ENDPOINT: &str = "builtin:test";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncoderError {
    #[error("no texts to embed")]
    EmptyInput,
    #[error("embedding transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("embedding response undecodable: {0}")]
    Decode(String),
    #[error("provider returned dimension {got}, profile expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("provider returned {got} vectors for {expected} texts")]
    CountMismatch { expected: usize, got: usize },
    #[error("provider returned a non-finite component")]
    NonFinite,
    #[error("invalid encoder profile: {0}")]
    InvalidProfile(String),
}

impl EncoderError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, EncoderError::Transport { .. })
    }
}

fn default_batch_size() -> usize {
    32
}

fn default_in_flight() -> usize {
    4
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_attempts() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    250
}

/// Identity and transport settings of one semantic encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderProfile {
    pub name: String,
    pub dim: usize,
    /// Base URL of an embedding server, or `builtin:test`.
    pub endpoint: String,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_attempts")]
    pub attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

impl EncoderProfile {
    pub fn new(name: impl Into<String>, dim: usize, endpoint: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            dim,
            endpoint: endpoint.into(),
            batch_size: default_batch_size(),
            max_in_flight: default_in_flight(),
            timeout_secs: default_timeout_secs(),
            attempts: default_attempts(),
            backoff_ms: default_backoff_ms(),
        }
    }

    pub fn builtin_test(dim: usize) -> Self {
        Self::new("hashed-test", dim, BUILTIN_TEST_ENDPOINT)
    }

    pub fn is_builtin_test(&self) -> bool {
        self.endpoint == BUILTIN_TEST_ENDPOINT
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.name.trim().is_empty() {
            return Err(EncoderError::InvalidProfile("name is empty".into()));
        }
        if self.dim == 0 {
            return Err(EncoderError::InvalidProfile("dim must be > 0".into()));
        }
        if self.is_builtin_test() && self.dim < 2 {
            return Err(EncoderError::InvalidProfile(
                "builtin test encoder needs dim >= 2".into(),
            ));
        }
        if self.batch_size == 0 || self.max_in_flight == 0 {
            return Err(EncoderError::InvalidProfile(
                "batch_size and max_in_flight must be > 0".into(),
            ));
        }
        if !self.is_builtin_test()
            && !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://"))
        {
            return Err(EncoderError::InvalidProfile(format!(
                "endpoint {:?} is neither http(s) nor {BUILTIN_TEST_ENDPOINT}",
                self.endpoint
            )));
        }
        Ok(())
    }

    /// Identifies the embedding space. Transport settings and the server
    /// address are excluded; the model name, dimension and provider kind are not.
    pub fn fingerprint(&self) -> String {
        let kind = if self.is_builtin_test() {
            "builtin-hash-v1"
        } else {
            "http"
        };
        format!("{}:{}:{}", kind, self.name, self.dim)
    }
}

/// Dense embedding with finite components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// A semantic encoder. Implementations must be deterministic per text and
/// safe to call from several threads at once.
pub trait EmbeddingProvider: Send + Sync {
    fn profile(&self) -> &EncoderProfile;

    /// Embeds one batch; output `i` corresponds to `texts[i]`.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EncoderError>;
}

/// Instantiates the provider named by `profile.endpoint`.
pub fn open_provider(profile: &EncoderProfile) -> Result<Box<dyn EmbeddingProvider>, EncoderError> {
    profile.validate()?;
    if profile.is_builtin_test() {
        Ok(Box::new(HashedEncoder::new(profile.clone())))
    } else {
        log::info!(
            "using remote encoder {} at {}; assuming it is deterministic per text",
            profile.name,
            profile.endpoint
        );
        Ok(Box::new(HttpEmbedder::new(profile.clone())))
    }
}

/// Embeds `texts` in order, batching by `profile.batch_size` with at most
/// `profile.max_in_flight` batches outstanding. Every returned vector has the
/// profile's dimension and finite components.
pub fn embed_texts(
    provider: &dyn EmbeddingProvider,
    texts: &[String],
) -> Result<Vec<DenseVector>, EncoderError> {
    embed_texts_located(provider, texts).map_err(|(_, e)| e)
}

/// Like [`embed_texts`], but a failure carries the index of the first text
/// in the failing batch.
pub(crate) fn embed_texts_located(
    provider: &dyn EmbeddingProvider,
    texts: &[String],
) -> Result<Vec<DenseVector>, (usize, EncoderError)> {
    if texts.is_empty() {
        return Err((0, EncoderError::EmptyInput));
    }
    let profile = provider.profile();
    let batch_size = profile.batch_size.max(1);
    let batches: Vec<&[String]> = texts.chunks(batch_size).collect();
    let workers = profile.max_in_flight.max(1).min(batches.len());

    let results: Mutex<Vec<Option<Result<Vec<Vec<f64>>, EncoderError>>>> =
        Mutex::new(vec![None; batches.len()]);
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);

    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if failed.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(batch) = batches.get(i) else { break };
                let outcome = provider
                    .embed_batch(batch)
                    .and_then(|vectors| validate_batch(profile.dim, batch.len(), vectors));
                if outcome.is_err() {
                    failed.store(true, Ordering::Relaxed);
                }
                results.lock().expect("embedding results poisoned")[i] = Some(outcome);
            });
        }
    });

    let mut out = Vec::with_capacity(texts.len());
    for (i, slot) in results
        .into_inner()
        .expect("embedding results poisoned")
        .into_iter()
        .enumerate()
    {
        match slot {
            Some(Ok(vectors)) => out.extend(vectors.into_iter().map(DenseVector)),
            Some(Err(e)) => return Err((i * batch_size, e)),
            // skipped after an earlier failure, which is reported first
            None => continue,
        }
    }
    Ok(out)
}

fn validate_batch(
    dim: usize,
    expected: usize,
    vectors: Vec<Vec<f64>>,
) -> Result<Vec<Vec<f64>>, EncoderError> {
    if vectors.len() != expected {
        return Err(EncoderError::CountMismatch {
            expected,
            got: vectors.len(),
        });
    }
    for v in &vectors {
        if v.len() != dim {
            return Err(EncoderError::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(EncoderError::NonFinite);
        }
    }
    Ok(vectors)
}
