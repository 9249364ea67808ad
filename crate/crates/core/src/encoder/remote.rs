use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbeddingProvider, EncoderError, EncoderProfile};
use crate::http::{JsonPoster, PostFailure, RetryPolicy};

/// Environment variable holding the bearer token for the embedding server.
pub const EMBED_API_KEY_ENV: &str = "EMBED_API_KEY";

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f64>>,
}

/// Client for `POST {endpoint}/embed` with body `{"texts": [...]}` and
/// response `{"embeddings": [[...], ...]}`.
pub struct HttpEmbedder {
    profile: EncoderProfile,
    url: String,
    api_key: Option<String>,
    poster: JsonPoster,
}

impl HttpEmbedder {
    pub fn new(profile: EncoderProfile) -> Self {
        let api_key = std::env::var(EMBED_API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_api_key(profile, api_key)
    }

    pub fn with_api_key(profile: EncoderProfile, api_key: Option<String>) -> Self {
        let url = format!("{}/embed", profile.endpoint.trim_end_matches('/'));
        let poster = JsonPoster::new(RetryPolicy {
            attempts: profile.attempts,
            backoff: Duration::from_millis(profile.backoff_ms),
            timeout: Duration::from_secs(profile.timeout_secs),
        });
        Self {
            profile,
            url,
            api_key,
            poster,
        }
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn profile(&self) -> &EncoderProfile {
        &self.profile
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EncoderError> {
        let response: EmbedResponse = self
            .poster
            .post(&self.url, self.api_key.as_deref(), &EmbedRequest { texts })
            .map_err(|failure| match failure {
                PostFailure::Transport { attempts, message } => {
                    EncoderError::Transport { attempts, message }
                }
                PostFailure::Decode(message) => EncoderError::Decode(message),
            })?;
        Ok(response.embeddings)
    }
}
