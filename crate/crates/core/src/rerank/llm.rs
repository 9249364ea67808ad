use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Candidate, RerankMode, RerankRequest};
use crate::http::{JsonPoster, PostFailure, RetryPolicy};

/// Environment variable holding the bearer token for the chat endpoint.
pub const LLM_API_KEY_ENV: &str = "LLM_API_KEY";

const SYSTEM_PROMPT: &str =
    "You are a careful relevance assessor for a document retrieval system. Answer with JSON only.";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("LLM transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("LLM response undecodable: {0}")]
    Decode(String),
}

/// Something that answers a rerank prompt with raw text.
pub trait LlmClient: Send + Sync {
    fn complete(&self, request: &RerankRequest<'_>) -> Result<String, LlmError>;
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatContent,
}

#[derive(Deserialize)]
struct ChatContent {
    #[serde(default)]
    content: Option<String>,
}

/// OpenAI-compatible `POST {base_url}/v1/chat/completions` client, pinned to
/// temperature 0.
pub struct ChatCompletionsClient {
    url: String,
    model: String,
    api_key: Option<String>,
    poster: JsonPoster,
}

impl ChatCompletionsClient {
    pub fn new(base_url: &str, model: &str, timeout: Duration, attempts: u32) -> Self {
        let api_key = std::env::var(LLM_API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_api_key(base_url, model, timeout, attempts, api_key)
    }

    pub fn with_api_key(
        base_url: &str,
        model: &str,
        timeout: Duration,
        attempts: u32,
        api_key: Option<String>,
    ) -> Self {
        Self {
            url: format!("{}/v1/chat/completions", base_url.trim_end_matches('/')),
            model: model.to_string(),
            api_key,
            poster: JsonPoster::new(RetryPolicy {
                attempts,
                timeout,
                ..RetryPolicy::default()
            }),
        }
    }
}

impl LlmClient for ChatCompletionsClient {
    fn complete(&self, request: &RerankRequest<'_>) -> Result<String, LlmError> {
        let body = ChatRequest {
            model: &self.model,
            messages: vec![
                ChatMessage {
                    role: "system",
                    content: SYSTEM_PROMPT,
                },
                ChatMessage {
                    role: "user",
                    content: &request.prompt,
                },
            ],
            temperature: 0.0,
        };
        let response: ChatResponse = self
            .poster
            .post(&self.url, self.api_key.as_deref(), &body)
            .map_err(|failure| match failure {
                PostFailure::Transport { attempts, message } => LlmError::Transport { attempts, message },
                PostFailure::Decode(message) => LlmError::Decode(message),
            })?;
        response
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::Decode("no message content in first choice".into()))
    }
}

/// Candidate key a listwise mock sorts by (descending, ties by doc_id).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MockKey {
    Semantic,
    Lexical,
    Graph,
    Hybrid,
    /// Reverse of the pre-rank order.
    Reverse,
    /// Seeded shuffle of the pre-rank order.
    Shuffle { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "behavior", rename_all = "lowercase")]
pub enum MockBehavior {
    /// Always answers with these weights.
    Weights {
        semantic: f64,
        lexical: f64,
        graph: f64,
    },
    /// Answers with the candidates ordered by `key`.
    Listwise { key: MockKey },
    /// Answers with prose that contains no JSON.
    Malformed,
    /// Fails as an unreachable endpoint would.
    Unavailable,
}

impl MockBehavior {
    pub fn weights(semantic: f64, lexical: f64, graph: f64) -> Self {
        MockBehavior::Weights {
            semantic,
            lexical,
            graph,
        }
    }
}

/// Deterministic offline stand-in for an LLM. Never touches the network.
#[derive(Debug, Clone)]
pub struct MockLlm {
    behavior: MockBehavior,
}

impl MockLlm {
    pub fn new(behavior: MockBehavior) -> Self {
        Self { behavior }
    }

    fn order(key: MockKey, candidates: &[Candidate]) -> Vec<String> {
        let mut ordered: Vec<&Candidate> = candidates.iter().collect();
        let by = |f: fn(&Candidate) -> f64| {
            move |a: &&Candidate, b: &&Candidate| {
                f(b).total_cmp(&f(a)).then_with(|| a.doc_id.cmp(&b.doc_id))
            }
        };
        match key {
            MockKey::Semantic => ordered.sort_by(by(|c| c.scores.semantic)),
            MockKey::Lexical => ordered.sort_by(by(|c| c.scores.lexical)),
            MockKey::Graph => ordered.sort_by(by(|c| c.scores.graph)),
            MockKey::Hybrid => ordered.sort_by(by(|c| c.hybrid_score)),
            MockKey::Reverse => ordered.reverse(),
            MockKey::Shuffle { seed } => ordered.shuffle(&mut ChaCha8Rng::seed_from_u64(seed)),
        }
        ordered.into_iter().map(|c| c.doc_id.clone()).collect()
    }
}

impl LlmClient for MockLlm {
    fn complete(&self, request: &RerankRequest<'_>) -> Result<String, LlmError> {
        match &self.behavior {
            MockBehavior::Weights {
                semantic,
                lexical,
                graph,
            } => Ok(serde_json::json!({
                "semantic": semantic,
                "lexical": lexical,
                "graph": graph,
            })
            .to_string()),
            MockBehavior::Listwise { key } => {
                if request.mode != RerankMode::Listwise {
                    log::debug!("listwise mock answering a {} request", request.mode.as_str());
                }
                Ok(serde_json::to_string(&Self::order(*key, request.candidates))
                    .expect("string list serializes"))
            }
            MockBehavior::Malformed => Ok("I think semantics matter most".to_string()),
            MockBehavior::Unavailable => Err(LlmError::Transport {
                attempts: 1,
                message: "mock endpoint unavailable".into(),
            }),
        }
    }
}
