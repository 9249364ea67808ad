//! LLM-guided reranking of retrieved candidates.
//!
//! Two modes are supported:
//! - `weights`: the LLM returns per-query modality weights and candidates are
//!   rescored as `w_s * cos_s + w_t * cos_t + w_g * cos_g`.
//! - `listwise`: the LLM returns an ordering of doc_ids directly.
//!
//! Every failure degrades to static weights or the pre-rank order and is
//! reported through [`RerankOutcome::fallback`]; reranking never aborts.

mod llm;
mod prompt;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use llm::{ChatCompletionsClient, LlmClient, LlmError, MockBehavior, MockKey, MockLlm, LLM_API_KEY_ENV};
pub use prompt::{
    build_listwise_prompt, build_weight_prompt, parse_listwise_response, parse_weight_response,
    truncate_snippet, PromptSettings, DEFAULT_CANDIDATE_CAP, DEFAULT_SNIPPET_CHARS,
};

use crate::index::ModalityScores;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RerankError {
    #[error("unparseable weights: {0}")]
    UnparseableWeights(String),
    #[error("unparseable ranking: {0}")]
    UnparseableRanking(String),
    #[error("invalid modality weights: {0}")]
    InvalidWeights(String),
    #[error("{0} candidates outside the allowed range 1..={1}")]
    CandidateCount(usize, usize),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// Per-query modality weights: each in `[0, 1]`, summing to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModalityWeights {
    pub semantic: f64,
    pub lexical: f64,
    pub graph: f64,
}

impl ModalityWeights {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    /// Accepts weights that already satisfy the invariants.
    pub fn new(semantic: f64, lexical: f64, graph: f64) -> Result<Self, RerankError> {
        let w = Self {
            semantic,
            lexical,
            graph,
        };
        let parts = w.as_array();
        if parts.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(RerankError::InvalidWeights(format!("{parts:?} not all in [0, 1]")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(RerankError::InvalidWeights(format!("{parts:?} do not sum to 1")));
        }
        Ok(w)
    }

    /// Clamps each weight to `[0, 1]` and rescales to sum 1.
    pub fn normalized(semantic: f64, lexical: f64, graph: f64) -> Result<Self, RerankError> {
        let raw = [semantic, lexical, graph];
        if raw.iter().any(|x| !x.is_finite()) {
            return Err(RerankError::InvalidWeights(format!("{raw:?} not finite")));
        }
        let clamped = raw.map(|x| x.clamp(0.0, 1.0));
        let total: f64 = clamped.iter().sum();
        if total <= 0.0 {
            return Err(RerankError::InvalidWeights("all weights are zero".into()));
        }
        Ok(Self {
            semantic: clamped[0] / total,
            lexical: clamped[1] / total,
            graph: clamped[2] / total,
        })
    }

    pub fn equal() -> Self {
        Self {
            semantic: 1.0 / 3.0,
            lexical: 1.0 / 3.0,
            graph: 1.0 / 3.0,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.semantic, self.lexical, self.graph]
    }

    pub fn score(&self, s: &ModalityScores) -> f64 {
        self.semantic * s.semantic + self.lexical * s.lexical + self.graph * s.graph
    }
}

impl Default for ModalityWeights {
    fn default() -> Self {
        Self::equal()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RerankMode {
    #[default]
    None,
    Weights,
    Listwise,
}

impl RerankMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            RerankMode::None => "none",
            RerankMode::Weights => "weights",
            RerankMode::Listwise => "listwise",
        }
    }
}

/// A retrieved document as presented to the reranker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub doc_id: String,
    pub title: String,
    pub snippet: String,
    pub scores: ModalityScores,
    /// Cosine of the fused vectors, the pre-rerank score.
    pub hybrid_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDoc {
    pub doc_id: String,
    pub score: f64,
}

/// The exchange with the LLM for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct RerankRequest<'a> {
    pub query: &'a str,
    pub candidates: &'a [Candidate],
    pub mode: RerankMode,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RerankDecision {
    Weights(ModalityWeights),
    Order(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankResponse {
    pub decision: RerankDecision,
    /// Raw LLM text, kept for audit.
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankOutcome {
    pub ranked: Vec<RankedDoc>,
    /// Weights applied in weights mode, whether from the LLM or the fallback.
    pub weights_used: Option<ModalityWeights>,
    pub response: Option<RerankResponse>,
    /// Why the LLM answer was not used, when it was not.
    pub fallback: Option<String>,
}

/// Sorts candidates by `weights`-combined modality cosines, descending, with
/// ties broken by doc_id ascending.
pub fn weighted_rescore(candidates: &[Candidate], weights: &ModalityWeights) -> Vec<RankedDoc> {
    let mut ranked: Vec<RankedDoc> = candidates
        .iter()
        .map(|c| RankedDoc {
            doc_id: c.doc_id.clone(),
            score: weights.score(&c.scores),
        })
        .collect();
    ranked.sort_by(score_then_id);
    ranked
}

fn score_then_id(a: &RankedDoc, b: &RankedDoc) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
}

/// Candidates in their given (pre-rank) order with their hybrid scores.
pub fn pre_rank(candidates: &[Candidate]) -> Vec<RankedDoc> {
    candidates
        .iter()
        .map(|c| RankedDoc {
            doc_id: c.doc_id.clone(),
            score: c.hybrid_score,
        })
        .collect()
}

/// Turns an explicit ordering into ranked docs with strictly decreasing
/// rank-derived scores (`n - position`).
fn from_order(order: &[String]) -> Vec<RankedDoc> {
    let n = order.len();
    order
        .iter()
        .enumerate()
        .map(|(pos, id)| RankedDoc {
            doc_id: id.clone(),
            score: (n - pos) as f64,
        })
        .collect()
}

pub struct Reranker<'a> {
    client: &'a dyn LlmClient,
    mode: RerankMode,
    settings: PromptSettings,
    fallback_weights: ModalityWeights,
}

impl<'a> Reranker<'a> {
    pub fn new(
        client: &'a dyn LlmClient,
        mode: RerankMode,
        settings: PromptSettings,
        fallback_weights: ModalityWeights,
    ) -> Self {
        Self {
            client,
            mode,
            settings,
            fallback_weights,
        }
    }

    pub fn mode(&self) -> RerankMode {
        self.mode
    }

    /// Reranks `candidates` (given in pre-rank order). Never fails.
    pub fn rerank(&self, query: &str, candidates: &[Candidate]) -> RerankOutcome {
        match self.mode {
            RerankMode::None => RerankOutcome {
                ranked: pre_rank(candidates),
                weights_used: None,
                response: None,
                fallback: None,
            },
            RerankMode::Weights => self.rerank_weights(query, candidates),
            RerankMode::Listwise => self.rerank_listwise(query, candidates),
        }
    }

    fn rerank_weights(&self, query: &str, candidates: &[Candidate]) -> RerankOutcome {
        let exchange = build_weight_prompt(query, candidates, &self.settings).and_then(|prompt| {
            let request = RerankRequest {
                query,
                candidates,
                mode: RerankMode::Weights,
                prompt,
            };
            let raw = self.client.complete(&request)?;
            let parsed = parse_weight_response(&raw);
            Ok((raw, parsed))
        });
        let (weights, response, fallback) = match exchange {
            Ok((raw, Ok(w))) => (
                w,
                Some(RerankResponse {
                    decision: RerankDecision::Weights(w),
                    raw,
                }),
                None,
            ),
            Ok((_, Err(e))) | Err(e) => (self.fallback_weights, None, Some(e.to_string())),
        };
        RerankOutcome {
            ranked: weighted_rescore(candidates, &weights),
            weights_used: Some(weights),
            response,
            fallback,
        }
    }

    fn rerank_listwise(&self, query: &str, candidates: &[Candidate]) -> RerankOutcome {
        let exchange = build_listwise_prompt(query, candidates, &self.settings).and_then(|prompt| {
            let request = RerankRequest {
                query,
                candidates,
                mode: RerankMode::Listwise,
                prompt,
            };
            let raw = self.client.complete(&request)?;
            let order = parse_listwise_response(&raw, candidates);
            Ok((raw, order))
        });
        match exchange {
            Ok((raw, Ok(order))) => RerankOutcome {
                ranked: from_order(&order),
                weights_used: None,
                response: Some(RerankResponse {
                    decision: RerankDecision::Order(order),
                    raw,
                }),
                fallback: None,
            },
            Ok((_, Err(e))) | Err(e) => {
                let order: Vec<String> = candidates.iter().map(|c| c.doc_id.clone()).collect();
                RerankOutcome {
                    ranked: from_order(&order),
                    weights_used: None,
                    response: None,
                    fallback: Some(e.to_string()),
                }
            }
        }
    }
}
