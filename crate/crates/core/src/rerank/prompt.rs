use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Candidate, ModalityWeights, RerankError};

pub const DEFAULT_CANDIDATE_CAP: usize = 10;
pub const DEFAULT_SNIPPET_CHARS: usize = 300;
const ELLIPSIS: &str = "...";

fn default_cap() -> usize {
    DEFAULT_CANDIDATE_CAP
}

fn default_snippet_chars() -> usize {
    DEFAULT_SNIPPET_CHARS
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSettings {
    #[serde(default = "default_cap")]
    pub candidate_cap: usize,
    #[serde(default = "default_snippet_chars")]
    pub snippet_chars: usize,
}

impl Default for PromptSettings {
    fn default() -> Self {
        Self {
            candidate_cap: DEFAULT_CANDIDATE_CAP,
            snippet_chars: DEFAULT_SNIPPET_CHARS,
        }
    }
}

/// First `max_chars` characters of `text` on one line, with `...` appended
/// when anything was cut.
pub fn truncate_snippet(text: &str, max_chars: usize) -> String {
    let flat: String = text
        .chars()
        .map(|c| if c.is_whitespace() { ' ' } else { c })
        .collect();
    if flat.chars().count() <= max_chars {
        flat
    } else {
        let mut cut: String = flat.chars().take(max_chars).collect();
        cut.push_str(ELLIPSIS);
        cut
    }
}

fn check_count(candidates: &[Candidate], settings: &PromptSettings) -> Result<(), RerankError> {
    if candidates.is_empty() || candidates.len() > settings.candidate_cap {
        return Err(RerankError::CandidateCount(
            candidates.len(),
            settings.candidate_cap,
        ));
    }
    Ok(())
}

fn write_candidates(out: &mut String, candidates: &[Candidate], settings: &PromptSettings) {
    for (i, c) in candidates.iter().enumerate() {
        let _ = writeln!(out, "[{}] doc_id: {}", i + 1, c.doc_id);
        if !c.title.trim().is_empty() {
            let _ = writeln!(out, "    title: {}", truncate_snippet(&c.title, settings.snippet_chars));
        }
        let _ = writeln!(
            out,
            "    similarity: semantic={:.4} lexical={:.4} graph={:.4}",
            c.scores.semantic, c.scores.lexical, c.scores.graph
        );
        let _ = writeln!(out, "    text: {}", truncate_snippet(&c.snippet, settings.snippet_chars));
    }
}

/// Prompt asking for per-query modality weights as strict JSON.
pub fn build_weight_prompt(
    query: &str,
    candidates: &[Candidate],
    settings: &PromptSettings,
) -> Result<String, RerankError> {
    check_count(candidates, settings)?;
    let mut out = String::new();
    out.push_str(
        "You are tuning a hybrid search engine. Each candidate document below was \
         scored by three signals:\n\
         - semantic: dense embedding similarity (meaning, paraphrase)\n\
         - lexical: TF-IDF keyword overlap (exact and rare terms)\n\
         - graph: overlap of named entities (people, organizations, places, concepts)\n\n\
         Decide how much each signal should count for this particular query. \
         Respond with strict JSON only, no other text, in the form\n\
         {\"semantic\": <number>, \"lexical\": <number>, \"graph\": <number>}\n\
         where each number is between 0 and 1 and the three sum to 1.\n\n",
    );
    let _ = writeln!(out, "Query: {}\n", truncate_snippet(query, settings.snippet_chars));
    out.push_str("Candidates:\n");
    write_candidates(&mut out, candidates, settings);
    Ok(out)
}

/// Prompt asking for a relevance ordering as a JSON array of doc_ids.
pub fn build_listwise_prompt(
    query: &str,
    candidates: &[Candidate],
    settings: &PromptSettings,
) -> Result<String, RerankError> {
    check_count(candidates, settings)?;
    let mut out = String::new();
    out.push_str(
        "Rank the candidate documents below by how relevant they are to the query, \
         most relevant first. Respond with strict JSON only, no other text: a JSON \
         array containing every doc_id string exactly once.\n\n",
    );
    let _ = writeln!(out, "Query: {}\n", truncate_snippet(query, settings.snippet_chars));
    out.push_str("Candidates:\n");
    write_candidates(&mut out, candidates, settings);
    Ok(out)
}

/// First JSON value of the requested shape embedded anywhere in `raw`.
fn first_json(raw: &str, open: char) -> Option<Value> {
    raw.char_indices()
        .filter(|&(_, c)| c == open)
        .find_map(|(i, _)| {
            let mut stream = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Value>();
            match stream.next() {
                Some(Ok(v @ Value::Object(_))) if open == '{' => Some(v),
                Some(Ok(v @ Value::Array(_))) if open == '[' => Some(v),
                _ => None,
            }
        })
}

/// Extracts `{"semantic", "lexical", "graph"}` from the first JSON object in
/// `raw`, clamps each to `[0, 1]` and renormalizes to sum 1.
pub fn parse_weight_response(raw: &str) -> Result<ModalityWeights, RerankError> {
    let object = first_json(raw, '{')
        .ok_or_else(|| RerankError::UnparseableWeights("no JSON object in response".into()))?;
    let field = |name: &str| -> Result<f64, RerankError> {
        object
            .get(name)
            .and_then(Value::as_f64)
            .ok_or_else(|| RerankError::UnparseableWeights(format!("field {name:?} missing or not a number")))
    };
    let (s, t, g) = (field("semantic")?, field("lexical")?, field("graph")?);
    ModalityWeights::normalized(s, t, g).map_err(|e| RerankError::UnparseableWeights(e.to_string()))
}

/// Reads the first JSON array of doc_ids in `raw` and completes it into a
/// permutation of `candidates`: unknown and repeated ids are dropped, and
/// candidates the answer omitted are appended in their pre-rank order.
pub fn parse_listwise_response(raw: &str, candidates: &[Candidate]) -> Result<Vec<String>, RerankError> {
    let array = first_json(raw, '[')
        .ok_or_else(|| RerankError::UnparseableRanking("no JSON array in response".into()))?;
    let known: HashSet<&str> = candidates.iter().map(|c| c.doc_id.as_str()).collect();
    let mut placed: HashSet<String> = HashSet::new();
    let mut order = Vec::with_capacity(candidates.len());
    for item in array.as_array().into_iter().flatten() {
        let id = match item {
            Value::String(s) => s.clone(),
            Value::Number(n) => n.to_string(),
            _ => continue,
        };
        if known.contains(id.as_str()) && placed.insert(id.clone()) {
            order.push(id);
        } else if !known.contains(id.as_str()) {
            log::debug!("dropping unknown doc_id {id:?} from listwise answer");
        }
    }
    for c in candidates {
        if !placed.contains(&c.doc_id) {
            order.push(c.doc_id.clone());
        }
    }
    Ok(order)
}
