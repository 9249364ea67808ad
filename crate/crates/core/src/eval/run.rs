//! Retrieval runs in TREC format with a JSON metadata sidecar.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Provenance of a run. Every output file carries the config hash so a run
/// can be tied back to the index it came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub run_tag: String,
    pub config_hash: String,
    pub encoder_fingerprint: String,
    pub rerank_mode: String,
    /// `"retrieval"` for the raw hybrid ranking, `"rerank"` after the LLM pass.
    pub stage: String,
    pub fallback_count: usize,
    /// `(query_id, reason)` for each LLM fallback.
    #[serde(default)]
    pub fallbacks: Vec<FallbackRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackRecord {
    pub query_id: String,
    pub reason: String,
}

/// Ranked `(doc_id, score)` lists per query, keyed in query-id order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunResult {
    pub metadata: RunMetadata,
    rankings: BTreeMap<String, Vec<(String, f64)>>,
}

impl RunResult {
    pub fn new(metadata: RunMetadata) -> Self {
        Self {
            metadata,
            rankings: BTreeMap::new(),
        }
    }

    /// Adds one query's ranking. Doc ids must be unique and scores
    /// non-increasing.
    pub fn insert(&mut self, query_id: impl Into<String>, ranking: Vec<(String, f64)>) -> Result<(), EvalError> {
        let query_id = query_id.into();
        let mut seen = HashSet::new();
        for (i, (doc, score)) in ranking.iter().enumerate() {
            if !seen.insert(doc.as_str()) {
                return Err(EvalError::InvalidRun(format!(
                    "query {query_id}: doc {doc} appears twice"
                )));
            }
            if !score.is_finite() {
                return Err(EvalError::InvalidRun(format!(
                    "query {query_id}: non-finite score for {doc}"
                )));
            }
            if i > 0 && ranking[i - 1].1 < *score {
                return Err(EvalError::InvalidRun(format!(
                    "query {query_id}: scores increase at rank {}",
                    i + 1
                )));
            }
        }
        self.rankings.insert(query_id, ranking);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rankings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rankings.is_empty()
    }

    pub fn ranking(&self, query_id: &str) -> Option<&[(String, f64)]> {
        self.rankings.get(query_id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[(String, f64)])> {
        self.rankings.iter().map(|(q, r)| (q.as_str(), r.as_slice()))
    }

    /// `query_id Q0 doc_id rank score run_tag`, tab separated, queries in id
    /// order. Scores use the shortest representation that round-trips.
    pub fn to_trec(&self) -> String {
        let tag = if self.metadata.run_tag.is_empty() {
            "run"
        } else {
            self.metadata.run_tag.as_str()
        };
        let mut out = String::new();
        for (q, ranking) in &self.rankings {
            for (i, (doc, score)) in ranking.iter().enumerate() {
                let _ = writeln!(out, "{q}\tQ0\t{doc}\t{}\t{score}\t{tag}", i + 1);
            }
        }
        out
    }

    pub fn parse_trec(text: &str, metadata: RunMetadata) -> Result<Self, EvalError> {
        let mut grouped: BTreeMap<String, Vec<(usize, String, f64)>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            let bad = |message: String| EvalError::Malformed {
                path: PathBuf::from("<run>"),
                line: i + 1,
                message,
            };
            if cols.len() != 6 {
                return Err(bad(format!("expected 6 columns, found {}", cols.len())));
            }
            let rank: usize = cols[3].parse().map_err(|_| bad(format!("bad rank {:?}", cols[3])))?;
            let score: f64 = cols[4].parse().map_err(|_| bad(format!("bad score {:?}", cols[4])))?;
            grouped
                .entry(cols[0].to_string())
                .or_default()
                .push((rank, cols[2].to_string(), score));
        }
        let mut run = RunResult::new(metadata);
        for (q, mut rows) in grouped {
            rows.sort_by_key(|r| r.0);
            run.insert(q, rows.into_iter().map(|(_, d, s)| (d, s)).collect())?;
        }
        Ok(run)
    }

    /// Writes `path` (TREC rows) and `<path>.meta.json` next to it.
    pub fn write(&self, path: &Path) -> Result<(), EvalError> {
        write_file(path, self.to_trec().as_bytes())?;
        let meta = serde_json::to_string_pretty(&self.metadata).expect("metadata serializes");
        write_file(&metadata_path(path), format!("{meta}\n").as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self, EvalError> {
        let meta_path = metadata_path(path);
        let metadata: RunMetadata = serde_json::from_str(&read_file(&meta_path)?).map_err(|e| {
            EvalError::Malformed {
                path: meta_path.clone(),
                line: e.line(),
                message: e.to_string(),
            }
        })?;
        RunResult::parse_trec(&read_file(path)?, metadata).map_err(|e| match e {
            EvalError::Malformed { line, message, .. } => EvalError::Malformed {
                path: path.to_path_buf(),
                line,
                message,
            },
            other => other,
        })
    }
}

pub fn metadata_path(run_path: &Path) -> PathBuf {
    let mut name = run_path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    run_path.with_file_name(name)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), EvalError> {
    std::fs::write(path, bytes).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn read_file(path: &Path) -> Result<String, EvalError> {
    if !path.is_file() {
        return Err(EvalError::MissingFile(path.to_path_buf()));
    }
    std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })
}
