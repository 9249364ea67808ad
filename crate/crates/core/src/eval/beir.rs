//! BEIR dataset layout: `corpus.jsonl`, `queries.jsonl` and `qrels/<split>.tsv`.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;

use super::{EvalError, QrelSet};
use crate::document::{Document, Query};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const QUERIES_FILE: &str = "queries.jsonl";
pub const QRELS_DIR: &str = "qrels";

#[derive(Debug, Clone)]
pub struct BeirDataset {
    pub corpus: Vec<Document>,
    pub queries: Vec<Query>,
    pub qrels: QrelSet,
}

#[derive(Deserialize)]
struct CorpusLine {
    #[serde(rename = "_id")]
    id: Value,
    #[serde(default)]
    title: Option<String>,
    #[serde(default)]
    text: Option<String>,
}

#[derive(Deserialize)]
struct QueryLine {
    #[serde(rename = "_id")]
    id: Value,
    text: String,
}

fn open(path: &Path) -> Result<BufReader<File>, EvalError> {
    if !path.is_file() {
        return Err(EvalError::MissingFile(path.to_path_buf()));
    }
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })
}

/// Numeric ids appear in some BEIR dumps; they are read as their decimal text.
fn id_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn malformed(path: &Path, line: usize, message: impl Into<String>) -> EvalError {
    EvalError::Malformed {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Non-blank lines with their 1-based line numbers.
fn lines(path: &Path) -> Result<Vec<(usize, String)>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

pub fn load_corpus(path: &Path) -> Result<Vec<Document>, EvalError> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in lines(path)? {
        let parsed: CorpusLine =
            serde_json::from_str(&line).map_err(|e| malformed(path, n, e.to_string()))?;
        let id = id_string(&parsed.id).ok_or_else(|| malformed(path, n, "\"_id\" must be a non-empty string"))?;
        if !seen.insert(id.clone()) {
            return Err(malformed(path, n, format!("duplicate document id {id:?}")));
        }
        docs.push(Document::new(
            id,
            parsed.title.unwrap_or_default(),
            parsed.text.unwrap_or_default(),
        ));
    }
    Ok(docs)
}

pub fn load_queries(path: &Path) -> Result<Vec<Query>, EvalError> {
    let mut queries = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in lines(path)? {
        let parsed: QueryLine =
            serde_json::from_str(&line).map_err(|e| malformed(path, n, e.to_string()))?;
        let id = id_string(&parsed.id).ok_or_else(|| malformed(path, n, "\"_id\" must be a non-empty string"))?;
        if !seen.insert(id.clone()) {
            return Err(malformed(path, n, format!("duplicate query id {id:?}")));
        }
        queries.push(Query::new(id, parsed.text));
    }
    Ok(queries)
}

/// Reads a qrels TSV. A header row starting with `query-id` is skipped.
/// Rows are `query-id, corpus-id, score` or the four-column TREC form
/// `query-id, iteration, corpus-id, score`. Negative grades are clamped to 0;
/// repeated pairs keep the last grade.
pub fn load_qrels(path: &Path) -> Result<QrelSet, EvalError> {
    let mut qrels = QrelSet::new();
    for (n, line) in lines(path)? {
        let cols: Vec<&str> = line.split_whitespace().collect();
        if n == 1 && cols.first().is_some_and(|c| c.eq_ignore_ascii_case("query-id")) {
            continue;
        }
        let (q, d, score) = match cols.as_slice() {
            [q, d, s] => (*q, *d, *s),
            [q, _, d, s] => (*q, *d, *s),
            _ => {
                return Err(malformed(
                    path,
                    n,
                    format!("expected 3 or 4 columns, found {}", cols.len()),
                ))
            }
        };
        let grade: i64 = score
            .parse::<i64>()
            .or_else(|_| score.parse::<f64>().map(|f| f.round() as i64))
            .map_err(|_| malformed(path, n, format!("score {score:?} is not an integer")))?;
        let grade = if grade < 0 {
            log::warn!("{} line {n}: negative grade {grade} treated as 0", path.display());
            0
        } else {
            u32::try_from(grade).unwrap_or(u32::MAX)
        };
        if let Some(previous) = qrels.insert(q, d, grade) {
            log::warn!(
                "{} line {n}: duplicate judgment ({q}, {d}), {previous} replaced by {grade}",
                path.display()
            );
        }
    }
    Ok(qrels)
}

pub fn qrels_path(dir: &Path, split: &str) -> PathBuf {
    dir.join(QRELS_DIR).join(format!("{split}.tsv"))
}

/// Loads a BEIR dataset directory. Judgments naming unknown queries or
/// documents are kept and reported with a warning.
pub fn load_beir(dir: &Path, split: &str) -> Result<BeirDataset, EvalError> {
    let corpus = load_corpus(&dir.join(CORPUS_FILE))?;
    let queries = load_queries(&dir.join(QUERIES_FILE))?;
    let qrels = load_qrels(&qrels_path(dir, split))?;

    let doc_ids: HashSet<&str> = corpus.iter().map(|d| d.id.as_str()).collect();
    let query_ids: HashSet<&str> = queries.iter().map(|q| q.id.as_str()).collect();
    let mut unknown_docs: BTreeMap<&str, usize> = BTreeMap::new();
    let mut unknown_queries = 0usize;
    for (q, judged) in qrels.iter() {
        if !query_ids.contains(q) {
            unknown_queries += 1;
        }
        for d in judged.keys() {
            if !doc_ids.contains(d.as_str()) {
                *unknown_docs.entry(q).or_default() += 1;
            }
        }
    }
    if unknown_queries > 0 {
        log::warn!("qrels name {unknown_queries} query id(s) absent from {QUERIES_FILE}");
    }
    let missing_docs: usize = unknown_docs.values().sum();
    if missing_docs > 0 {
        log::warn!("qrels name {missing_docs} document id(s) absent from {CORPUS_FILE}");
    }

    Ok(BeirDataset {
        corpus,
        queries,
        qrels,
    })
}
