//! Evaluation harness: BEIR loading, runs, ranking metrics and reports.

mod beir;
pub mod metrics;
mod report;
mod run;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use beir::{
    load_beir, load_corpus, load_qrels, load_queries, qrels_path, BeirDataset, CORPUS_FILE,
    QRELS_DIR, QUERIES_FILE,
};
pub use metrics::{average_precision, mrr_at_k, ndcg_at_k, precision_at_k, recall_at_k};
pub use report::{
    headline_cutoff, render_comparison, render_grid, render_ndcg_table, render_system_table,
    render_table, ReportCell,
};
pub use run::{metadata_path, FallbackRecord, RunMetadata, RunResult};

/// Cutoff grid used by default for every report.
pub const DEFAULT_CUTOFFS: [usize; 4] = [1, 3, 5, 10];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid run: {0}")]
    InvalidRun(String),
    #[error("invalid cutoffs: {0}")]
    InvalidCutoffs(String),
    #[error("no evaluable queries (run has {run_queries}, none with a positive judgment)")]
    NoEvaluableQueries { run_queries: usize },
}

/// Relevance judgments: `(query_id, doc_id) -> grade`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QrelSet {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl QrelSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the grade this judgment replaced, if any.
    pub fn insert(&mut self, query_id: &str, doc_id: &str, grade: u32) -> Option<u32> {
        self.judgments
            .entry(query_id.to_string())
            .or_default()
            .insert(doc_id.to_string(), grade)
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> Option<u32> {
        self.judgments.get(query_id)?.get(doc_id).copied()
    }

    pub fn judged(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(query_id)
    }

    /// Documents with grade >= 1.
    pub fn relevant(&self, query_id: &str) -> HashSet<&str> {
        self.judgments
            .get(query_id)
            .map(|j| j.iter().filter(|(_, &g)| g >= 1).map(|(d, _)| d.as_str()).collect())
            .unwrap_or_default()
    }

    pub fn has_positive(&self, query_id: &str) -> bool {
        self.judgments
            .get(query_id)
            .is_some_and(|j| j.values().any(|&g| g >= 1))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeMap<String, u32>)> {
        self.judgments.iter().map(|(q, j)| (q.as_str(), j))
    }

    pub fn query_count(&self) -> usize {
        self.judgments.len()
    }

    /// Total number of judgment lines.
    pub fn len(&self) -> usize {
        self.judgments.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }
}

/// Metric values for one query or the aggregate. Vectors are aligned with
/// the report's cutoffs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub mrr: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub map: f64,
}

impl MetricValues {
    fn zeros(n: usize) -> Self {
        Self {
            precision: vec![0.0; n],
            recall: vec![0.0; n],
            mrr: vec![0.0; n],
            ndcg: vec![0.0; n],
            map: 0.0,
        }
    }

    fn columns_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.precision, &mut self.recall, &mut self.mrr, &mut self.ndcg]
    }

    fn columns(&self) -> [&Vec<f64>; 4] {
        [&self.precision, &self.recall, &self.mrr, &self.ndcg]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub query_id: String,
    pub relevant: usize,
    pub retrieved: usize,
    pub metrics: MetricValues,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipCounts {
    /// In the run, judged, but no judgment has grade >= 1.
    pub no_positive_judgments: usize,
    /// In the run but absent from the qrels.
    pub not_in_qrels: usize,
    /// Judged with a positive grade but absent from the run.
    pub not_in_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub run: RunMetadata,
    pub cutoffs: Vec<usize>,
    pub evaluated_queries: usize,
    pub skipped: SkipCounts,
    pub aggregate: MetricValues,
    pub per_query: Vec<QueryMetrics>,
}

impl MetricReport {
    fn column(&self, metric: &str) -> Option<&Vec<f64>> {
        match metric {
            "P" | "precision" => Some(&self.aggregate.precision),
            "Recall" | "recall" => Some(&self.aggregate.recall),
            "MRR" | "mrr" => Some(&self.aggregate.mrr),
            "nDCG" | "ndcg" => Some(&self.aggregate.ndcg),
            _ => None,
        }
    }

    /// Aggregate value of `metric` (`P`, `Recall`, `MRR`, `nDCG`) at `k`.
    pub fn value(&self, metric: &str, k: usize) -> Option<f64> {
        let i = self.cutoffs.iter().position(|&c| c == k)?;
        self.column(metric).map(|col| col[i])
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

pub fn validate_cutoffs(cutoffs: &[usize]) -> Result<(), EvalError> {
    if cutoffs.is_empty() {
        return Err(EvalError::InvalidCutoffs("no cutoffs".into()));
    }
    if cutoffs[0] == 0 {
        return Err(EvalError::InvalidCutoffs("cutoffs must be >= 1".into()));
    }
    if cutoffs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::InvalidCutoffs(format!(
            "cutoffs must be strictly ascending, got {cutoffs:?}"
        )));
    }
    Ok(())
}

/// All five metrics for one query.
pub fn score_query(ranked: &[&str], judged: &BTreeMap<String, u32>, cutoffs: &[usize]) -> MetricValues {
    let relevant: HashSet<&str> = judged
        .iter()
        .filter(|(_, &g)| g >= 1)
        .map(|(d, _)| d.as_str())
        .collect();
    let grades: HashMap<&str, u32> = judged.iter().map(|(d, &g)| (d.as_str(), g)).collect();
    let mut values = MetricValues::zeros(cutoffs.len());
    for (i, &k) in cutoffs.iter().enumerate() {
        values.precision[i] = precision_at_k(ranked, &relevant, k);
        values.recall[i] = recall_at_k(ranked, &relevant, k);
        values.mrr[i] = mrr_at_k(ranked, &relevant, k);
        values.ndcg[i] = ndcg_at_k(ranked, &grades, k);
    }
    values.map = average_precision(ranked, &relevant);
    values
}

/// Scores every query in `run` that has at least one positive judgment.
/// Aggregates are plain means over evaluated queries, summed in query-id order.
pub fn evaluate_run(run: &RunResult, qrels: &QrelSet, cutoffs: &[usize]) -> Result<MetricReport, EvalError> {
    validate_cutoffs(cutoffs)?;
    let mut skipped = SkipCounts::default();
    let mut per_query = Vec::new();
    for (q, ranking) in run.iter() {
        let Some(judged) = qrels.judged(q) else {
            skipped.not_in_qrels += 1;
            continue;
        };
        if !qrels.has_positive(q) {
            skipped.no_positive_judgments += 1;
            continue;
        }
        let ranked: Vec<&str> = ranking.iter().map(|(d, _)| d.as_str()).collect();
        per_query.push(QueryMetrics {
            query_id: q.to_string(),
            relevant: judged.values().filter(|&&g| g >= 1).count(),
            retrieved: ranked.len(),
            metrics: score_query(&ranked, judged, cutoffs),
        });
    }
    skipped.not_in_run = qrels
        .iter()
        .filter(|(q, _)| run.ranking(q).is_none() && qrels.has_positive(q))
        .count();
    if skipped.not_in_qrels > 0 {
        log::warn!("{} run queries have no judgments and were skipped", skipped.not_in_qrels);
    }
    if skipped.no_positive_judgments > 0 {
        log::warn!(
            "{} run queries have no positive judgment and were skipped",
            skipped.no_positive_judgments
        );
    }
    if skipped.not_in_run > 0 {
        log::warn!("{} judged queries are missing from the run", skipped.not_in_run);
    }
    if per_query.is_empty() {
        return Err(EvalError::NoEvaluableQueries {
            run_queries: run.len(),
        });
    }

    let n = per_query.len() as f64;
    let mut aggregate = MetricValues::zeros(cutoffs.len());
    for qm in &per_query {
        for (acc, col) in aggregate.columns_mut().into_iter().zip(qm.metrics.columns()) {
            for (a, v) in acc.iter_mut().zip(col) {
                *a += v;
            }
        }
        aggregate.map += qm.metrics.map;
    }
    for col in aggregate.columns_mut() {
        for a in col.iter_mut() {
            *a /= n;
        }
    }
    aggregate.map /= n;

    Ok(MetricReport {
        run: run.metadata.clone(),
        cutoffs: cutoffs.to_vec(),
        evaluated_queries: per_query.len(),
        skipped,
        aggregate,
        per_query,
    })
}

/// MAP over the evaluated queries of `run`.
pub fn mean_average_precision(run: &RunResult, qrels: &QrelSet) -> Result<f64, EvalError> {
    evaluate_run(run, qrels, &[1]).map(|r| r.aggregate.map)
}
