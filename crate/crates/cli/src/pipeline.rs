//! The three pipeline commands. Each writes results to `out` and warnings to
//! `err` so callers (the binary, tests) choose where they go.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use trimodal_core::encoder::EncoderError;
use trimodal_core::entity::{CapitalizedRunExtractor, EntityError, EntitySidecar};
use trimodal_core::eval::{
    evaluate_run, load_beir, load_corpus, render_comparison, render_grid, EvalError, FallbackRecord,
    MetricReport, RunMetadata, RunResult,
};
use trimodal_core::index::{load_index, save_index, EncodedQuery, IndexError, StageTiming};
use trimodal_core::rerank::{
    Candidate, LlmClient, LlmError, ModalityWeights, RerankMode, RerankOutcome, RerankRequest, Reranker,
};
use trimodal_core::tri_modal::EncodeError;
use trimodal_core::{open_provider, Document, EmbeddingProvider, EntitySource, HybridIndex, Query};

use crate::config::PipelineConfig;
use crate::PipelineError;

pub const BUILD_REPORT_FILE: &str = "build_report.json";
pub const RUN_FILE: &str = "run.tsv";
pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_TEXT: &str = "metrics.txt";
pub const PRE_RUN_FILE: &str = "run.pre-rerank.tsv";
pub const PRE_METRICS_JSON: &str = "metrics.pre-rerank.json";
pub const PRE_METRICS_TEXT: &str = "metrics.pre-rerank.txt";
pub const COMPARISON_TEXT: &str = "comparison.txt";

const SEARCH_QUERY_ID: &str = "query";

/// What `index` wrote.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildReport {
    pub config_hash: String,
    pub encoder: String,
    pub doc_count: usize,
    pub vocab_size: usize,
    pub entity_count: usize,
    pub zero_rows: usize,
    pub hybrid_dim: usize,
    pub timings: Vec<StageTiming>,
}

/// One ranked line of `search` output.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchRow {
    pub rank: usize,
    pub doc_id: String,
    pub score: f64,
    pub title: String,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub rows: Vec<SearchRow>,
    pub weights: Option<ModalityWeights>,
    pub fallback: Option<String>,
}

/// Paths and reports produced by `eval`.
#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub report: MetricReport,
    pub pre_rerank: Option<MetricReport>,
    pub run_path: PathBuf,
    pub fallback_count: usize,
}

fn data(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Data(e.to_string())
}

fn eval_error(e: EvalError) -> PipelineError {
    PipelineError::Data(e.to_string())
}

/// Whether an encoder failure comes from the service rather than our inputs.
fn service_failure(e: &EncoderError) -> bool {
    !matches!(e, EncoderError::EmptyInput | EncoderError::InvalidProfile(_))
}

fn encode_error(stage: &str, e: EncodeError) -> PipelineError {
    let external = match &e {
        EncodeError::Semantic { source, .. } => service_failure(source),
        EncodeError::Graph {
            source: EntityError::Encoder { source, .. },
            ..
        } => service_failure(source),
        EncodeError::Graph {
            source: EntityError::DimensionMismatch { .. },
            ..
        } => true,
        EncodeError::Graph { .. } => false,
    };
    let message = format!("{stage} failed at doc_id {:?}: {e}", e.id());
    if external {
        PipelineError::External(message)
    } else {
        PipelineError::Data(message)
    }
}

fn index_error(stage: &str, e: IndexError) -> PipelineError {
    match e {
        IndexError::Encode(inner) => encode_error(stage, inner),
        IndexError::Lexical(inner) => data(format!("{stage} failed at stage vocabulary: {inner}")),
        IndexError::Entity(inner) => data(format!("{stage} failed at stage entities: {inner}")),
        IndexError::Fusion(inner) => data(format!("{stage} failed at stage fusion: {inner}")),
        other => data(format!("{stage} failed: {other}")),
    }
}

fn provider(config: &PipelineConfig) -> Result<Box<dyn EmbeddingProvider>, PipelineError> {
    open_provider(&config.encoder).map_err(|e| PipelineError::Usage(e.to_string()))
}

fn entity_source(sidecar: Option<&Path>) -> Result<EntitySource, PipelineError> {
    let sidecar = sidecar
        .map(EntitySidecar::load)
        .transpose()
        .map_err(data)?;
    Ok(EntitySource::new(Box::new(CapitalizedRunExtractor), sidecar))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| data(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, bytes).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn emit(stream: &mut dyn Write, text: &str) -> Result<(), PipelineError> {
    stream
        .write_all(text.as_bytes())
        .map_err(|e| data(format!("writing output: {e}")))
}

/// Loads the index and checks it was built from this configuration.
fn open_index(config: &PipelineConfig) -> Result<HybridIndex, PipelineError> {
    if !config.index_path.is_file() {
        return Err(data(format!(
            "missing file: {} (run `trimodal index` first)",
            config.index_path.display()
        )));
    }
    let index = load_index(&config.index_path)
        .map_err(|e| data(format!("{}: {e}", config.index_path.display())))?;
    let expected = config.config_hash()?;
    let stored = &index.fingerprints().config_hash;
    if *stored != expected {
        return Err(data(format!(
            "config hash mismatch: index {} was built with {stored}, current config gives {expected}; rebuild the index",
            config.index_path.display()
        )));
    }
    Ok(index)
}

pub fn cmd_index(config: &PipelineConfig, out: &mut dyn Write) -> Result<BuildReport, PipelineError> {
    config.validate()?;
    config.check_paths(false)?;
    let corpus = load_corpus(&config.corpus_path()).map_err(eval_error)?;
    let provider = provider(config)?;
    let entities = entity_source(config.entities_sidecar.as_deref())?;
    let config_hash = config.config_hash()?;

    let (index, stats) = HybridIndex::build(
        &corpus,
        provider.as_ref(),
        &entities,
        &config.index_settings(),
        config_hash.clone(),
    )
    .map_err(|e| index_error("index build", e))?;

    if let Some(parent) = config.index_path.parent() {
        fs::create_dir_all(parent).map_err(|e| data(format!("{}: {e}", parent.display())))?;
    }
    save_index(&index, &config.index_path)
        .map_err(|e| data(format!("{}: {e}", config.index_path.display())))?;

    let report = BuildReport {
        config_hash,
        encoder: index.fingerprints().encoder.clone(),
        doc_count: stats.doc_count,
        vocab_size: stats.vocab_size,
        entity_count: stats.entity_count,
        zero_rows: stats.zero_rows,
        hybrid_dim: stats.hybrid_dim,
        timings: stats.timings,
    };
    let json = serde_json::to_string_pretty(&report).expect("build report serializes");
    write_file(&config.output_dir.join(BUILD_REPORT_FILE), format!("{json}\n").as_bytes())?;
    emit(
        out,
        &format!(
            "indexed {} documents (vocab {}, entities {}, dim {}) into {}\n",
            report.doc_count,
            report.vocab_size,
            report.entity_count,
            report.hybrid_dim,
            config.index_path.display()
        ),
    )?;
    Ok(report)
}

/// Top-`k` candidates for one encoded query, in pre-rank order.
fn candidates(
    index: &HybridIndex,
    docs: &HashMap<&str, &Document>,
    query: &EncodedQuery,
    k: usize,
) -> Result<Vec<Candidate>, PipelineError> {
    let hits = index.search(query, k).map_err(|e| index_error("search", e))?;
    hits.into_iter()
        .map(|hit| {
            let scores = index
                .per_modality_scores(&query.tri, &hit.doc_id)
                .map_err(|e| index_error("search", e))?;
            let doc = docs.get(hit.doc_id.as_str());
            Ok(Candidate {
                title: doc.map(|d| d.title.clone()).unwrap_or_default(),
                snippet: doc.map(|d| d.text.clone()).unwrap_or_default(),
                doc_id: hit.doc_id,
                scores,
                hybrid_score: hit.score,
            })
        })
        .collect()
}

fn reranker<'a>(config: &PipelineConfig, client: &'a dyn LlmClient) -> Reranker<'a> {
    Reranker::new(
        client,
        config.rerank.mode,
        config.rerank.prompt_settings(),
        config.rerank.fallback(),
    )
}

/// Stands in for an LLM when reranking is off; never called.
struct NoLlm;

impl LlmClient for NoLlm {
    fn complete(&self, _request: &RerankRequest<'_>) -> Result<String, LlmError> {
        Err(LlmError::Transport {
            attempts: 0,
            message: "reranking disabled".into(),
        })
    }
}

fn llm_client(config: &PipelineConfig) -> Result<Box<dyn LlmClient>, PipelineError> {
    if config.rerank.mode == RerankMode::None {
        Ok(Box::new(NoLlm))
    } else {
        config.rerank.client()
    }
}

fn fallback_warning(query_id: &str, reason: &str) -> String {
    format!("warning: query {query_id}: LLM rerank fell back to the static ranking: {reason}\n")
}

pub fn cmd_search(
    config: &PipelineConfig,
    query_text: &str,
    k: usize,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<SearchResult, PipelineError> {
    config.validate()?;
    config.validate_k(k)?;
    config.check_paths(false)?;
    let index = open_index(config)?;
    let corpus = load_corpus(&config.corpus_path()).map_err(eval_error)?;
    let docs: HashMap<&str, &Document> = corpus.iter().map(|d| (d.id.as_str(), d)).collect();
    let provider = provider(config)?;
    let query_entities = entity_source(config.query_entities_sidecar.as_deref())?;

    let query = Query::new(SEARCH_QUERY_ID, query_text);
    let encoded = index
        .encode_queries(provider.as_ref(), &query_entities, std::slice::from_ref(&query))
        .map_err(|e| index_error("query encoding", e))?
        .pop()
        .expect("one query in, one out");
    let candidates = candidates(&index, &docs, &encoded, k)?;
    let client = llm_client(config)?;
    let outcome = reranker(config, client.as_ref()).rerank(query_text, &candidates);

    if let Some(reason) = &outcome.fallback {
        emit(err, &fallback_warning(SEARCH_QUERY_ID, reason))?;
    }
    let rows: Vec<SearchRow> = outcome
        .ranked
        .iter()
        .enumerate()
        .map(|(i, r)| SearchRow {
            rank: i + 1,
            doc_id: r.doc_id.clone(),
            score: r.score,
            title: docs.get(r.doc_id.as_str()).map(|d| d.title.clone()).unwrap_or_default(),
        })
        .collect();

    let mut text = String::from("rank\tdoc_id\tscore\ttitle\n");
    for row in &rows {
        text.push_str(&format!("{}\t{}\t{:.6}\t{}\n", row.rank, row.doc_id, row.score, row.title));
    }
    if config.rerank.mode == RerankMode::Weights {
        if let Some(w) = outcome.weights_used {
            let source = if outcome.fallback.is_some() { "fallback" } else { "llm" };
            text.push_str(&format!(
                "weights ({source}): semantic={:.4} lexical={:.4} graph={:.4}\n",
                w.semantic, w.lexical, w.graph
            ));
        }
    }
    emit(out, &text)?;
    Ok(SearchResult {
        rows,
        weights: outcome.weights_used,
        fallback: outcome.fallback,
    })
}

struct QueryResult {
    pre: Vec<(String, f64)>,
    post: RerankOutcome,
}

pub fn cmd_eval(
    config: &PipelineConfig,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<EvalOutput, PipelineError> {
    config.validate()?;
    config.check_paths(true)?;
    let dataset = load_beir(&config.dataset_dir, &config.qrels_split).map_err(eval_error)?;
    let index = open_index(config)?;
    let provider = provider(config)?;
    let query_entities = entity_source(config.query_entities_sidecar.as_deref())?;
    let docs: HashMap<&str, &Document> = dataset.corpus.iter().map(|d| (d.id.as_str(), d)).collect();

    let judged: Vec<Query> = dataset
        .queries
        .iter()
        .filter(|q| dataset.qrels.judged(&q.id).is_some())
        .cloned()
        .collect();
    let unjudged = dataset.queries.len() - judged.len();
    if unjudged > 0 {
        log::info!(
            "{unjudged} queries have no judgments in split {:?} and are not run",
            config.qrels_split
        );
    }
    if judged.is_empty() {
        return Err(eval_error(EvalError::NoEvaluableQueries { run_queries: 0 }));
    }

    let encoded = index
        .encode_queries(provider.as_ref(), &query_entities, &judged)
        .map_err(|e| index_error("query encoding", e))?;
    let client = llm_client(config)?;
    let reranker = reranker(config, client.as_ref());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| data(format!("worker pool: {e}")))?;
    // Results come back in query order; everything below writes sequentially.
    let results: Vec<QueryResult> = pool.install(|| {
        judged
            .par_iter()
            .zip(encoded.par_iter())
            .map(|(query, enc)| {
                let cands = candidates(&index, &docs, enc, config.top_k)?;
                let pre = cands.iter().map(|c| (c.doc_id.clone(), c.hybrid_score)).collect();
                let post = reranker.rerank(&query.text, &cands);
                Ok(QueryResult { pre, post })
            })
            .collect::<Result<_, PipelineError>>()
    })?;

    let base = RunMetadata {
        run_tag: config.run_tag.clone(),
        config_hash: index.fingerprints().config_hash.clone(),
        encoder_fingerprint: index.fingerprints().encoder.clone(),
        rerank_mode: RerankMode::None.as_str().to_string(),
        stage: "retrieval".into(),
        fallback_count: 0,
        fallbacks: Vec::new(),
    };
    let mut pre_run = RunResult::new(base.clone());
    let mut post_run = RunResult::new(RunMetadata {
        rerank_mode: config.rerank.mode.as_str().to_string(),
        stage: "rerank".into(),
        ..base
    });
    for (query, result) in judged.iter().zip(results) {
        if let Some(reason) = &result.post.fallback {
            emit(err, &fallback_warning(&query.id, reason))?;
            post_run.metadata.fallbacks.push(FallbackRecord {
                query_id: query.id.clone(),
                reason: reason.clone(),
            });
        }
        pre_run.insert(query.id.clone(), result.pre).map_err(eval_error)?;
        let post: Vec<(String, f64)> = result.post.ranked.into_iter().map(|r| (r.doc_id, r.score)).collect();
        post_run.insert(query.id.clone(), post).map_err(eval_error)?;
    }
    post_run.metadata.fallback_count = post_run.metadata.fallbacks.len();

    let out_dir = &config.output_dir;
    fs::create_dir_all(out_dir).map_err(|e| data(format!("{}: {e}", out_dir.display())))?;
    let reranking = config.rerank.mode != RerankMode::None;
    let final_run = if reranking { &post_run } else { &pre_run };

    let report = evaluate_run(final_run, &dataset.qrels, &config.cutoffs).map_err(eval_error)?;
    let run_path = out_dir.join(RUN_FILE);
    final_run.write(&run_path).map_err(eval_error)?;
    write_file(&out_dir.join(METRICS_JSON), report.to_json().as_bytes())?;
    let grid = render_grid(&report);
    write_file(&out_dir.join(METRICS_TEXT), grid.as_bytes())?;

    let mut text = grid;
    let pre_report = if reranking {
        let pre = evaluate_run(&pre_run, &dataset.qrels, &config.cutoffs).map_err(eval_error)?;
        pre_run.write(&out_dir.join(PRE_RUN_FILE)).map_err(eval_error)?;
        write_file(&out_dir.join(PRE_METRICS_JSON), pre.to_json().as_bytes())?;
        write_file(&out_dir.join(PRE_METRICS_TEXT), render_grid(&pre).as_bytes())?;
        let comparison = render_comparison(&pre, &report);
        write_file(&out_dir.join(COMPARISON_TEXT), comparison.as_bytes())?;
        text.push('\n');
        text.push_str(&comparison);
        Some(pre)
    } else {
        None
    };
    emit(out, &text)?;

    Ok(EvalOutput {
        report,
        pre_rerank: pre_report,
        run_path,
        fallback_count: post_run.metadata.fallback_count,
    })
}
