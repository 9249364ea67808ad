//! Declarative pipeline configuration, read from one JSON file.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use trimodal_core::eval::{qrels_path, validate_cutoffs, CORPUS_FILE, DEFAULT_CUTOFFS, QUERIES_FILE};
use trimodal_core::lexical::DEFAULT_MAX_TERMS;
use trimodal_core::rerank::{
    ChatCompletionsClient, LlmClient, MockBehavior, MockLlm, ModalityWeights, PromptSettings, RerankMode,
    DEFAULT_CANDIDATE_CAP, DEFAULT_SNIPPET_CHARS,
};
use trimodal_core::{EncoderProfile, IndexSettings};

use crate::PipelineError;

fn default_split() -> String {
    "test".into()
}

fn default_cutoffs() -> Vec<usize> {
    DEFAULT_CUTOFFS.to_vec()
}

fn default_top_k() -> usize {
    10
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_index_path() -> PathBuf {
    PathBuf::from("out/index.tmx")
}

fn default_run_tag() -> String {
    "trimodal".into()
}

fn default_workers() -> usize {
    4
}

fn one() -> f64 {
    1.0
}

fn default_max_vocab() -> usize {
    DEFAULT_MAX_TERMS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionSection {
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default = "default_max_vocab")]
    pub max_vocab: usize,
}

impl Default for FusionSection {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            max_vocab: DEFAULT_MAX_TERMS,
        }
    }
}

fn default_llm_timeout() -> u64 {
    60
}

fn default_llm_attempts() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provider", rename_all = "lowercase", deny_unknown_fields)]
pub enum LlmSection {
    /// OpenAI-compatible chat completions endpoint.
    Openai {
        base_url: String,
        model: String,
        #[serde(default = "default_llm_timeout")]
        timeout_secs: u64,
        #[serde(default = "default_llm_attempts")]
        attempts: u32,
    },
    /// Offline deterministic stand-in.
    Mock { mock: MockBehavior },
}

fn default_cap() -> usize {
    DEFAULT_CANDIDATE_CAP
}

fn default_snippet_chars() -> usize {
    DEFAULT_SNIPPET_CHARS
}

fn default_mode() -> RerankMode {
    RerankMode::None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RerankSection {
    #[serde(default = "default_mode")]
    pub mode: RerankMode,
    #[serde(default)]
    pub llm: Option<LlmSection>,
    #[serde(default = "default_cap")]
    pub candidate_cap: usize,
    #[serde(default = "default_snippet_chars")]
    pub snippet_chars: usize,
    /// Applied in weights mode when the LLM answer is unusable.
    #[serde(default)]
    pub fallback_weights: Option<ModalityWeights>,
}

impl Default for RerankSection {
    fn default() -> Self {
        Self {
            mode: RerankMode::None,
            llm: None,
            candidate_cap: DEFAULT_CANDIDATE_CAP,
            snippet_chars: DEFAULT_SNIPPET_CHARS,
            fallback_weights: None,
        }
    }
}

impl RerankSection {
    pub fn prompt_settings(&self) -> PromptSettings {
        PromptSettings {
            candidate_cap: self.candidate_cap,
            snippet_chars: self.snippet_chars,
        }
    }

    pub fn fallback(&self) -> ModalityWeights {
        self.fallback_weights.unwrap_or_else(ModalityWeights::equal)
    }

    pub fn client(&self) -> Result<Box<dyn LlmClient>, PipelineError> {
        match &self.llm {
            Some(LlmSection::Openai {
                base_url,
                model,
                timeout_secs,
                attempts,
            }) => Ok(Box::new(ChatCompletionsClient::new(
                base_url,
                model,
                Duration::from_secs(*timeout_secs),
                *attempts,
            ))),
            Some(LlmSection::Mock { mock }) => Ok(Box::new(MockLlm::new(mock.clone()))),
            None => Err(PipelineError::Usage(format!(
                "rerank mode {} needs an \"llm\" section",
                self.mode.as_str()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset_dir: PathBuf,
    #[serde(default = "default_split")]
    pub qrels_split: String,
    pub encoder: EncoderProfile,
    #[serde(default)]
    pub fusion: FusionSection,
    /// JSON-lines `{"doc_id", "entities"}` overriding extraction for documents.
    #[serde(default)]
    pub entities_sidecar: Option<PathBuf>,
    /// Same format, keyed by query id.
    #[serde(default)]
    pub query_entities_sidecar: Option<PathBuf>,
    #[serde(default)]
    pub rerank: RerankSection,
    #[serde(default = "default_cutoffs")]
    pub cutoffs: Vec<usize>,
    /// Retrieval depth per query; also the number of candidates reranked.
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_index_path")]
    pub index_path: PathBuf,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_run_tag")]
    pub run_tag: String,
    /// Threads scoring queries during `eval`.
    #[serde(default = "default_workers")]
    pub workers: usize,
}

impl PipelineConfig {
    /// Reads `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Usage(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut self.dataset_dir);
        resolve(&mut self.index_path);
        resolve(&mut self.output_dir);
        if let Some(p) = self.entities_sidecar.as_mut() {
            resolve(p);
        }
        if let Some(p) = self.query_entities_sidecar.as_mut() {
            resolve(p);
        }
    }

    pub fn index_settings(&self) -> IndexSettings {
        IndexSettings {
            alpha: self.fusion.alpha,
            beta: self.fusion.beta,
            gamma: self.fusion.gamma,
            max_terms: self.fusion.max_vocab,
        }
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.dataset_dir.join(CORPUS_FILE)
    }

    pub fn queries_path(&self) -> PathBuf {
        self.dataset_dir.join(QUERIES_FILE)
    }

    pub fn qrels_path(&self) -> PathBuf {
        qrels_path(&self.dataset_dir, &self.qrels_split)
    }

    /// Knob checks that do not touch the filesystem.
    pub fn validate(&self) -> Result<(), PipelineError> {
        validate_cutoffs(&self.cutoffs).map_err(|e| PipelineError::Usage(e.to_string()))?;
        let max_cutoff = *self.cutoffs.last().expect("validated non-empty");
        if self.top_k < max_cutoff {
            return Err(PipelineError::Usage(format!(
                "top_k {} is below the largest cutoff {max_cutoff}",
                self.top_k
            )));
        }
        self.validate_k(self.top_k)?;
        self.encoder
            .validate()
            .map_err(|e| PipelineError::Usage(e.to_string()))?;
        trimodal_core::FusionConfig::new(
            self.fusion.alpha,
            self.fusion.beta,
            self.fusion.gamma,
            self.encoder.dim,
            self.fusion.max_vocab,
        )
        .validate()
        .map_err(|e| PipelineError::Usage(e.to_string()))?;
        if self.fusion.max_vocab == 0 {
            return Err(PipelineError::Usage("fusion.max_vocab must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(PipelineError::Usage("workers must be at least 1".into()));
        }
        if let Some(w) = self.rerank.fallback_weights {
            ModalityWeights::new(w.semantic, w.lexical, w.graph)
                .map_err(|e| PipelineError::Usage(format!("rerank.fallback_weights: {e}")))?;
        }
        if self.rerank.mode != RerankMode::None {
            self.rerank.client()?;
        }
        Ok(())
    }

    /// A retrieval depth is usable if it is positive and, with reranking on,
    /// fits in the prompt's candidate cap.
    pub fn validate_k(&self, k: usize) -> Result<(), PipelineError> {
        if k == 0 {
            return Err(PipelineError::Usage("k must be at least 1".into()));
        }
        if self.rerank.mode != RerankMode::None && k > self.rerank.candidate_cap {
            return Err(PipelineError::Usage(format!(
                "k {k} exceeds rerank.candidate_cap {}",
                self.rerank.candidate_cap
            )));
        }
        Ok(())
    }

    /// Fails with a data error naming the first referenced file that is missing.
    pub fn check_paths(&self, need_queries: bool) -> Result<(), PipelineError> {
        let mut required = vec![self.corpus_path()];
        if need_queries {
            required.push(self.queries_path());
            required.push(self.qrels_path());
        }
        required.extend(self.entities_sidecar.iter().cloned());
        required.extend(self.query_entities_sidecar.iter().cloned());
        match required.into_iter().find(|p| !p.is_file()) {
            Some(missing) => Err(PipelineError::Data(format!("missing file: {}", missing.display()))),
            None => Ok(()),
        }
    }

    /// Digest of everything that shapes the index: encoder identity, fusion
    /// knobs, seed, and the bytes of the corpus and entity sidecar. Paths and
    /// rerank settings are excluded.
    pub fn config_hash(&self) -> Result<String, PipelineError> {
        let mut hasher = Sha256::new();
        let knobs = serde_json::json!({
            "encoder": self.encoder.fingerprint(),
            "alpha": self.fusion.alpha,
            "beta": self.fusion.beta,
            "gamma": self.fusion.gamma,
            "max_vocab": self.fusion.max_vocab,
            "seed": self.seed,
        });
        hasher.update(knobs.to_string().as_bytes());
        for path in std::iter::once(self.corpus_path()).chain(self.entities_sidecar.iter().cloned()) {
            let bytes = fs::read(&path)
                .map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(&bytes);
        }
        let digest = hasher.finalize();
        Ok(digest[..8].iter().map(|b| format!("{b:02x}")).collect())
    }
}
