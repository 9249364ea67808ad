//! Pipeline orchestration behind the `trimodal` binary: `index` builds the
//! hybrid index, `search` answers one query, `eval` scores a BEIR dataset.

pub mod config;
pub mod pipeline;

use thiserror::Error;

pub use config::PipelineConfig;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Error)]
pub enum PipelineError {
    /// Bad flags or configuration.
    #[error("{0}")]
    Usage(String),
    /// Missing or malformed input files, or inconsistent artifacts.
    #[error("{0}")]
    Data(String),
    /// Embedding or LLM service still failing after retries.
    #[error("{0}")]
    External(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Usage(_) => 1,
            PipelineError::Data(_) => 2,
            PipelineError::External(_) => 3,
        }
    }
}
