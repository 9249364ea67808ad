//! Per-modality L2 normalization, scaling and concatenation into one unit
//! hybrid vector.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::DenseVector;
use crate::entity::GraphEmbedding;
use crate::lexical::SparseVector;

/// Norms at or below this are treated as zero vectors.
pub const ZERO_NORM: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("{block} block has dimension {got}, expected {expected}")]
    DimensionMismatch {
        block: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid fusion config: {0}")]
    InvalidConfig(String),
}

/// Modality scale factors and the block dimensions of the hybrid space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Semantic (and graph) dimension.
    pub semantic_dim: usize,
    /// Vocabulary size.
    pub lexical_dim: usize,
}

impl FusionConfig {
    pub fn new(alpha: f64, beta: f64, gamma: f64, semantic_dim: usize, lexical_dim: usize) -> Self {
        Self {
            alpha,
            beta,
            gamma,
            semantic_dim,
            lexical_dim,
        }
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        let scales = [self.alpha, self.beta, self.gamma];
        if scales.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(FusionError::InvalidConfig(
                "alpha, beta and gamma must be finite and non-negative".into(),
            ));
        }
        if scales.iter().sum::<f64>() <= 0.0 {
            return Err(FusionError::InvalidConfig(
                "alpha + beta + gamma must be positive".into(),
            ));
        }
        if self.semantic_dim == 0 {
            return Err(FusionError::InvalidConfig("semantic dimension is zero".into()));
        }
        Ok(())
    }

    pub fn hybrid_dim(&self) -> usize {
        2 * self.semantic_dim + self.lexical_dim
    }

    pub fn semantic_range(&self) -> Range<usize> {
        0..self.semantic_dim
    }

    pub fn lexical_range(&self) -> Range<usize> {
        self.semantic_dim..self.semantic_dim + self.lexical_dim
    }

    pub fn graph_range(&self) -> Range<usize> {
        self.semantic_dim + self.lexical_dim..self.hybrid_dim()
    }
}

/// The three per-modality vectors of one text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriModalEmbedding {
    pub semantic: DenseVector,
    pub lexical: SparseVector,
    pub graph: GraphEmbedding,
}

/// Unit-norm fused vector, or all zeros (flagged) when every block was zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridVector {
    values: Vec<f64>,
    zero: bool,
}

impl HybridVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        let zero = l2_norm(&values) <= ZERO_NORM;
        Self { values, zero }
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `v / ||v||`, or `v` unchanged when its norm is at most [`ZERO_NORM`].
pub fn normalize_block(v: &[f64]) -> Vec<f64> {
    let norm = l2_norm(v);
    if norm > ZERO_NORM {
        v.iter().map(|x| x / norm).collect()
    } else {
        v.to_vec()
    }
}

/// Cosine of two blocks, defined as 0 when either block is zero.
pub fn block_cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na <= ZERO_NORM || nb <= ZERO_NORM {
        return 0.0;
    }
    dot(&normalize_block(a), &normalize_block(b))
}

/// `e = e' / ||e'||` with `e' = [alpha * s_hat; beta * t_hat; gamma * g_hat]`.
pub fn fuse(tri: &TriModalEmbedding, cfg: &FusionConfig) -> Result<HybridVector, FusionError> {
    check_dim("semantic", cfg.semantic_dim, tri.semantic.dim())?;
    check_dim("lexical", cfg.lexical_dim, tri.lexical.dim())?;
    check_dim("graph", cfg.semantic_dim, tri.graph.dim())?;

    let mut concat = Vec::with_capacity(cfg.hybrid_dim());
    concat.extend(
        normalize_block(tri.semantic.values())
            .into_iter()
            .map(|x| cfg.alpha * x),
    );
    let lexical_start = concat.len();
    concat.resize(lexical_start + cfg.lexical_dim, 0.0);
    let lexical_norm = tri.lexical.values().iter().map(|x| x * x).sum::<f64>().sqrt();
    if lexical_norm > ZERO_NORM {
        for (i, v) in tri.lexical.iter() {
            concat[lexical_start + i] = cfg.beta * (v / lexical_norm);
        }
    }
    concat.extend(
        normalize_block(tri.graph.values())
            .into_iter()
            .map(|x| cfg.gamma * x),
    );

    let norm = l2_norm(&concat);
    if norm <= ZERO_NORM {
        return Ok(HybridVector {
            values: vec![0.0; concat.len()],
            zero: true,
        });
    }
    concat.iter_mut().for_each(|x| *x /= norm);
    Ok(HybridVector {
        values: concat,
        zero: false,
    })
}

fn check_dim(block: &'static str, expected: usize, got: usize) -> Result<(), FusionError> {
    if expected == got {
        Ok(())
    } else {
        Err(FusionError::DimensionMismatch {
            block,
            expected,
            got,
        })
    }
}
