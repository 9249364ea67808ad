//! Per-query ranking metrics.
//!
//! Binary metrics take the set of relevant ids (grade >= 1). nDCG uses graded
//! relevance with exponential gain `2^rel - 1` and a `log2(i + 1)` discount.

use std::collections::{HashMap, HashSet};
use std::hash::Hash;

/// Relevant documents in the top `k`, divided by `k` (even when fewer than
/// `k` results were returned).
pub fn precision_at_k<I: Eq + Hash>(ranked: &[I], relevant: &HashSet<I>, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    hits_at_k(ranked, relevant, k) as f64 / k as f64
}

/// Relevant documents in the top `k`, divided by all relevant documents.
pub fn recall_at_k<I: Eq + Hash>(ranked: &[I], relevant: &HashSet<I>, k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    hits_at_k(ranked, relevant, k) as f64 / relevant.len() as f64
}

/// Reciprocal rank of the first relevant document within the top `k`.
pub fn mrr_at_k<I: Eq + Hash>(ranked: &[I], relevant: &HashSet<I>, k: usize) -> f64 {
    ranked
        .iter()
        .take(k)
        .position(|d| relevant.contains(d))
        .map_or(0.0, |pos| 1.0 / (pos + 1) as f64)
}

pub fn ndcg_at_k<I: Eq + Hash>(ranked: &[I], grades: &HashMap<I, u32>, k: usize) -> f64 {
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, d)| discounted_gain(grades.get(d).copied().unwrap_or(0), i))
        .sum();

    let mut ideal: Vec<u32> = grades.values().copied().filter(|&g| g > 0).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| discounted_gain(g, i))
        .sum();

    if idcg > 0.0 {
        dcg / idcg
    } else {
        0.0
    }
}

fn discounted_gain(grade: u32, position: usize) -> f64 {
    (2f64.powi(grade as i32) - 1.0) / ((position + 2) as f64).log2()
}

/// Mean of precision at the rank of each retrieved relevant document, over
/// all relevant documents (missed ones contribute 0). No cutoff.
pub fn average_precision<I: Eq + Hash>(ranked: &[I], relevant: &HashSet<I>) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, d) in ranked.iter().enumerate() {
        if relevant.contains(d) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / relevant.len() as f64
}

fn hits_at_k<I: Eq + Hash>(ranked: &[I], relevant: &HashSet<I>, k: usize) -> usize {
    ranked.iter().take(k).filter(|d| relevant.contains(*d)).count()
}
