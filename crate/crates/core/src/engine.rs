//! Exact brute-force retrieval with per-query dimension masking.
//!
//! Scores are masked inner products Σ_{i∈S} qᵢdᵢ accumulated in f64 from
//! the f32 inputs, always in ascending index order, so a full mask
//! reproduces the plain dot product bit-for-bit. The full-dimension path
//! doubles as the first stage that gathers pseudo-relevant documents.

use crate::error::{Error, Result};
use crate::selection::SelectionMask;
use crate::store::{EmbeddingMatrix, RunEntry, RunRanking};

/// Similarity used when ranking a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Similarity {
    DotProduct,
    /// Masked dot product over the full-vector norms; a zero-norm side
    /// scores 0.
    Cosine,
}

/// Ranking parameters: similarity and result-list depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoringConfig {
    pub similarity: Similarity,
    pub top_n: usize,
}

impl ScoringConfig {
    pub fn new(similarity: Similarity, top_n: usize) -> Result<Self> {
        if top_n == 0 {
            return Err(Error::invalid("top_n must be at least 1"));
        }
        Ok(Self { similarity, top_n })
    }
}

fn check_dims(q: &[f32], d: &[f32], mask: &SelectionMask) -> Result<()> {
    if q.len() != d.len() {
        return Err(Error::DimMismatch {
            left: q.len(),
            right: d.len(),
        });
    }
    if mask.dim() != q.len() {
        return Err(Error::DimMismatch {
            left: mask.dim(),
            right: q.len(),
        });
    }
    Ok(())
}

/// Masked inner product Σ_{i∈S} qᵢdᵢ in f64, ascending index order.
pub fn masked_score(q: &[f32], d: &[f32], mask: &SelectionMask) -> Result<f64> {
    check_dims(q, d, mask)?;
    let mut acc = 0.0_f64;
    for i in 0..q.len() {
        if mask.is_retained(i) {
            acc += q[i] as f64 * d[i] as f64;
        }
    }
    Ok(acc)
}

fn full_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

fn score_one(q: &[f32], d: &[f32], mask: &SelectionMask, sim: Similarity, q_norm: f64) -> Result<f64> {
    let raw = masked_score(q, d, mask)?;
    match sim {
        Similarity::DotProduct => Ok(raw),
        Similarity::Cosine => {
            let denom = q_norm * full_norm(d);
            if denom == 0.0 {
                Ok(0.0)
            } else {
                Ok(raw / denom)
            }
        }
    }
}

/// Scores every corpus document and returns the `top_n` best, descending;
/// score ties break by doc id ascending. Deterministic for fixed inputs.
pub fn rank_all(
    query_id: &str,
    q: &[f32],
    corpus: &EmbeddingMatrix,
    mask: &SelectionMask,
    config: ScoringConfig,
    tag: &str,
) -> Result<RunRanking> {
    if corpus.is_empty() {
        return Err(Error::invalid("corpus must be non-empty"));
    }
    if config.top_n == 0 {
        return Err(Error::invalid("top_n must be at least 1"));
    }
    let q_norm = full_norm(q);
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(corpus.len());
    for row in 0..corpus.len() {
        let s = score_one(q, corpus.row(row), mask, config.similarity, q_norm)?;
        scored.push((row, s));
    }
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then_with(|| corpus.id(a.0).cmp(corpus.id(b.0)))
    });
    scored.truncate(config.top_n);
    let entries = scored
        .into_iter()
        .enumerate()
        .map(|(i, (row, score))| RunEntry {
            doc_id: corpus.id(row).to_owned(),
            score,
            rank: i + 1,
        })
        .collect();
    RunRanking::new(query_id, entries, tag)
}

/// The M highest full-dimension dot-product documents, in rank order,
/// as (id, f64 vector) pairs.
pub fn first_stage_top_m(
    q: &[f32],
    corpus: &EmbeddingMatrix,
    m: usize,
) -> Result<Vec<(String, Vec<f64>)>> {
    if m == 0 {
        return Err(Error::invalid("M must be at least 1"));
    }
    if m > corpus.len() {
        return Err(Error::invalid(format!(
            "M = {m} exceeds corpus size {}",
            corpus.len()
        )));
    }
    let mask = SelectionMask::full(q.len(), "first-stage");
    let config = ScoringConfig::new(Similarity::DotProduct, m)?;
    let ranking = rank_all("", q, corpus, &mask, config, "first-stage")?;
    ranking
        .entries
        .iter()
        .map(|e| {
            let row = corpus
                .get(&e.doc_id)
                .ok_or_else(|| Error::UnknownDocId(e.doc_id.clone()))?;
            Ok((e.doc_id.clone(), widen(row)))
        })
        .collect()
}

/// Embeddings of a run's top-M documents, in run-rank order, for feeding
/// an externally produced first stage into the kernel estimators.
pub fn pseudo_relevant_from_run(
    run: &RunRanking,
    corpus: &EmbeddingMatrix,
    m: usize,
) -> Result<Vec<(String, Vec<f64>)>> {
    if m == 0 {
        return Err(Error::invalid("M must be at least 1"));
    }
    if m > run.entries.len() {
        return Err(Error::invalid(format!(
            "M = {m} exceeds run length {} for query {}",
            run.entries.len(),
            run.query_id
        )));
    }
    run.entries[..m]
        .iter()
        .map(|e| {
            let row = corpus
                .get(&e.doc_id)
                .ok_or_else(|| Error::UnknownDocId(e.doc_id.clone()))?;
            Ok((e.doc_id.clone(), widen(row)))
        })
        .collect()
}

/// f32 → f64 widening (exact).
pub fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}
