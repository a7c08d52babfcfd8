//! Retrieval metrics and retained-fraction summaries.
//!
//! nDCG@k uses gain 2^grade − 1 with a log₂(rank+1) discount and an ideal
//! ranking built from all judged documents; AP uses binary relevance
//! (grade ≥ 1) with the query's total relevant count as denominator.
//! Queries with no relevant documents score 0 and still count in means.

pub mod stats;

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::selection::SelectionMask;
use crate::store::{Qrels, RunRanking};

/// Metric identifier used across reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// nDCG at the given cutoff.
    NdcgAt(usize),
    /// Average precision over the full ranking.
    Ap,
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Metric::NdcgAt(k) => write!(f, "ndcg@{k}"),
            Metric::Ap => write!(f, "ap"),
        }
    }
}

/// Per-query metric values plus their arithmetic mean.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub metric_name: String,
    pub per_query: BTreeMap<String, f64>,
    pub mean: f64,
}

impl MetricReport {
    fn new(metric_name: String, per_query: BTreeMap<String, f64>) -> Self {
        let mean = if per_query.is_empty() {
            0.0
        } else {
            per_query.values().sum::<f64>() / per_query.len() as f64
        };
        Self {
            metric_name,
            per_query,
            mean,
        }
    }

    /// Per-query values in the order of `query_ids`; missing ids error.
    pub fn values_for(&self, query_ids: &[String]) -> Result<Vec<f64>> {
        query_ids
            .iter()
            .map(|id| {
                self.per_query
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("no metric value for query {id:?}")))
            })
            .collect()
    }
}

/// Discounted cumulative gain of a grade sequence truncated at k.
fn dcg(grades: &[u32], k: usize) -> f64 {
    grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| ((1u64 << g) - 1) as f64 / ((i + 2) as f64).log2())
        .sum()
}

/// nDCG@k of one ranking; 0 when the query has no relevant documents.
pub fn ndcg_at_k(run: &RunRanking, qrels: &Qrels, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("nDCG cutoff must be at least 1"));
    }
    let mut ideal: Vec<u32> = qrels
        .judged(&run.query_id)
        .map(|(_, g)| g)
        .filter(|&g| g >= 1)
        .collect();
    if ideal.is_empty() {
        return Ok(0.0);
    }
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let got: Vec<u32> = run
        .entries
        .iter()
        .map(|e| qrels.grade(&run.query_id, &e.doc_id))
        .collect();
    Ok(dcg(&got, k) / dcg(&ideal, k))
}

/// Average precision of one ranking under binary relevance (grade ≥ 1);
/// 0 when the query has no relevant documents.
pub fn average_precision(run: &RunRanking, qrels: &Qrels) -> Result<f64> {
    let total_relevant = qrels.relevant_count(&run.query_id);
    if total_relevant == 0 {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, e) in run.entries.iter().enumerate() {
        if qrels.grade(&run.query_id, &e.doc_id) >= 1 {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / total_relevant as f64)
}

/// Evaluates every ranking under one metric.
pub fn evaluate(rankings: &[RunRanking], qrels: &Qrels, metric: Metric) -> Result<MetricReport> {
    let mut per_query = BTreeMap::new();
    for run in rankings {
        let value = match metric {
            Metric::NdcgAt(k) => ndcg_at_k(run, qrels, k)?,
            Metric::Ap => average_precision(run, qrels)?,
        };
        per_query.insert(run.query_id.clone(), value);
    }
    Ok(MetricReport::new(metric.to_string(), per_query))
}

/// Five-number-plus-mean summary of per-query retained fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct RetainedFractionSummary {
    pub fractions: Vec<f64>,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

/// Quantile with linear interpolation between order statistics.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < n {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

/// Summarizes the per-query retained fraction of a mask collection.
pub fn retained_fraction_summary(masks: &[SelectionMask]) -> Result<RetainedFractionSummary> {
    if masks.is_empty() {
        return Err(Error::invalid("mask list must be non-empty"));
    }
    let fractions: Vec<f64> = masks.iter().map(SelectionMask::retained_fraction).collect();
    let mut sorted = fractions.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    Ok(RetainedFractionSummary {
        min: sorted[0],
        q1: quantile(&sorted, 0.25),
        median: quantile(&sorted, 0.5),
        q3: quantile(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
        mean,
        fractions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{parse_qrels, RunEntry};

    fn ranking(qid: &str, docs: &[&str]) -> RunRanking {
        let entries = docs
            .iter()
            .enumerate()
            .map(|(i, d)| RunEntry {
                doc_id: (*d).to_owned(),
                score: (docs.len() - i) as f64,
                rank: i + 1,
            })
            .collect();
        RunRanking::new(qid, entries, "t").unwrap()
    }

    #[test]
    fn ndcg_ideal_ranking_is_one() {
        let qrels = parse_qrels("q 0 a 3\nq 0 b 2\nq 0 c 0\n").unwrap();
        let run = ranking("q", &["a", "b", "c"]);
        assert_eq!(ndcg_at_k(&run, &qrels, 10).unwrap(), 1.0);
    }

    #[test]
    fn ndcg_single_swap_hand_value() {
        // Grades retrieved as [0, 3] against ideal [3]: DCG = 7/log₂3,
        // IDCG = 7, ratio = 1/log₂3.
        let qrels = parse_qrels("q 0 good 3\n").unwrap();
        let run = ranking("q", &["bad", "good"]);
        let v = ndcg_at_k(&run, &qrels, 10).unwrap();
        assert!((v - 0.630_929_753_571_457_5).abs() < 1e-5);
    }

    #[test]
    fn ndcg_no_relevant_is_zero() {
        let qrels = parse_qrels("q 0 a 0\n").unwrap();
        let run = ranking("q", &["a", "b"]);
        assert_eq!(ndcg_at_k(&run, &qrels, 10).unwrap(), 0.0);
        // A query absent from the qrels entirely also scores 0.
        let run2 = ranking("missing", &["a"]);
        assert_eq!(ndcg_at_k(&run2, &qrels, 10).unwrap(), 0.0);
    }

    #[test]
    fn ndcg_ignores_permutations_below_cutoff() {
        let qrels = parse_qrels("q 0 a 2\nq 0 b 1\nq 0 c 1\n").unwrap();
        let r1 = ranking("q", &["a", "b", "x", "y", "c"]);
        let r2 = ranking("q", &["a", "b", "y", "x", "c"]);
        let v1 = ndcg_at_k(&r1, &qrels, 2).unwrap();
        let v2 = ndcg_at_k(&r2, &qrels, 2).unwrap();
        assert_eq!(v1, v2);
    }

    #[test]
    fn ap_hand_value() {
        // Relevant {dA, dB}, ranking [dA, dX, dB] → (1 + 2/3)/2.
        let qrels = parse_qrels("q 0 dA 1\nq 0 dB 1\n").unwrap();
        let run = ranking("q", &["dA", "dX", "dB"]);
        let v = average_precision(&run, &qrels).unwrap();
        assert!((v - 0.833_33).abs() < 1e-5);
    }

    #[test]
    fn ap_all_relevant_at_top_is_one() {
        let qrels = parse_qrels("q 0 a 2\nq 0 b 1\n").unwrap();
        let run = ranking("q", &["a", "b", "c"]);
        assert_eq!(average_precision(&run, &qrels).unwrap(), 1.0);
    }

    #[test]
    fn ap_none_retrieved_is_zero() {
        let qrels = parse_qrels("q 0 z 1\n").unwrap();
        let run = ranking("q", &["a", "b"]);
        assert_eq!(average_precision(&run, &qrels).unwrap(), 0.0);
    }

    #[test]
    fn ap_counts_unretrieved_relevant_in_denominator() {
        // Two relevant docs, only one retrieved, at rank 1 → 1/2.
        let qrels = parse_qrels("q 0 a 1\nq 0 z 1\n").unwrap();
        let run = ranking("q", &["a", "b"]);
        assert!((average_precision(&run, &qrels).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn evaluate_means_over_queries() {
        let qrels = parse_qrels("q1 0 a 1\nq2 0 zz 1\n").unwrap();
        let runs = vec![ranking("q1", &["a"]), ranking("q2", &["b"])];
        let rep = evaluate(&runs, &qrels, Metric::Ap).unwrap();
        assert_eq!(rep.per_query["q1"], 1.0);
        assert_eq!(rep.per_query["q2"], 0.0);
        assert!((rep.mean - 0.5).abs() < 1e-12);
        assert_eq!(rep.metric_name, "ap");
    }

    #[test]
    fn retained_summary_two_masks() {
        let m1 = SelectionMask::from_indices(768, &(0..384).collect::<Vec<_>>(), "t").unwrap();
        let m2 = SelectionMask::full(768, "t");
        let s = retained_fraction_summary(&[m1, m2]).unwrap();
        assert_eq!(s.fractions, vec![0.5, 1.0]);
        assert!((s.mean - 0.75).abs() < 1e-12);
        assert_eq!(s.min, 0.5);
        assert_eq!(s.max, 1.0);
        assert!((s.median - 0.75).abs() < 1e-12);
    }

    #[test]
    fn retained_summary_single_mask_collapses() {
        let m = SelectionMask::from_indices(768, &(0..460).collect::<Vec<_>>(), "t").unwrap();
        let s = retained_fraction_summary(&[m]).unwrap();
        for v in [s.min, s.q1, s.median, s.q3, s.max, s.mean] {
            assert!((v - 0.598_96).abs() < 1e-5);
        }
    }

    #[test]
    fn retained_summary_all_full() {
        let masks = vec![SelectionMask::full(16, "t"); 5];
        let s = retained_fraction_summary(&masks).unwrap();
        for v in [s.min, s.q1, s.median, s.q3, s.max, s.mean] {
            assert_eq!(v, 1.0);
        }
    }
}
