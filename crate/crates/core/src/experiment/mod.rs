//! End-to-end retrieval experiments driven by a JSON config.
//!
//! For every query: gather pseudo-relevant documents (internal first
//! stage or an external run file), estimate dimension importance, apply
//! each selection policy, re-rank the corpus under the policy's mask,
//! and score the result against qrels. Emits TREC runs, per-query and
//! mean metrics, paired significance tests against the risk-threshold
//! policy, and retained-fraction statistics, all into one output
//! directory alongside a config snapshot.

pub mod report;
pub mod validate;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dime::{kernel_dime, kernel_weights, single_doc_dime, DimeScores, WeightScheme};
use crate::engine::{
    first_stage_top_m, pseudo_relevant_from_run, rank_all, widen, ScoringConfig, Similarity,
};
use crate::error::{Error, Result};
use crate::eval::stats::{holm_bonferroni, routed_test, SigTestResult};
use crate::eval::{evaluate, retained_fraction_summary, Metric, MetricReport};
use crate::selection::{rdime_select, topk_select, SelectionMask, SelectionPolicy};
use crate::store::{load_embeddings, load_qrels, load_run, write_run, EmbeddingMatrix, RunRanking};

fn default_metric_cutoff() -> usize {
    10
}

fn default_top_n() -> usize {
    1000
}

fn default_alpha() -> f64 {
    0.05
}

fn default_temperature() -> f64 {
    1.0
}

/// Importance estimator named in the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EstimatorConfig {
    /// q ⊙ d against one externally supplied document per query
    /// (`synthetic_docs` must map every query id to an embedding).
    SingleDoc,
    /// Uniform weights over the top-M pseudo-relevant documents.
    Uniform,
    /// Softmax of query–document dot products.
    Softmax {
        #[serde(default = "default_temperature")]
        temperature: f64,
    },
    /// σᵢ⁻²-proportional weights from externally supplied noise scales.
    InverseVariance { sigmas: Vec<f64> },
    /// exp(−γ‖q−d‖²) kernel.
    Rbf { gamma: f64 },
    /// tanh(a·⟨q,d⟩ + c) kernel, floored before normalization.
    Sigmoid { a: f64, c: f64 },
}

impl EstimatorConfig {
    pub fn label(&self) -> &'static str {
        match self {
            Self::SingleDoc => "single-doc",
            Self::Uniform => "uniform",
            Self::Softmax { .. } => "softmax",
            Self::InverseVariance { .. } => "inverse-variance",
            Self::Rbf { .. } => "rbf",
            Self::Sigmoid { .. } => "sigmoid",
        }
    }

    fn scheme(&self) -> Option<WeightScheme> {
        match self {
            Self::SingleDoc => None,
            Self::Uniform => Some(WeightScheme::Uniform),
            Self::Softmax { temperature } => Some(WeightScheme::SoftmaxScores {
                temperature: *temperature,
            }),
            Self::InverseVariance { sigmas } => Some(WeightScheme::InverseVariance {
                sigmas: sigmas.clone(),
            }),
            Self::Rbf { gamma } => Some(WeightScheme::Rbf { gamma: *gamma }),
            Self::Sigmoid { a, c } => Some(WeightScheme::Sigmoid { a: *a, c: *c }),
        }
    }
}

/// Experiment description parsed from JSON; unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub queries: PathBuf,
    pub corpus: PathBuf,
    pub qrels: PathBuf,
    /// Externally produced first-stage TREC run; when absent the engine
    /// runs its own full-dimension first stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_stage_run: Option<PathBuf>,
    /// Per-query external document embeddings for the single-doc
    /// estimator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic_docs: Option<PathBuf>,
    pub estimator: EstimatorConfig,
    /// Pseudo-relevant documents per query.
    pub m: usize,
    /// Policy names: `baseline`, `topk:<k>`, `topk-abs:<k>`, `rdime`.
    pub policies: Vec<String>,
    #[serde(default = "default_metric_cutoff")]
    pub metric_cutoff: usize,
    #[serde(default = "default_top_n")]
    pub top_n: usize,
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Free-form labels carried into results.csv for report grouping.
    #[serde(default)]
    pub model_tag: String,
    #[serde(default)]
    pub collection_tag: String,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Parses policy names and checks every invariant that does not
    /// require opening the referenced files.
    pub fn parsed_policies(&self) -> Result<Vec<SelectionPolicy>> {
        if self.policies.is_empty() {
            return Err(Error::invalid("policies must be non-empty"));
        }
        let policies: Vec<SelectionPolicy> = self
            .policies
            .iter()
            .map(|s| SelectionPolicy::parse(s))
            .collect::<Result<_>>()?;
        if policies.contains(&SelectionPolicy::Oracle) {
            return Err(Error::invalid(
                "the oracle policy needs ground-truth signal parameters; \
                 it is available in the synthetic lab only",
            ));
        }
        Ok(policies)
    }

    pub fn validate(&self) -> Result<()> {
        self.parsed_policies()?;
        if self.m == 0 {
            return Err(Error::invalid("m must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.metric_cutoff == 0 {
            return Err(Error::invalid("metric_cutoff must be at least 1"));
        }
        if self.top_n == 0 {
            return Err(Error::invalid("top_n must be at least 1"));
        }
        if self.estimator == EstimatorConfig::SingleDoc && self.synthetic_docs.is_none() {
            return Err(Error::invalid(
                "the single-doc estimator needs a synthetic_docs embedding file",
            ));
        }
        for (name, path, required) in [
            ("queries", Some(&self.queries), true),
            ("corpus", Some(&self.corpus), true),
            ("qrels", Some(&self.qrels), true),
            ("first_stage_run", self.first_stage_run.as_ref(), false),
            ("synthetic_docs", self.synthetic_docs.as_ref(), false),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(Error::invalid(format!(
                        "{name} file {} does not exist",
                        p.display()
                    )));
                }
            } else if required {
                unreachable!("required paths are always present");
            }
        }
        Ok(())
    }
}

/// Everything produced for one policy.
#[derive(Debug, Clone)]
pub struct PolicyOutcome {
    pub label: String,
    pub rankings: Vec<RunRanking>,
    pub masks: Vec<SelectionMask>,
    /// [nDCG@cutoff, AP].
    pub metrics: Vec<MetricReport>,
    pub mean_retained: f64,
}

/// In-memory result of a full experiment, mirrored on disk in `out_dir`.
#[derive(Debug)]
pub struct ExperimentOutput {
    pub policies: Vec<PolicyOutcome>,
    pub significance: Vec<(String, SigTestResult)>,
    pub out_dir: PathBuf,
}

fn mask_for(
    policy: &SelectionPolicy,
    q64: &[f64],
    importance: &DimeScores,
) -> Result<SelectionMask> {
    match policy {
        SelectionPolicy::Baseline => Ok(SelectionMask::full(q64.len(), "baseline")),
        SelectionPolicy::TopK { k, absolute } => {
            topk_select(importance.as_slice(), *k, *absolute)
        }
        SelectionPolicy::Rdime => rdime_select(q64, importance.as_slice()),
        SelectionPolicy::Oracle => Err(Error::invalid(
            "the oracle policy needs ground-truth signal parameters",
        )),
    }
}

struct QueryOutcome {
    masks: Vec<SelectionMask>,
    rankings: Vec<RunRanking>,
}

fn run_query(
    query_idx: usize,
    queries: &EmbeddingMatrix,
    corpus: &EmbeddingMatrix,
    config: &ExperimentConfig,
    policies: &[SelectionPolicy],
    first_stage: Option<&HashMap<String, RunRanking>>,
    synthetic_docs: Option<&EmbeddingMatrix>,
) -> Result<QueryOutcome> {
    let query_id = queries.id(query_idx);
    let q32 = queries.row(query_idx);
    let q64 = widen(q32);

    let importance = match &config.estimator {
        EstimatorConfig::SingleDoc => {
            let docs = synthetic_docs.expect("validated: synthetic_docs present");
            let row = docs
                .get(query_id)
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "synthetic_docs has no embedding for query {query_id:?}"
                    ))
                })?;
            single_doc_dime(&q64, &widen(row))?
        }
        other => {
            let scheme = other.scheme().expect("non-single-doc estimator");
            let docs: Vec<(String, Vec<f64>)> = match first_stage {
                Some(runs) => {
                    let run = runs.get(query_id).ok_or_else(|| {
                        Error::invalid(format!(
                            "first-stage run has no entries for query {query_id:?}"
                        ))
                    })?;
                    pseudo_relevant_from_run(run, corpus, config.m)?
                }
                None => first_stage_top_m(q32, corpus, config.m)?,
            };
            let vectors: Vec<Vec<f64>> = docs.into_iter().map(|(_, v)| v).collect();
            let weights = kernel_weights(&q64, &vectors, &scheme)?;
            kernel_dime(&q64, &vectors, &weights)?
        }
    }
    .with_query_id(query_id)
    .with_tag(config.estimator.label());

    let scoring = ScoringConfig::new(Similarity::DotProduct, config.top_n)?;
    let mut masks = Vec::with_capacity(policies.len());
    let mut rankings = Vec::with_capacity(policies.len());
    for (policy, label) in policies.iter().zip(&config.policies) {
        let mask = mask_for(policy, &q64, &importance)?;
        let ranking = rank_all(query_id, q32, corpus, &mask, scoring, label)?;
        masks.push(mask);
        rankings.push(ranking);
    }
    Ok(QueryOutcome { masks, rankings })
}

/// File-name-safe form of a policy label.
pub fn sanitize_label(label: &str) -> String {
    label.replace([':', '/'], "-")
}

/// Runs the configured experiment and writes all artifacts to `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutput> {
    config.validate()?;
    let policies = config.parsed_policies()?;

    let queries = load_embeddings(&config.queries)?;
    let corpus = load_embeddings(&config.corpus)?;
    if queries.dim() != corpus.dim() {
        return Err(Error::DimMismatch {
            left: queries.dim(),
            right: corpus.dim(),
        });
    }
    let qrels = load_qrels(&config.qrels)?;
    let first_stage: Option<HashMap<String, RunRanking>> = match &config.first_stage_run {
        Some(path) => Some(
            load_run(path)?
                .into_iter()
                .map(|r| (r.query_id.clone(), r))
                .collect(),
        ),
        None => None,
    };
    let synthetic_docs = match &config.synthetic_docs {
        Some(path) => {
            let m = load_embeddings(path)?;
            if m.dim() != queries.dim() {
                return Err(Error::DimMismatch {
                    left: queries.dim(),
                    right: m.dim(),
                });
            }
            Some(m)
        }
        None => None,
    };

    let per_query: Vec<QueryOutcome> = (0..queries.len())
        .into_par_iter()
        .map(|idx| {
            run_query(
                idx,
                &queries,
                &corpus,
                config,
                &policies,
                first_stage.as_ref(),
                synthetic_docs.as_ref(),
            )
        })
        .collect::<Result<_>>()?;

    // Transpose query-major results into policy-major outcomes.
    let metrics = [Metric::NdcgAt(config.metric_cutoff), Metric::Ap];
    let mut outcomes = Vec::with_capacity(policies.len());
    for (pi, label) in config.policies.iter().enumerate() {
        let rankings: Vec<RunRanking> =
            per_query.iter().map(|q| q.rankings[pi].clone()).collect();
        let masks: Vec<SelectionMask> = per_query.iter().map(|q| q.masks[pi].clone()).collect();
        let reports: Vec<MetricReport> = metrics
            .iter()
            .map(|m| evaluate(&rankings, &qrels, *m))
            .collect::<Result<_>>()?;
        let mean_retained = masks
            .iter()
            .map(SelectionMask::retained_fraction)
            .sum::<f64>()
            / masks.len().max(1) as f64;
        outcomes.push(PolicyOutcome {
            label: label.clone(),
            rankings,
            masks,
            metrics: reports,
            mean_retained,
        });
    }

    let significance = significance_tests(&policies, &outcomes, config.alpha)?;
    write_artifacts(config, &outcomes, &significance, out_dir)?;
    Ok(ExperimentOutput {
        policies: outcomes,
        significance,
        out_dir: out_dir.to_path_buf(),
    })
}

/// Paired tests of the risk-threshold policy against every Top-k policy
/// and against the best Top-k, Holm-corrected within each metric.
fn significance_tests(
    policies: &[SelectionPolicy],
    outcomes: &[PolicyOutcome],
    alpha: f64,
) -> Result<Vec<(String, SigTestResult)>> {
    let rdime_idx = match policies.iter().position(|p| *p == SelectionPolicy::Rdime) {
        Some(i) => i,
        None => return Ok(Vec::new()),
    };
    let topk_idx: Vec<usize> = policies
        .iter()
        .enumerate()
        .filter_map(|(i, p)| matches!(p, SelectionPolicy::TopK { .. }).then_some(i))
        .collect();
    if topk_idx.is_empty() {
        return Ok(Vec::new());
    }

    let query_ids: Vec<String> = outcomes[rdime_idx].metrics[0]
        .per_query
        .keys()
        .cloned()
        .collect();
    let mut all = Vec::new();
    for metric_slot in 0..outcomes[rdime_idx].metrics.len() {
        let metric_name = outcomes[rdime_idx].metrics[metric_slot].metric_name.clone();
        let x = outcomes[rdime_idx].metrics[metric_slot].values_for(&query_ids)?;
        let mut family: Vec<(String, SigTestResult)> = Vec::new();
        for &ti in &topk_idx {
            let y = outcomes[ti].metrics[metric_slot].values_for(&query_ids)?;
            let result = routed_test(&x, &y)?;
            family.push((
                format!("{metric_name}:rdime-vs-{}", outcomes[ti].label),
                result,
            ));
        }
        let best = topk_idx
            .iter()
            .copied()
            .max_by(|&a, &b| {
                outcomes[a].metrics[metric_slot]
                    .mean
                    .partial_cmp(&outcomes[b].metrics[metric_slot].mean)
                    .unwrap()
            })
            .unwrap();
        let y = outcomes[best].metrics[metric_slot].values_for(&query_ids)?;
        family.push((
            format!(
                "{metric_name}:rdime-vs-best-topk({})",
                outcomes[best].label
            ),
            routed_test(&x, &y)?,
        ));

        let ps: Vec<f64> = family.iter().map(|(_, r)| r.p_value).collect();
        let rejects = holm_bonferroni(&ps, alpha)?;
        for ((_, r), reject) in family.iter_mut().zip(rejects) {
            r.corrected_reject = reject;
        }
        all.extend(family);
    }
    Ok(all)
}

fn create_out_dir(out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_artifacts(
    config: &ExperimentConfig,
    outcomes: &[PolicyOutcome],
    significance: &[(String, SigTestResult)],
    out_dir: &Path,
) -> Result<()> {
    create_out_dir(out_dir)?;

    let snapshot = serde_json::to_string_pretty(config)
        .map_err(|e| Error::invalid(format!("config snapshot: {e}")))?;
    write_text(&out_dir.join("config.json"), &(snapshot + "\n"))?;

    for outcome in outcomes {
        let name = format!("run_{}.txt", sanitize_label(&outcome.label));
        write_run(out_dir.join(name), &outcome.rankings, &outcome.label)?;
    }

    let mut metrics_csv = String::from("policy,metric,query_id,value\n");
    for outcome in outcomes {
        for report in &outcome.metrics {
            for (qid, value) in &report.per_query {
                metrics_csv.push_str(&format!(
                    "{},{},{},{}\n",
                    outcome.label, report.metric_name, qid, value
                ));
            }
            metrics_csv.push_str(&format!(
                "{},{},mean,{}\n",
                outcome.label, report.metric_name, report.mean
            ));
        }
    }
    write_text(&out_dir.join("metrics.csv"), &metrics_csv)?;

    let mut sig_csv = String::from("comparison,test,statistic,p,reject\n");
    for (name, r) in significance {
        sig_csv.push_str(&format!(
            "{},{},{},{},{}\n",
            name, r.test_name, r.statistic, r.p_value, r.corrected_reject
        ));
    }
    write_text(&out_dir.join("significance.csv"), &sig_csv)?;

    let mut masks_csv = String::from("policy,query_id,dim,retained,fraction,tag\n");
    for outcome in outcomes {
        for (mask, ranking) in outcome.masks.iter().zip(&outcome.rankings) {
            masks_csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                outcome.label,
                ranking.query_id,
                mask.dim(),
                mask.retained_count(),
                mask.retained_fraction(),
                mask.tag()
            ));
        }
    }
    write_text(&out_dir.join("masks.csv"), &masks_csv)?;

    let mut results_csv =
        String::from("model,estimator,collection,policy,metric,mean,mean_retained_fraction\n");
    for outcome in outcomes {
        for report in &outcome.metrics {
            results_csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                config.model_tag,
                config.estimator.label(),
                config.collection_tag,
                outcome.label,
                report.metric_name,
                report.mean,
                outcome.mean_retained
            ));
        }
    }
    write_text(&out_dir.join("results.csv"), &results_csv)?;

    let mut retained_csv = String::from("policy,min,q1,median,q3,max,mean\n");
    for outcome in outcomes {
        let s = retained_fraction_summary(&outcome.masks)?;
        retained_csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            outcome.label, s.min, s.q1, s.median, s.q3, s.max, s.mean
        ));
    }
    write_text(&out_dir.join("retained_summary.csv"), &retained_csv)?;

    Ok(())
}
