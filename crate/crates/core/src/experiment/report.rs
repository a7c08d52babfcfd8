//! Aggregates `results.csv` files from one or more experiment
//! directories into per-(model, collection) summary tables with the
//! risk-threshold policy's relative improvement over the best Top-k.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::selection::SelectionPolicy;

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub model: String,
    pub estimator: String,
    pub collection: String,
    pub policy: String,
    pub metric: String,
    pub mean: f64,
    pub mean_retained_fraction: f64,
}

/// Rendered report: an aligned text table plus its CSV twin.
#[derive(Debug, Clone)]
pub struct ReportOutput {
    pub table: String,
    pub csv: String,
    pub rows: usize,
}

fn parse_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::parse(
                idx + 1,
                format!("expected 7 comma-separated fields, found {}", fields.len()),
            ));
        }
        let mean: f64 = fields[5]
            .parse()
            .map_err(|_| Error::parse(idx + 1, format!("bad mean {:?}", fields[5])))?;
        let retained: f64 = fields[6]
            .parse()
            .map_err(|_| Error::parse(idx + 1, format!("bad retained fraction {:?}", fields[6])))?;
        rows.push(ResultRow {
            model: fields[0].to_string(),
            estimator: fields[1].to_string(),
            collection: fields[2].to_string(),
            policy: fields[3].to_string(),
            metric: fields[4].to_string(),
            mean,
            mean_retained_fraction: retained,
        });
    }
    Ok(rows)
}

/// `results.csv` in the directory itself, then in each immediate
/// subdirectory, in name order.
fn discover_results_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let own = dir.join("results.csv");
    if own.is_file() {
        files.push(own);
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    for sub in subdirs {
        let candidate = sub.join("results.csv");
        if candidate.is_file() {
            files.push(candidate);
        }
    }
    Ok(files)
}

fn policy_sort_key(policy: &str) -> (u8, String) {
    match SelectionPolicy::parse(policy) {
        Ok(SelectionPolicy::Baseline) => (0, String::new()),
        Ok(SelectionPolicy::TopK { .. }) => (1, policy.to_string()),
        Ok(SelectionPolicy::Rdime) => (2, String::new()),
        _ => (3, policy.to_string()),
    }
}

fn is_topk(policy: &str) -> bool {
    matches!(SelectionPolicy::parse(policy), Ok(SelectionPolicy::TopK { .. }))
}

fn is_rdime(policy: &str) -> bool {
    matches!(SelectionPolicy::parse(policy), Ok(SelectionPolicy::Rdime))
}

type GroupKey = (String, String);
type CellKey = (String, String);

/// Builds the summary from `results.csv` files under `dir` and writes
/// `report.csv` next to them.
pub fn run_report(dir: &Path) -> Result<ReportOutput> {
    let files = discover_results_files(dir)?;
    if files.is_empty() {
        return Err(Error::invalid(format!(
            "no results.csv found under {}",
            dir.display()
        )));
    }
    let mut rows = Vec::new();
    for file in &files {
        rows.extend(parse_results_csv(file)?);
    }
    if rows.is_empty() {
        return Err(Error::invalid("results files contain no data rows"));
    }
    render(&rows, dir)
}

fn render(rows: &[ResultRow], dir: &Path) -> Result<ReportOutput> {
    // (model, collection) -> (estimator, metric) -> policy -> row
    let mut groups: BTreeMap<GroupKey, BTreeMap<CellKey, Vec<&ResultRow>>> = BTreeMap::new();
    for row in rows {
        let cell = groups
            .entry((row.model.clone(), row.collection.clone()))
            .or_default()
            .entry((row.estimator.clone(), row.metric.clone()))
            .or_default();
        if cell.iter().any(|r| r.policy == row.policy) {
            return Err(Error::invalid(format!(
                "duplicate results row: model {:?} collection {:?} estimator {:?} \
                 metric {:?} policy {:?}",
                row.model, row.collection, row.estimator, row.metric, row.policy
            )));
        }
        cell.push(row);
    }

    let mut csv =
        String::from("model,collection,estimator,metric,policy,mean,mean_retained_fraction,delta_pct_vs_best_topk\n");
    let mut table = String::new();
    let mut emitted = 0usize;

    for ((model, collection), cells) in &groups {
        table.push_str(&format!("model={model} collection={collection}\n"));
        let mut lines: Vec<[String; 6]> = vec![[
            "estimator".into(),
            "metric".into(),
            "policy".into(),
            "mean".into(),
            "retained".into(),
            "d_pct".into(),
        ]];
        for ((estimator, metric), cell) in cells {
            let mut cell = cell.clone();
            cell.sort_by_key(|r| policy_sort_key(&r.policy));

            let best_topk = cell
                .iter()
                .filter(|r| is_topk(&r.policy))
                .cloned()
                .max_by(|a, b| a.mean.partial_cmp(&b.mean).unwrap());
            let rdime = cell.iter().find(|r| is_rdime(&r.policy)).cloned();
            let best_topk = best_topk.ok_or_else(|| {
                Error::invalid(format!(
                    "no topk:<k> rows for model {model:?} collection {collection:?} \
                     estimator {estimator:?} metric {metric:?}; cannot compute the delta column"
                ))
            })?;
            let rdime = rdime.ok_or_else(|| {
                Error::invalid(format!(
                    "no rdime row for model {model:?} collection {collection:?} \
                     estimator {estimator:?} metric {metric:?}; cannot compute the delta column"
                ))
            })?;
            let delta = 100.0 * (rdime.mean - best_topk.mean) / best_topk.mean;

            for row in &cell {
                let delta_field = if is_rdime(&row.policy) {
                    format!("{delta:.2}")
                } else {
                    String::new()
                };
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    model,
                    collection,
                    estimator,
                    metric,
                    row.policy,
                    row.mean,
                    row.mean_retained_fraction,
                    delta_field
                ));
                lines.push([
                    estimator.clone(),
                    metric.clone(),
                    row.policy.clone(),
                    format!("{:.4}", row.mean),
                    format!("({:.2})", row.mean_retained_fraction),
                    delta_field,
                ]);
                emitted += 1;
            }
        }
        table.push_str(&align(&lines));
        table.push('\n');
    }

    let csv_path = dir.join("report.csv");
    fs::write(&csv_path, &csv).map_err(|e| Error::io(&csv_path, e))?;
    Ok(ReportOutput {
        table,
        csv,
        rows: emitted,
    })
}

fn align(lines: &[[String; 6]]) -> String {
    let mut widths = [0usize; 6];
    for line in lines {
        for (w, field) in widths.iter_mut().zip(line) {
            *w = (*w).max(field.len());
        }
    }
    let mut out = String::new();
    for line in lines {
        let mut rendered: Vec<String> = Vec::with_capacity(6);
        for (field, w) in line.iter().zip(widths) {
            rendered.push(format!("{field:<w$}"));
        }
        out.push_str(rendered.join("  ").trim_end());
        out.push('\n');
    }
    out
}
