//! Integration coverage for the experiment pipeline, its CLI surface,
//! and the report aggregator.

mod common;

use std::fs;
use std::path::Path;
use std::process::Command;

use rdime_core::error::Error;
use rdime_core::eval::{evaluate, Metric};
use rdime_core::experiment::report::run_report;
use rdime_core::experiment::{run_experiment, sanitize_label, ExperimentConfig};
use rdime_core::store::{load_qrels, load_run, write_run, RunEntry, RunRanking};

use common::{build_fixture, FixtureSpec};

fn small_fixture(dir: &Path) -> common::Fixture {
    build_fixture(
        &FixtureSpec {
            p: 16,
            n_queries: 6,
            docs_per_query: 3,
            noise_docs: 80,
            strong_dims: 8,
            strong_magnitude: 1.0,
            weak_magnitude: 0.05,
            epsilon: 0.3,
            sigma: 0.3,
            seed: 1234,
        },
        dir,
    )
}

fn config_json(fixture: &common::Fixture, policies: &[&str]) -> serde_json::Value {
    serde_json::json!({
        "queries": fixture.queries,
        "corpus": fixture.corpus,
        "qrels": fixture.qrels,
        "estimator": {"scheme": "uniform"},
        "m": 2,
        "policies": policies,
        "metric_cutoff": 5,
        "top_n": 50,
        "seed": 3,
        "model_tag": "toy",
        "collection_tag": "unit"
    })
}

fn parse_config(value: &serde_json::Value) -> ExperimentConfig {
    ExperimentConfig::from_json(&value.to_string()).unwrap()
}

#[test]
fn experiment_artifacts_reproduce_reported_means() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = small_fixture(dir.path());
    let config = parse_config(&config_json(
        &fixture,
        &["baseline", "topk:0.5", "topk-abs:0.5", "rdime"],
    ));
    let out = dir.path().join("out");
    let output = run_experiment(&config, &out).unwrap();

    let qrels = load_qrels(&fixture.qrels).unwrap();
    let metrics_csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    for outcome in &output.policies {
        let path = out.join(format!("run_{}.txt", sanitize_label(&outcome.label)));
        let reparsed = load_run(&path).unwrap();
        for (metric, slot) in [(Metric::NdcgAt(5), 0), (Metric::Ap, 1)] {
            let rescored = evaluate(&reparsed, &qrels, metric).unwrap();
            let reported = outcome.metrics[slot].mean;
            assert!(
                (rescored.mean - reported).abs() <= 1e-9,
                "{} {}: rescored {} vs reported {}",
                outcome.label,
                rescored.metric_name,
                rescored.mean,
                reported
            );
            let mean_line = format!(
                "{},{},mean,{}",
                outcome.label, rescored.metric_name, reported
            );
            assert!(
                metrics_csv.lines().any(|l| l == mean_line),
                "metrics.csv missing {mean_line:?}"
            );
        }
    }
}

#[test]
fn experiment_is_deterministic_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = small_fixture(dir.path());
    let config = parse_config(&config_json(&fixture, &["baseline", "topk:0.5", "rdime"]));
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    run_experiment(&config, &out_a).unwrap();
    run_experiment(&config, &out_b).unwrap();
    for name in [
        "config.json",
        "run_baseline.txt",
        "run_topk-0.5.txt",
        "run_rdime.txt",
        "metrics.csv",
        "significance.csv",
        "masks.csv",
        "results.csv",
        "retained_summary.csv",
    ] {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn significance_covers_each_topk_and_the_best() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = small_fixture(dir.path());
    let config = parse_config(&config_json(
        &fixture,
        &["baseline", "topk:0.4", "topk:0.8", "rdime"],
    ));
    let output = run_experiment(&config, &dir.path().join("out")).unwrap();

    let names: Vec<&str> = output.significance.iter().map(|(n, _)| n.as_str()).collect();
    for metric in ["ndcg@5", "ap"] {
        assert!(names.contains(&format!("{metric}:rdime-vs-topk:0.4").as_str()));
        assert!(names.contains(&format!("{metric}:rdime-vs-topk:0.8").as_str()));
        assert!(
            names
                .iter()
                .any(|n| n.starts_with(&format!("{metric}:rdime-vs-best-topk("))),
            "missing vs-best comparison for {metric}: {names:?}"
        );
    }
    for (_, result) in &output.significance {
        assert!(result.p_value >= 0.0 && result.p_value <= 1.0);
    }
}

#[test]
fn baseline_policy_retains_everything() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = small_fixture(dir.path());
    let config = parse_config(&config_json(&fixture, &["baseline", "topk:0.5", "rdime"]));
    let output = run_experiment(&config, &dir.path().join("out")).unwrap();
    let baseline = &output.policies[0];
    assert_eq!(baseline.mean_retained, 1.0);
    assert!(baseline.masks.iter().all(|m| m.retained_count() == m.dim()));
    let rdime = &output.policies[2];
    assert!(rdime.mean_retained < 1.0, "rdime kept every dimension");
}

#[test]
fn single_doc_estimator_reads_external_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = small_fixture(dir.path());
    let mut value = config_json(&fixture, &["baseline", "rdime"]);
    value["estimator"] = serde_json::json!({"scheme": "single-doc"});
    // Reuse the query file: every query id maps to a vector, and
    // q ⊙ q importance is a legitimate single-document estimate.
    value["synthetic_docs"] = serde_json::json!(fixture.queries);
    let config = parse_config(&value);
    let output = run_experiment(&config, &dir.path().join("out")).unwrap();
    assert_eq!(output.policies.len(), 2);

    let mut missing = config.clone();
    missing.synthetic_docs = None;
    let err = run_experiment(&missing, &dir.path().join("out2")).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)));
}

#[test]
fn external_first_stage_run_feeds_the_estimator() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = small_fixture(dir.path());

    // Hand-built first stage: every query's pseudo docs are its own
    // relevant documents, in a fixed order.
    let rankings: Vec<RunRanking> = (0..6)
        .map(|qi| {
            let entries = (0..3)
                .map(|di| RunEntry {
                    doc_id: format!("q{qi}_rel{di}"),
                    score: (3 - di) as f64,
                    rank: di + 1,
                })
                .collect();
            RunRanking::new(format!("q{qi}"), entries, "external").unwrap()
        })
        .collect();
    let run_path = dir.path().join("first_stage.txt");
    write_run(&run_path, &rankings, "external").unwrap();

    let mut value = config_json(&fixture, &["baseline", "rdime"]);
    value["first_stage_run"] = serde_json::json!(run_path);
    let config = parse_config(&value);
    run_experiment(&config, &dir.path().join("out")).unwrap();

    // M larger than the run depth must be rejected.
    let mut deep = config.clone();
    deep.m = 4;
    let err = run_experiment(&deep, &dir.path().join("out2")).unwrap_err();
    assert!(err.to_string().contains("M"), "unexpected error: {err}");
}

#[test]
fn config_rejects_unknown_keys_and_oracle_policy() {
    let err = ExperimentConfig::from_json(
        r#"{"queries":"a","corpus":"b","qrels":"c","estimator":{"scheme":"uniform"},
            "m":2,"policies":["rdime"],"seed":1,"typo_field":true}"#,
    )
    .unwrap_err();
    assert!(err.to_string().contains("typo_field"));

    let dir = tempfile::tempdir().unwrap();
    let fixture = small_fixture(dir.path());
    let config = parse_config(&config_json(&fixture, &["baseline", "oracle"]));
    let err = run_experiment(&config, &dir.path().join("out")).unwrap_err();
    assert!(err.to_string().contains("oracle"));
}

#[test]
fn report_renders_delta_against_best_topk() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = small_fixture(dir.path());
    let config = parse_config(&config_json(
        &fixture,
        &["baseline", "topk:0.4", "topk:0.8", "rdime"],
    ));
    let out = dir.path().join("out");
    let output = run_experiment(&config, &out).unwrap();
    let report = run_report(&out).unwrap();

    assert!(report.table.contains("model=toy collection=unit"));
    assert!(out.join("report.csv").is_file());

    // The emitted delta must round-trip from the full-precision means.
    let rdime_ndcg = output.policies[3].metrics[0].mean;
    let best_topk_ndcg = output.policies[1].metrics[0]
        .mean
        .max(output.policies[2].metrics[0].mean);
    let expected = 100.0 * (rdime_ndcg - best_topk_ndcg) / best_topk_ndcg;
    let delta_field = report
        .csv
        .lines()
        .find(|l| l.contains(",ndcg@5,rdime,"))
        .and_then(|l| l.rsplit(',').next())
        .unwrap()
        .to_string();
    let emitted: f64 = delta_field.parse().unwrap();
    assert!(
        (emitted - expected).abs() <= 0.005,
        "delta {emitted} vs recomputed {expected}"
    );
}

#[test]
fn report_requires_topk_and_rdime_rows() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("results.csv"),
        "model,estimator,collection,policy,metric,mean,mean_retained_fraction\n\
         toy,uniform,unit,baseline,ap,0.5,1\n\
         toy,uniform,unit,rdime,ap,0.5,0.6\n",
    )
    .unwrap();
    let err = run_report(dir.path()).unwrap_err();
    assert!(err.to_string().contains("topk"), "unexpected error: {err}");

    let empty = tempfile::tempdir().unwrap();
    let err = run_report(empty.path()).unwrap_err();
    assert!(err.to_string().contains("results.csv"));
}

#[test]
fn report_aggregates_subdirectories() {
    let dir = tempfile::tempdir().unwrap();
    for (sub, collection) in [("exp1", "unit"), ("exp2", "other")] {
        let path = dir.path().join(sub);
        fs::create_dir(&path).unwrap();
        fs::write(
            path.join("results.csv"),
            format!(
                "model,estimator,collection,policy,metric,mean,mean_retained_fraction\n\
                 toy,uniform,{collection},topk:0.4,ap,0.5,0.4\n\
                 toy,uniform,{collection},rdime,ap,0.55,0.6\n"
            ),
        )
        .unwrap();
    }
    let report = run_report(dir.path()).unwrap();
    assert!(report.table.contains("collection=unit"));
    assert!(report.table.contains("collection=other"));
    assert!(report.csv.contains("10.00"), "expected a 10% delta: {}", report.csv);
}

#[test]
fn cli_exit_codes_distinguish_failure_modes() {
    let bin = env!("CARGO_BIN_EXE_rdime");
    let dir = tempfile::tempdir().unwrap();

    // Usage error: unknown subcommand.
    let status = Command::new(bin).arg("frobnicate").status().unwrap();
    assert_eq!(status.code(), Some(2));

    // I/O error: missing config file.
    let status = Command::new(bin)
        .args(["experiment", "--config", "/nonexistent.json", "--out"])
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // Bad thread-count env var.
    let status = Command::new(bin)
        .env("RDIME_THREADS", "zero")
        .args(["validate", "--out"])
        .arg(dir.path().join("v0"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // Injected fault must surface as a validation failure.
    let status = Command::new(bin)
        .args(["validate", "--seed", "5", "--inject-fault", "--out"])
        .arg(dir.path().join("v1"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn cli_experiment_and_report_round_trip() {
    let bin = env!("CARGO_BIN_EXE_rdime");
    let dir = tempfile::tempdir().unwrap();
    let fixture = small_fixture(dir.path());
    let config = config_json(&fixture, &["baseline", "topk:0.6", "rdime"]);
    let config_path = dir.path().join("config.json");
    fs::write(&config_path, config.to_string()).unwrap();

    let out = dir.path().join("out");
    let status = Command::new(bin)
        .env("RDIME_THREADS", "2")
        .args(["experiment", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let output = Command::new(bin).args(["report", "--in"]).arg(&out).output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("model=toy collection=unit"), "table missing: {stdout}");
    assert!(stdout.contains("rdime"));
}
