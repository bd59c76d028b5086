use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn prunerank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prunerank"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn verify_bounds_writes_report_tables_and_timing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"trials": 300}"#).unwrap();
    let out = dir.path().join("out");
    let o = prunerank(&[
        "verify-bounds",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let report = read_json(&out.join("report.json"));
    assert_eq!(report["command"], "verify-bounds");
    assert_eq!(report["passed"], true);
    assert_eq!(report["config"]["trials"], 300);
    for check in ["sandwich", "stability", "pruning_error", "tail_gap"] {
        assert_eq!(
            report["results"]["bound_verification"][check]["failures"],
            0
        );
        assert_eq!(
            report["results"]["bound_verification"][check]["trials"],
            300
        );
    }
    assert!(report.get("wall_seconds").is_none());
    assert!(
        read_json(&out.join("timing.json"))["wall_seconds"]
            .as_f64()
            .unwrap()
            >= 0.0
    );

    let csv = fs::read_to_string(out.join("tables/bound_verification.csv")).unwrap();
    assert!(csv.starts_with("check,trials,failures"));
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn unknown_config_field_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"trails": 10}"#).unwrap();
    let o = prunerank(&[
        "verify-bounds",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("trails"));
}

#[test]
fn invalid_synthetic_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"synthetic": {"planted_per_image": 1000}}"#).unwrap();
    let o = prunerank(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_prunes_supplied_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let q = r#"{"rows": 1, "dim": 2, "data": [1.0, 0.0]}"#;
    let img = r#"{"rows": 4, "dim": 2, "data": [0.0, 1.0, 1.0, 0.1, -1.0, 0.0, 0.7, 0.7]}"#;
    fs::write(dir.path().join("q.json"), q).unwrap();
    fs::write(dir.path().join("img.json"), img).unwrap();
    let cfg = dir.path().join("sim.json");
    fs::write(
        &cfg,
        r#"{"instances": 20, "correlation": null, "embeddings": {"query": "q.json", "images": ["img.json"], "rho": 0.5}}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = prunerank(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&out.join("report.json"));
    let pruned = &report["results"]["prune_results"][0];
    assert_eq!(pruned["kept_indices"], serde_json::json!([1, 3]));
    assert_eq!(pruned["keep_count"], 2);
    assert!(report["results"].get("attention_correlation").is_none());
    assert!(out.join("tables/prune_results.csv").exists());
}

#[test]
fn cost_model_defaults_emit_regime_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let o = prunerank(&["cost-model", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let r = read_json(&dir.path().join("report.json"));
    let res = &r["results"];
    let (base, zip) = (
        res["f_base"].as_f64().unwrap(),
        res["f_zip"].as_f64().unwrap(),
    );
    assert!((res["speedup"].as_f64().unwrap() - base / zip).abs() < 1e-9);
    assert!(
        res["regime_estimates"]["longcontext_prefill_ratio"]
            .as_f64()
            .unwrap()
            > 1.0
    );
    assert!(dir.path().join("tables/cost_sweep.csv").exists());
}

#[test]
fn metrics_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("m.json");
    fs::write(
        &cfg,
        r#"{
            "subsets": {
                "a": [{"relevant": [2], "ranked": [2, 0, 1]}, {"relevant": [1], "ranked": [0, 1, 2]}],
                "b": [{"relevant": [0], "ranked": [1, 2, 0]}]
            },
            "recall_k": [1, 3],
            "failure_analysis": true
        }"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = prunerank(&[
        "metrics",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out.join("report.json"));
    let r1 = &r["results"]["recall"][0]["aggregate"];
    assert!((r1["micro"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert!((r1["macro"].as_f64().unwrap() - 0.25).abs() < 1e-12);
    assert_eq!(r["results"]["failure"]["b"]["near_miss_pct"], 100.0);
    let csv = fs::read_to_string(out.join("tables/recall.csv")).unwrap();
    assert!(csv.contains("1,macro,0.250000"));
}

#[test]
fn metrics_without_config_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = prunerank(&["metrics", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
