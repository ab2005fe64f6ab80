use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn ppxfuse(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppxfuse"))
        .current_dir(dir)
        .args(args)
        .arg("--quiet")
        .env_remove("PPXFUSE_SEED")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = ppxfuse(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn jsonl(path: impl AsRef<Path>) -> Vec<Value> {
    read(path).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

/// A temp dir holding a small three-model simulation in `sim/`.
fn simulated() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("sim.json"),
        r#"{"models":[{"name":"a","accuracy":0.9,"sharpness":5},
                      {"name":"b","accuracy":0.6,"sharpness":5,"miscalibration":0.5},
                      {"name":"c","accuracy":0.7,"sharpness":4}],
            "n":400,"prior":[0.5,0.5],"seed":11}"#,
    )
    .unwrap();
    ok(dir.path(), &["simulate", "--config", "sim.json", "--out-dir", "sim"]);
    dir
}

fn logits(models: &[&str]) -> Vec<String> {
    models
        .iter()
        .map(|m| format!("sim/{m}.manifest.json,sim/{m}.logits.jsonl"))
        .collect()
}

fn with_logits<'a>(cmd: &'a str, models: &'a [String], rest: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec![cmd, "--logits"];
    args.extend(models.iter().map(String::as_str));
    args.extend_from_slice(rest);
    args
}

#[test]
fn simulate_writes_gold_and_one_bundle_per_model() {
    let dir = simulated();
    let sim = dir.path().join("sim");
    let gold = jsonl(sim.join("gold.jsonl"));
    assert_eq!(gold.len(), 400);
    assert_eq!(gold[0]["id"], "sim-000000");
    for m in ["a", "b", "c"] {
        let manifest: Value = serde_json::from_str(&read(sim.join(format!("{m}.manifest.json")))).unwrap();
        assert_eq!(manifest["model_name"], m);
        assert_eq!(manifest["n_rows"], 400);
        assert_eq!(manifest["label_order"], serde_json::json!(["human", "machine"]));
        assert_eq!(jsonl(sim.join(format!("{m}.logits.jsonl"))).len(), 400);
    }
}

#[test]
fn perplexity_reports_follow_input_order() {
    let dir = simulated();
    let models = logits(&["c", "a", "b"]);
    let stdout = ok(dir.path(), &with_logits("perplexity", &models, &["--gold", "sim/gold.jsonl"]));
    let names: Vec<String> = stdout
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["model_name"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(names, ["c", "a", "b"]);
}

#[test]
fn strategy_ppx_matches_fusing_with_a_weights_file() {
    let dir = simulated();
    let d = dir.path();
    let models = logits(&["a", "b", "c"]);
    ok(d, &with_logits("weights", &models, &["--calibration", "sim/gold.jsonl", "--out", "w.json"]));
    ok(d, &with_logits("fuse", &models, &["--weights", "w.json", "--out", "from-file.jsonl"]));
    ok(
        d,
        &with_logits(
            "fuse",
            &models,
            &["--strategy", "ppx", "--calibration", "sim/gold.jsonl", "--out", "direct.jsonl"],
        ),
    );
    assert_eq!(read(d.join("from-file.jsonl")), read(d.join("direct.jsonl")));
    assert_eq!(read(d.join("w.json")), read(d.join("direct.weights.json")));

    let weights: Value = serde_json::from_str(&read(d.join("w.json"))).unwrap();
    assert_eq!(weights["scheme"], "inverse_perplexity");
    let total: f64 = weights["models"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["weight"].as_f64().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn majority_predictions_carry_no_probabilities() {
    let dir = simulated();
    let models = logits(&["a", "b", "c"]);
    ok(dir.path(), &with_logits("fuse", &models, &["--strategy", "majority", "--out", "maj.jsonl"]));
    let rows = jsonl(dir.path().join("maj.jsonl"));
    assert_eq!(rows.len(), 400);
    assert!(rows.iter().all(|r| r["probabilities"].is_null() && r["strategy"] == "majority"));

    ok(dir.path(), &with_logits("fuse", &models, &["--strategy", "mean", "--out", "mean.jsonl"]));
    let rows = jsonl(dir.path().join("mean.jsonl"));
    let keys: Vec<&String> = rows[0]["probabilities"].as_object().unwrap().keys().collect();
    assert_eq!(keys, ["human", "machine"]);
}

#[test]
fn evaluate_scores_fused_predictions_per_language() {
    let dir = simulated();
    let d = dir.path();
    let models = logits(&["a", "b", "c"]);
    ok(d, &with_logits("fuse", &models, &["--strategy", "mean", "--out", "mean.jsonl"]));
    ok(
        d,
        &["evaluate", "--predictions", "mean.jsonl", "--gold", "sim/gold.jsonl", "--by-language", "--out", "eval.json"],
    );
    let report: Value = serde_json::from_str(&read(d.join("eval.json"))).unwrap();
    assert_eq!(report["overall"]["n_examples"], 400);
    assert_eq!(report["by_language"]["en"]["macro_f1"], report["overall"]["macro_f1"]);
    let micro = report["overall"]["micro_f1"].as_f64().unwrap();
    assert_eq!(micro, report["overall"]["accuracy"].as_f64().unwrap());
}

#[test]
fn compare_lists_every_strategy_and_prints_a_table() {
    let dir = simulated();
    let models = logits(&["a", "b", "c"]);
    let stdout = ok(
        dir.path(),
        &with_logits("compare", &models, &["--calibration", "sim/gold.jsonl", "--gold", "sim/gold.jsonl", "--out", "cmp.json"]),
    );
    assert!(stdout.contains("Micro F1") && stdout.contains("Majority Voting"));
    let cmp: Value = serde_json::from_str(&read(dir.path().join("cmp.json"))).unwrap();
    let names: Vec<&str> = cmp["strategies"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["name"].as_str().unwrap())
        .collect();
    assert_eq!(
        names,
        [
            "Inverse Perplexity Weighting",
            "Accuracy Based Weighting",
            "Mean Ensemble",
            "Majority Voting",
            "Single: a",
            "Single: b",
            "Single: c"
        ]
    );
}

/// Copies bundle `from` under a new model name.
fn clone_bundle(sim: &Path, from: &str, to: &str) {
    let mut manifest: Value = serde_json::from_str(&read(sim.join(format!("{from}.manifest.json")))).unwrap();
    manifest["model_name"] = Value::from(to);
    std::fs::write(sim.join(format!("{to}.manifest.json")), serde_json::to_string(&manifest).unwrap()).unwrap();
    std::fs::copy(sim.join(format!("{from}.logits.jsonl")), sim.join(format!("{to}.logits.jsonl"))).unwrap();
}

#[test]
fn identical_bundles_score_identically_under_every_strategy() {
    let dir = simulated();
    let sim = dir.path().join("sim");
    clone_bundle(&sim, "b", "b2");
    clone_bundle(&sim, "b", "b3");
    let models = logits(&["b", "b2", "b3"]);
    ok(
        dir.path(),
        &with_logits("compare", &models, &["--calibration", "sim/gold.jsonl", "--gold", "sim/gold.jsonl", "--out", "cmp.json"]),
    );
    let cmp: Value = serde_json::from_str(&read(dir.path().join("cmp.json"))).unwrap();
    let scores: Vec<f64> = cmp["strategies"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["report"]["macro_f1"].as_f64().unwrap())
        .collect();
    assert!(scores.iter().all(|&s| s == scores[0]), "{scores:?}");
}

#[test]
fn a_single_bundle_can_be_compared() {
    let dir = simulated();
    let models = logits(&["a"]);
    ok(
        dir.path(),
        &with_logits("compare", &models, &["--calibration", "sim/gold.jsonl", "--gold", "sim/gold.jsonl", "--out", "cmp.json"]),
    );
    let cmp: Value = serde_json::from_str(&read(dir.path().join("cmp.json"))).unwrap();
    let strategies = cmp["strategies"].as_array().unwrap();
    assert_eq!(strategies.len(), 5);
    assert_eq!(strategies[0]["weights"]["models"][0]["weight"], 1.0);
}

#[test]
fn gold_missing_an_id_exits_with_code_2() {
    let dir = simulated();
    let d = dir.path();
    let gold = read(d.join("sim/gold.jsonl"));
    let partial: Vec<&str> = gold.lines().skip(1).collect();
    std::fs::write(d.join("partial.jsonl"), partial.join("\n") + "\n").unwrap();
    let models = logits(&["a", "b"]);
    let out = ppxfuse(d, &with_logits("perplexity", &models, &["--gold", "partial.jsonl"]));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sim-000000"));

    ok(d, &with_logits("fuse", &models, &["--strategy", "mean", "--out", "mean.jsonl"]));
    let out = ppxfuse(d, &["evaluate", "--predictions", "mean.jsonl", "--gold", "partial.jsonl", "--out", "e.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_files_exit_with_code_1_and_bad_usage_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = ppxfuse(dir.path(), &["batch-plan", "--corpus", "nope.jsonl", "--out", "p.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    let out = ppxfuse(dir.path(), &["batch-plan", "--corpus", "nope.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    let out = ppxfuse(dir.path(), &["fuse", "--logits", "m.json,r.jsonl", "--weights", "w.json", "--strategy", "mean", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
}

fn write_corpus(dir: &Path) -> PathBuf {
    let mut text = String::new();
    for (lang, n) in [("en", 50), ("zh", 30), ("ar", 7)] {
        for i in 0..n {
            let words = vec!["tok"; 1 + (i * 7) % 23].join(" ");
            let label = ["human", "machine"][i % 2];
            text.push_str(&format!(
                "{{\"id\":\"{lang}-{i:03}\",\"text\":\"{words}\",\"language\":\"{lang}\",\"source\":\"s\",\"label\":\"{label}\"}}\n"
            ));
        }
    }
    let path = dir.join("corpus.jsonl");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn balance_caps_languages_and_honours_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_corpus(d);
    std::fs::write(d.join("plan.json"), r#"{"caps":{"en":20,"zh":10},"seed":42}"#).unwrap();
    ok(d, &["balance", "--corpus", "corpus.jsonl", "--config", "plan.json", "--out", "b1.jsonl"]);
    let rows = jsonl(d.join("b1.jsonl"));
    let count = |lang: &str| rows.iter().filter(|r| r["language"] == lang).count();
    assert_eq!((count("en"), count("zh"), count("ar")), (20, 10, 7));

    ok(d, &["balance", "--corpus", "corpus.jsonl", "--config", "plan.json", "--seed", "3", "--out", "b2.jsonl"]);
    let env = Command::new(env!("CARGO_BIN_EXE_ppxfuse"))
        .current_dir(d)
        .args(["balance", "--corpus", "corpus.jsonl", "--config", "plan.json", "--out", "b3.jsonl", "--quiet"])
        .env("PPXFUSE_SEED", "3")
        .status()
        .unwrap();
    assert!(env.success());
    assert_ne!(read(d.join("b1.jsonl")), read(d.join("b2.jsonl")));
    assert_eq!(read(d.join("b2.jsonl")), read(d.join("b3.jsonl")));
}

#[test]
fn batch_plan_groups_ids_and_ends_with_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_corpus(d);
    ok(d, &["batch-plan", "--corpus", "corpus.jsonl", "--batch-size", "8", "--out", "plan.jsonl"]);
    let lines = jsonl(d.join("plan.jsonl"));
    let (summary, batches) = lines.split_last().unwrap();
    assert_eq!(summary["n_batches"], 11);
    assert_eq!(summary["n_records"], 87);
    assert_eq!(summary["length_metric"], "whitespace_words");
    assert_eq!(batches.len(), 11);
    let ids: usize = batches.iter().map(|b| b["ids"].as_array().unwrap().len()).sum();
    assert_eq!(ids, 87);
}
