//! End-to-end runs of the `cuisine` binary on small generated corpora.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cuisine::corpus::{marker_corpus, save_corpus, Format, LabeledCorpus, RecipeRecord, SplitManifest};
use serde_json::Value;
use tempfile::TempDir;

fn cuisine(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cuisine"))
        .args(args)
        .env("CUISINE_DETERMINISTIC", "1")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_corpus(dir: &Path, name: &str, corpus: &LabeledCorpus) -> PathBuf {
    let p = dir.join(name);
    save_corpus(corpus, &p, Format::Jsonl).unwrap();
    p
}

fn rec(id: i64, cuisine: &str, tokens: &[&str]) -> RecipeRecord {
    RecipeRecord {
        id,
        continent: "C".into(),
        cuisine: cuisine.into(),
        tokens: tokens.iter().map(|t| t.to_string()).collect(),
    }
}

/// Train `kind` on `data` into `out`; returns the model path.
fn train(data: &Path, kind: &str, out: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["train", "--data", s(data), "--model", kind, "--out", s(out)];
    args.extend_from_slice(extra);
    let o = cuisine(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    out.join(format!("{kind}.model.json"))
}

#[test]
fn split_prints_sizes_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let data = write_corpus(dir.path(), "ten.jsonl", &marker_corpus(10, 2, 1).unwrap());
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let o = cuisine(&["split", "--data", s(&data), "--ratios", "7:1:2", "--seed", "3", "--out", s(out)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert_eq!(stdout(&o).trim(), "train=7 val=1 test=2");
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let m = SplitManifest::read(&a).unwrap();
    let mut all: Vec<i64> = m.train.iter().chain(&m.validation).chain(&m.test).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (1..=10).collect::<Vec<_>>());
}

#[test]
fn missing_dataset_is_exit_two_naming_the_path() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nowhere").join("recipes.jsonl");
    let o = cuisine(&["split", "--data", s(&missing), "--out", s(&dir.path().join("s.json"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(s(&missing)), "{}", stderr(&o));
}

#[test]
fn usage_errors_are_exit_two() {
    let dir = TempDir::new().unwrap();
    let data = write_corpus(dir.path(), "c.jsonl", &marker_corpus(20, 2, 1).unwrap());
    let o = cuisine(&["train", "--data", s(&data), "--model", "knn", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = cuisine(&["train", "--data", s(&data), "--set", "model.kind=knn", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = cuisine(&["train", "--data", s(&data), "--set", "features.min_df=0"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert_eq!(cuisine(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn nb_train_writes_model_manifest_and_reports() {
    let dir = TempDir::new().unwrap();
    let data = write_corpus(dir.path(), "c.jsonl", &marker_corpus(20, 2, 5).unwrap());
    let out = dir.path().join("run");
    let start = std::time::Instant::now();
    let model = train(&data, "nb", &out, &[]);
    assert!(start.elapsed().as_secs_f64() < 5.0);
    assert!(model.exists());

    let run: Value = serde_json::from_slice(&std::fs::read(out.join("nb.run.json")).unwrap()).unwrap();
    assert_eq!(run["config"]["model"]["kind"], "nb");
    assert_eq!(run["dataset"]["n_records"], 20);
    assert_eq!(run["dataset"]["n_train"], 14);
    assert_eq!(run["tool_version"], env!("CARGO_PKG_VERSION"));
    let mut referenced = vec![run["split_path"].clone(), run["model_path"].clone(), run["vocab_path"].clone()];
    referenced.extend(run["metrics_paths"].as_array().unwrap().iter().cloned());
    assert!(referenced.len() >= 5);
    for p in referenced {
        assert!(Path::new(p.as_str().unwrap()).exists(), "{p}");
    }

    // The resolved config travels with the model.
    let file: Value = serde_json::from_slice(&std::fs::read(&model).unwrap()).unwrap();
    assert_eq!(file["config"], run["config"]);
    assert_eq!(file["model_type"], "nb");
}

#[test]
fn logreg_twice_gives_identical_model_files() {
    let dir = TempDir::new().unwrap();
    let data = write_corpus(dir.path(), "c.jsonl", &marker_corpus(60, 3, 9).unwrap());
    let a = train(&data, "logreg", &dir.path().join("a"), &["--set", "model.linear.epochs=20"]);
    let b = train(&data, "logreg", &dir.path().join("b"), &["--set", "model.linear.epochs=20"]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(
        std::fs::read(dir.path().join("a/logreg.vocab.json")).unwrap(),
        std::fs::read(dir.path().join("b/logreg.vocab.json")).unwrap()
    );
}

#[test]
fn evaluate_reproduces_the_training_report() {
    let dir = TempDir::new().unwrap();
    let data = write_corpus(dir.path(), "c.jsonl", &marker_corpus(60, 3, 2).unwrap());
    let out = dir.path().join("run");
    let model = train(&data, "svm", &out, &[]);
    let written = std::fs::read(out.join("svm.validation.metrics.json")).unwrap();

    let again = dir.path().join("again");
    let o = cuisine(&[
        "evaluate", "--model", s(&model), "--split", s(&out.join("split.json")), "--which", "validation", "--out", s(&again),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read(again.join("svm.validation.metrics.json")).unwrap(), written);
    let text = stdout(&o);
    for row in ["Accuracy", "Precision", "Recall", "F1"] {
        assert!(text.contains(row), "{text}");
    }
    assert!(text.contains("SVM (linear)"), "{text}");
}

#[test]
fn memorizable_fixture_evaluates_to_full_accuracy() {
    let dir = TempDir::new().unwrap();
    let data = write_corpus(dir.path(), "c.jsonl", &marker_corpus(40, 4, 8).unwrap());
    let out = dir.path().join("run");
    let model = train(&data, "nb", &out, &[]);
    let o = cuisine(&["evaluate", "--model", s(&model), "--split", s(&out.join("split.json")), "--which", "train"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: Value = serde_json::from_slice(&std::fs::read(out.join("nb.train.metrics.json")).unwrap()).unwrap();
    assert_eq!(report["accuracy"], 1.0);

    // Train and test records never overlap.
    let m = SplitManifest::read(out.join("split.json")).unwrap();
    assert!(m.train.iter().all(|id| !m.test.contains(id)));
}

#[test]
fn evaluate_with_a_foreign_vocabulary_names_both_hashes() {
    let dir = TempDir::new().unwrap();
    let a = write_corpus(dir.path(), "a.jsonl", &marker_corpus(30, 3, 1).unwrap());
    let b = write_corpus(dir.path(), "b.jsonl", &marker_corpus(30, 2, 7).unwrap());
    let model = train(&a, "nb", &dir.path().join("a"), &[]);
    train(&b, "nb", &dir.path().join("b"), &[]);
    let foreign = dir.path().join("b/nb.vocab.json");

    let expected: Value = serde_json::from_slice(&std::fs::read(&model).unwrap()).unwrap();
    let expected = expected["vocab_ref"]["sha256"].as_str().unwrap().to_string();
    let other: Value = serde_json::from_slice(&std::fs::read(dir.path().join("b/nb.model.json")).unwrap()).unwrap();
    let found = other["vocab_ref"]["sha256"].as_str().unwrap().to_string();
    assert_ne!(expected, found);

    let o = cuisine(&[
        "evaluate", "--model", s(&model), "--split", s(&dir.path().join("a/split.json")), "--vocab", s(&foreign),
    ]);
    assert_ne!(o.status.code(), Some(0));
    let err = stderr(&o);
    assert!(err.contains(&expected) && err.contains(&found), "{err}");
}

#[test]
fn predict_keeps_order_and_reports_bad_lines() {
    let dir = TempDir::new().unwrap();
    let corpus = marker_corpus(60, 3, 4).unwrap();
    let data = write_corpus(dir.path(), "c.jsonl", &corpus);
    let model = train(&data, "logreg", &dir.path().join("run"), &["--set", "model.linear.epochs=300"]);

    let mut lines = Vec::new();
    for r in corpus.records().iter().take(6) {
        lines.push(serde_json::json!({"id": r.id, "tokens": r.tokens}).to_string());
    }
    lines.insert(2, "{not json".to_string());
    lines.insert(4, r#"{"id": 99, "ingredients": ["salt"]}"#.to_string());
    let input = dir.path().join("in.jsonl");
    std::fs::write(&input, lines.join("\n") + "\n").unwrap();

    let run = || {
        let o = cuisine(&["predict", "--model", s(&model), "--input", s(&input)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        stdout(&o)
    };
    let first = run();
    assert_eq!(first, run());
    let out: Vec<Value> = first.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(out.len(), 8);
    assert_eq!(out[2]["line"], 3);
    assert!(out[2]["error"].is_string());
    assert!(out[4]["error"].is_string(), "{}", out[4]);
    assert_eq!(out[4]["line"], 5);
    let good: Vec<&Value> = out.iter().filter(|v| v.get("error").is_none()).collect();
    assert_eq!(good.len(), 6);
    for (v, r) in good.iter().zip(corpus.records()) {
        assert_eq!(v["id"], r.id);
        assert_eq!(v["cuisine"], r.cuisine.as_str());
        assert_eq!(v["scores"].as_array().unwrap().len(), 3);
    }
}

#[test]
fn predict_on_empty_input_writes_nothing() {
    let dir = TempDir::new().unwrap();
    let data = write_corpus(dir.path(), "c.jsonl", &marker_corpus(20, 2, 4).unwrap());
    let model = train(&data, "nb", &dir.path().join("run"), &[]);
    let input = dir.path().join("empty.jsonl");
    std::fs::write(&input, "").unwrap();
    let output = dir.path().join("out.jsonl");
    let o = cuisine(&["predict", "--model", s(&model), "--input", s(&input), "--output", s(&output)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read(&output).unwrap(), b"");
}

#[test]
fn a_table_one_row_gets_one_line_with_26_scores() {
    let dir = TempDir::new().unwrap();
    let data = write_corpus(dir.path(), "c.jsonl", &marker_corpus(104, 26, 3).unwrap());
    let model = train(&data, "logreg", &dir.path().join("run"), &[]);
    let input = dir.path().join("row.jsonl");
    let row = serde_json::json!({
        "id": 79897,
        "tokens": ["beef", "chunky salsa", "mushroom", "garlic", "heat", "simmer", "serve", "skillet"],
    });
    std::fs::write(&input, format!("{row}\n")).unwrap();
    let o = cuisine(&["predict", "--model", s(&model), "--input", s(&input)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1);
    let v: Value = serde_json::from_str(text.trim()).unwrap();
    assert_eq!(v["id"], 79897);
    assert_eq!(v["scores"].as_array().unwrap().len(), 26);
}

#[test]
fn analyze_counts_a_single_record_by_hand() {
    let dir = TempDir::new().unwrap();
    let corpus = LabeledCorpus::from_records(vec![rec(7, "Mexican", &["beef", "garlic", "beef", "salsa"])]).unwrap();
    let data = write_corpus(dir.path(), "one.jsonl", &corpus);
    let json = dir.path().join("report.json");
    let o = cuisine(&["analyze", "--data", s(&data), "--raw", "--out", s(&json)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r: Value = serde_json::from_slice(&std::fs::read(&json).unwrap()).unwrap();
    assert_eq!(r["n_records"], 1);
    assert_eq!(r["n_classes"], 1);
    assert_eq!(r["per_cuisine"][0]["cuisine"], "Mexican");
    assert_eq!(r["per_cuisine"][0]["recipes"], 1);
    assert_eq!(r["vocabulary_size"], 3);
    assert_eq!(r["total_occurrences"], 4);
    // One record and three distinct tokens: the incidence matrix is all ones.
    assert_eq!(r["sparsity_ratio"], 0.0);
    // beef occurs twice, garlic and salsa once each.
    let below: Vec<u64> = r["fewer_than"].as_array().unwrap().iter().map(|t| t["features"].as_u64().unwrap()).collect();
    assert_eq!(&below[..3], &[2, 3, 3]);
    assert!(r["more_than"].as_array().unwrap().iter().all(|t| t["features"] == 0));
    let text = stdout(&o);
    assert!(text.contains("Mexican") && text.contains("Number of Features"), "{text}");
}

#[test]
fn gradcheck_passes_on_the_tiny_models_and_catches_a_corrupted_gradient() {
    for model in ["lstm", "transformer", "logreg", "svm"] {
        let o = cuisine(&["gradcheck", "--model", model]);
        assert_eq!(o.status.code(), Some(0), "{model}: {}{}", stdout(&o), stderr(&o));
        assert!(stdout(&o).contains("PASS"));
    }
    for model in ["lstm", "transformer"] {
        let o = cuisine(&["gradcheck", "--model", model, "--corrupt-gradient"]);
        assert_eq!(o.status.code(), Some(1), "{model}");
        assert!(stdout(&o).contains("FAIL"));
    }
}

#[test]
fn gradcheck_report_lists_every_tensor() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("g.json");
    let o = cuisine(&["gradcheck", "--model", "lstm", "--seed", "2", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r: Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(r["passed"], true);
    let tensors = r["tensors"].as_array().unwrap();
    assert!(tensors.len() > 3);
    assert!(tensors.iter().all(|t| t["max_rel_error"].as_f64().unwrap() < 1e-4));
}

#[test]
fn compare_writes_one_column_per_kind() {
    let dir = TempDir::new().unwrap();
    let data = write_corpus(dir.path(), "c.jsonl", &marker_corpus(60, 3, 6).unwrap());
    let out = dir.path().join("cmp");
    let o = cuisine(&[
        "compare", "--data", s(&data), "--models", "logreg,nb,rf", "--set", "model.forest.n_trees=5", "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("comparison.txt")).unwrap();
    let header = text.lines().next().unwrap();
    let positions: Vec<usize> = ["Logistic Regression", "Naive Bayes", "Random Forest"]
        .iter()
        .map(|t| header.find(t).unwrap_or_else(|| panic!("{t} missing from {header}")))
        .collect();
    assert!(positions.windows(2).all(|w| w[0] < w[1]));
    let json: Value = serde_json::from_slice(&std::fs::read(out.join("comparison.json")).unwrap()).unwrap();
    assert_eq!(json["runs"].as_array().unwrap().len(), 3);
}
