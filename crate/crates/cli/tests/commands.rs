use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use serde_json::Value;
use signsel::eval::synthetic::class_blobs;
use signsel::MulticlassModel;
use signsel_cli::run::{build_experiment, load_data};
use signsel_cli::{ingest_csv, run, Command, RunConfig};
use tempfile::TempDir;

fn write_toy(dir: &Path) -> PathBuf {
    let p = dir.join("toy.csv");
    fs::write(&p, "f,label\n0.9,p\n0.8,p\n0.1,n\n0.2,n\n").unwrap();
    p
}

/// Three Gaussian classes in a CSV, values clamped to [0, 1].
fn write_blobs(dir: &Path, name: &str, per_class: usize, seed: u64) -> PathBuf {
    let (f, labels) = class_blobs(3, 12, per_class, 0.15, 0.15, seed).unwrap();
    let mut text = String::from("label");
    for j in 0..f.cols() {
        text.push_str(&format!(",x{j}"));
    }
    text.push('\n');
    for i in 0..f.rows() {
        text.push_str(&format!("c{}", labels.label(i)));
        for v in f.row(i) {
            text.push_str(&format!(",{}", v.clamp(0.0, 1.0)));
        }
        text.push('\n');
    }
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p
}

fn blobs_config(dir: &Path, extra: &str) -> PathBuf {
    write_blobs(dir, "train.csv", 60, 1);
    write_blobs(dir, "test.csv", 30, 1);
    write_config(
        dir,
        &format!(
            r#"{{
                "data": {{"format": "csv", "train": "train.csv", "test": "test.csv"}},
                "mode": "unsupervised",
                "scaling": "unit_interval",
                "flip_rule": "one_minus",
                "k": 4,
                "pool": "labeled_plus_unlabeled",
                "unlabeled_source": "test",
                "repeats": 3,
                "seed": 42{extra}
            }}"#
        ),
    )
}

fn signsel(args: &[&str]) -> std::process::Output {
    Process::new(env!("CARGO_BIN_EXE_signsel")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn train_then_eval_on_toy_data() {
    let dir = TempDir::new().unwrap();
    write_toy(dir.path());
    let cfg = write_config(
        dir.path(),
        r#"{"data": {"format": "csv", "train": "toy.csv", "label_column": "label"},
            "mode": "supervised", "scaling": "unit_interval", "flip_rule": "one_minus",
            "k": 1, "pool": "labeled_only", "repeats": 1, "seed": 3}"#,
    );
    let out = dir.path().join("out");
    let o = signsel(&["train", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let model = read_json(&out.join("model.json"));
    assert_eq!(model["seed"], 3);
    assert_eq!(model["config_hash"].as_str().unwrap().len(), 64);
    let models = model["model"]["models"].as_array().unwrap();
    let by_class: BTreeMap<&str, &Value> = models.iter().map(|m| (m["class_id"].as_str().unwrap(), m)).collect();
    assert_eq!(by_class["p"]["signs"]["signs"], serde_json::json!([1]));
    assert_eq!(by_class["n"]["signs"]["signs"], serde_json::json!([-1]));
    for m in models {
        assert_eq!(m["weights"]["w"], serde_json::json!([1.0]));
    }

    let o = signsel(&["eval", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = read_json(&out.join("metrics.json"));
    assert_eq!(metrics["mean_accuracy"], 1.0);
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("# seed=3 config_hash="));
    assert!(fs::read_to_string(out.join("run.log")).unwrap().lines().count() >= 2);
}

#[test]
fn saved_model_predicts_bit_identically() {
    let dir = TempDir::new().unwrap();
    let cfg_path = blobs_config(dir.path(), "");
    let out = dir.path().join("out");
    let cfg = RunConfig::load(&cfg_path).unwrap();
    run(Command::Train, &cfg, &out).unwrap();

    let text = fs::read_to_string(out.join("model.json")).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    let loaded = MulticlassModel::from_json(&v["model"].to_string()).unwrap();

    let (train, test) = load_data(&cfg).unwrap();
    let test_features = test.as_ref().unwrap().features.clone();
    let (exp, _) = build_experiment(&cfg, train, test).unwrap();
    let fresh = exp
        .run(&cfg.experiment_config(), cfg.seed, &BTreeMap::new())
        .unwrap()
        .model;

    let a = fresh.score_matrix(&test_features).unwrap();
    let b = loaded.score_matrix(&test_features).unwrap();
    for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }

    run(Command::Predict, &cfg, &out).unwrap();
    let preds = fs::read_to_string(out.join("predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), 2 + test_features.rows());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = blobs_config(dir.path(), "");
    for cmd in ["eval", "signs", "sweep-k", "transfer"] {
        let a = dir.path().join(format!("a-{cmd}"));
        let b = dir.path().join(format!("b-{cmd}"));
        for out in [&a, &b] {
            let o = signsel(&[cmd, "--config", s(&cfg), "--out", s(out)]);
            assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        }
        let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        names.retain(|n| n != "run.log");
        assert!(!names.is_empty());
        for n in names {
            assert_eq!(
                fs::read(a.join(&n)).unwrap(),
                fs::read(b.join(&n)).unwrap(),
                "{cmd}: {n:?}"
            );
        }
    }
}

#[test]
fn seed_flag_overrides_config() {
    let dir = TempDir::new().unwrap();
    let cfg = blobs_config(dir.path(), "");
    let out = dir.path().join("out");
    let o = signsel(&["eval", "--config", s(&cfg), "--seed", "9", "--out", s(&out)]);
    assert!(o.status.success());
    assert_eq!(read_json(&out.join("metrics.json"))["seed"], 9);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = blobs_config(dir.path(), r#", "learning_rate": 0.1"#);
    let out = dir.path().join("out");
    let o = signsel(&["eval", "--config", s(&cfg), "--out", s(&out)]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("learning_rate"));
    assert!(!out.exists());
}

#[test]
fn invalid_config_fails_before_any_work() {
    let dir = TempDir::new().unwrap();
    let cfg = blobs_config(dir.path(), "").to_str().unwrap().to_string();
    let text = fs::read_to_string(&cfg).unwrap().replace("\"k\": 4", "\"k\": 0");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    let o = signsel(&["eval", "--config", &cfg, "--out", s(&out)]);
    assert!(!o.status.success());
    assert!(!out.join("metrics.json").exists());
}

#[test]
fn failed_write_leaves_no_partial_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = blobs_config(dir.path(), "");
    let out = dir.path().join("out");
    // A directory where the second artifact should go makes its rename fail.
    fs::create_dir_all(out.join("metrics.csv")).unwrap();
    let o = signsel(&["eval", "--config", s(&cfg), "--out", s(&out)]);
    assert!(!o.status.success());
    let left: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "metrics.csv" && n != "run.log")
        .collect();
    assert!(left.is_empty(), "left behind: {left:?}");
}

#[test]
fn similarity_has_unit_diagonal() {
    let dir = TempDir::new().unwrap();
    let cfg = blobs_config(dir.path(), "");
    let out = dir.path().join("out");
    let o = signsel(&["similarity", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("similarity.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(2).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r.len(), 4);
        assert_eq!(r[i + 1], "1");
        for (j, v) in r[1..].iter().enumerate() {
            let x: f64 = v.parse().unwrap();
            assert!((0.0..=1.0).contains(&x));
            assert_eq!(v, &rows[j][i + 1]);
        }
    }
}

#[test]
fn one_shot_runs_end_to_end() {
    let dir = TempDir::new().unwrap();
    let cfg = blobs_config(dir.path(), r#", "labeled_per_class": 1"#);
    let out = dir.path().join("out");
    for cmd in ["eval", "sweep-unlabeled"] {
        let o = signsel(&[cmd, "--config", s(&cfg), "--out", s(&out)]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let m = read_json(&out.join("metrics.json"));
    assert_eq!(m["runs"].as_array().unwrap().len(), 3);
    let acc = m["mean_accuracy"].as_f64().unwrap();
    assert!(acc > 1.0 / 3.0, "one-shot accuracy {acc}");
    let sweep = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 2 + 5 * 3);
}

#[test]
fn large_csv_loads_with_matching_manifest() {
    let dir = TempDir::new().unwrap();
    let (rows, cols) = (100_000, 100);
    let mut text = String::with_capacity(rows * cols * 5);
    text.push_str("label");
    for j in 0..cols {
        text.push_str(&format!(",f{j}"));
    }
    text.push('\n');
    for i in 0..rows {
        text.push_str(if i % 4 == 0 { "a" } else { "b" });
        for j in 0..cols {
            text.push_str(&format!(",0.{}", (i * 7 + j * 13) % 1000));
        }
        text.push('\n');
    }
    let p = dir.path().join("big.csv");
    fs::write(&p, text).unwrap();
    let (f, labels, manifest) = ingest_csv(&p, "label").unwrap();
    assert_eq!((f.rows(), f.cols()), (rows, cols));
    assert_eq!(manifest.n_samples, rows);
    assert_eq!(manifest.n_features, cols);
    assert_eq!(labels.histogram(), vec![rows / 4, 3 * rows / 4]);
    assert!(manifest.matches(&f, &labels));
    // Row 3, column 2 was written as "0.47".
    assert_eq!(f.get(3, 2), 0.47);
}
