//! Command execution and artifact writing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use signsel::eval::{
    evaluate, mean_std, plan_transfer, sign_transfer_experiment, standard_transfer_settings, sweep_k, sweep_unlabeled,
    Experiment, MetricsReport, TransferSetting, DEFAULT_FRACTIONS,
};
use signsel::learn::estimate_class_signs;
use signsel::{class_similarity, FeatureMatrix, LabelVector, MulticlassModel, SymMatrix};

use crate::config::{DataConfig, RunConfig};
use crate::ingest::{ingest_csv, ingest_idx, DatasetManifest};

pub const DEFAULT_KS: [usize; 8] = [10, 20, 40, 60, 80, 100, 150, 200];

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Signs,
    Train,
    Predict,
    Eval,
    SweepUnlabeled,
    SweepK,
    Transfer,
    Similarity,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Signs => "signs",
            Command::Train => "train",
            Command::Predict => "predict",
            Command::Eval => "eval",
            Command::SweepUnlabeled => "sweep-unlabeled",
            Command::SweepK => "sweep-k",
            Command::Transfer => "transfer",
            Command::Similarity => "similarity",
        }
    }
}

pub struct Dataset {
    pub features: FeatureMatrix,
    pub labels: LabelVector,
    pub manifest: DatasetManifest,
}

/// Training data and, when configured, separate test data.
pub fn load_data(cfg: &RunConfig) -> Result<(Dataset, Option<Dataset>)> {
    let ds = |(features, labels, manifest)| Dataset {
        features,
        labels,
        manifest,
    };
    Ok(match &cfg.data {
        DataConfig::Csv {
            train,
            test,
            label_column,
        } => {
            let tr = ds(ingest_csv(train, label_column)?);
            let te = test.as_ref().map(|t| ingest_csv(t, label_column)).transpose()?.map(ds);
            (tr, te)
        }
        DataConfig::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            center_crop,
        } => (
            ds(ingest_idx(train_images, train_labels, *center_crop)?),
            Some(ds(ingest_idx(test_images, test_labels, *center_crop)?)),
        ),
    })
}

/// Scales both sets with statistics of the training features. Without test
/// data the training set doubles as test set.
pub fn build_experiment(cfg: &RunConfig, train: Dataset, test: Option<Dataset>) -> Result<(Experiment, Value)> {
    let test_ref = test.as_ref().unwrap_or(&train);
    let exp = Experiment::new(
        &train.features,
        train.labels.clone(),
        &test_ref.features,
        test_ref.labels.clone(),
        cfg.scaling,
    )?;
    let manifests = json!({
        "train": train.manifest.clone().with_scaling(exp.scaling()),
        "test": test.as_ref().map(|t| t.manifest.clone().with_scaling(exp.scaling())),
    });
    Ok((exp, manifests))
}

struct Stamp<'a> {
    seed: u64,
    hash: &'a str,
    command: Command,
}

impl Stamp<'_> {
    fn json(&self, payload: impl Serialize) -> Result<String> {
        let mut v = json!({
            "command": self.command.name(),
            "seed": self.seed,
            "config_hash": self.hash,
        });
        let body = serde_json::to_value(payload)?;
        match body {
            Value::Object(m) => v.as_object_mut().unwrap().extend(m),
            other => {
                v["result"] = other;
            }
        }
        Ok(serde_json::to_string_pretty(&v)? + "\n")
    }

    fn csv(&self, body: &str) -> String {
        format!("# seed={} config_hash={}\n{body}", self.seed, self.hash)
    }
}

/// Runs one command and writes its artifacts into `out`. Returns the files
/// written. On failure nothing from this run is left behind.
pub fn run(command: Command, cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let hash = cfg.hash();
    let stamp = Stamp {
        seed: cfg.seed,
        hash: &hash,
        command,
    };
    let result = produce(command, cfg, out, &stamp).and_then(|files| write_all(out, &files));
    log_line(out, &stamp, result.as_ref().err());
    result
}

fn produce(command: Command, cfg: &RunConfig, out: &Path, st: &Stamp) -> Result<Vec<(String, String)>> {
    let (train, test) = load_data(cfg)?;
    match command {
        Command::Predict => {
            let mm = load_model(cfg, out)?;
            let test = test.unwrap_or(train);
            return Ok(vec![("predictions.csv".into(), st.csv(&predictions_csv(&mm, &test)?))]);
        }
        Command::Eval if cfg.model.is_some() => {
            let mm = load_model(cfg, out)?;
            let test = test.unwrap_or(train);
            let r = evaluate(&mm, &test.features, &test.labels)?;
            return Ok(metrics_files(st, &[r], None));
        }
        _ => {}
    }

    let (exp, manifests) = build_experiment(cfg, train, test)?;
    let ecfg = cfg.experiment_config();
    let manifest = ("manifest.json".to_string(), st.json(&manifests)?);
    let mut files = match command {
        Command::Signs | Command::Similarity => {
            ecfg.validate(exp.n_features())?;
            let set = exp.training_set(&ecfg, cfg.seed)?;
            let signs = estimate_class_signs(&set, cfg.flip_rule)?;
            if command == Command::Signs {
                vec![("signs.json".into(), st.json(json!({ "classes": signs }))?)]
            } else {
                let sim = class_similarity(&signs)?;
                let csv = similarity_csv(exp.train_labels().classes(), &sim);
                vec![("similarity.csv".into(), st.csv(&csv))]
            }
        }
        Command::Train => {
            let r = exp.run(&ecfg, cfg.seed, &BTreeMap::new())?;
            vec![("model.json".into(), st.json(json!({ "model": r.model }))?)]
        }
        Command::Eval => {
            ecfg.validate(exp.n_features())?;
            let mut reports = Vec::new();
            let mut baseline = Vec::new();
            for seed in ecfg.seeds() {
                let r = exp.run(&ecfg, seed, &BTreeMap::new())?;
                reports.push(r.metrics);
                baseline.push(r.baseline_accuracy);
            }
            metrics_files(st, &reports, Some(&baseline))
        }
        Command::SweepUnlabeled => {
            let fr = cfg.sweep.fractions.clone().unwrap_or(DEFAULT_FRACTIONS.to_vec());
            let s = sweep_unlabeled(&exp, &ecfg, &fr)?;
            vec![
                ("sweep.csv".into(), st.csv(&s.to_csv())),
                ("sweep.json".into(), st.json(&s)?),
            ]
        }
        Command::SweepK => {
            let ks = match &cfg.sweep.ks {
                Some(ks) => ks.clone(),
                None => DEFAULT_KS.iter().copied().filter(|&k| k <= exp.n_features()).collect(),
            };
            let s = sweep_k(&exp, &ecfg, &ks)?;
            vec![
                ("sweep.csv".into(), st.csv(&s.to_csv())),
                ("sweep.json".into(), st.json(&s)?),
            ]
        }
        Command::Transfer => {
            let settings = match &cfg.transfer {
                None => standard_transfer_settings(&exp, cfg.flip_rule)?,
                Some(t) => planned_settings(&exp, cfg, &t.borrowed)?,
            };
            let t = sign_transfer_experiment(&exp, &ecfg, &settings)?;
            vec![
                ("transfer.csv".into(), st.csv(&t.to_csv())),
                ("transfer.json".into(), st.json(&t)?),
            ]
        }
        Command::Predict => unreachable!("handled above"),
    };
    files.push(manifest);
    Ok(files)
}

fn planned_settings(exp: &Experiment, cfg: &RunConfig, borrowed: &[usize]) -> Result<Vec<TransferSetting>> {
    let sim = class_similarity(&exp.reference_signs(cfg.flip_rule)?)?;
    let classes = exp.train_labels().classes();
    borrowed
        .iter()
        .map(|&b| {
            Ok(TransferSetting {
                name: format!("{}_own_{b}_borrowed", classes.len().saturating_sub(b)),
                borrow: plan_transfer(classes, &sim, b)?,
            })
        })
        .collect()
}

fn load_model(cfg: &RunConfig, out: &Path) -> Result<MulticlassModel> {
    let path = cfg.model.clone().unwrap_or_else(|| out.join("model.json"));
    let text = fs::read_to_string(&path).with_context(|| format!("reading model {}", path.display()))?;
    let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let inner = v.get("model").unwrap_or(&v);
    Ok(MulticlassModel::from_json(&inner.to_string())?)
}

fn predictions_csv(mm: &MulticlassModel, test: &Dataset) -> Result<String> {
    let scores = mm.score_matrix(&test.features)?;
    let classes = mm.classes();
    let mut out = String::from("index,label,predicted");
    for c in &classes {
        write!(out, ",score_{c}")?;
    }
    out.push('\n');
    for (i, s) in scores.iter().enumerate() {
        let best = (1..s.len()).fold(0, |b, j| if s[j] > s[b] { j } else { b });
        write!(out, "{i},{},{}", test.labels.label(i), classes[best])?;
        for v in s {
            write!(out, ",{v}")?;
        }
        out.push('\n');
    }
    Ok(out)
}

fn similarity_csv(classes: &[String], sim: &SymMatrix) -> String {
    let mut out = String::from("class");
    for c in classes {
        write!(out, ",{c}").unwrap();
    }
    out.push('\n');
    for (i, c) in classes.iter().enumerate() {
        out.push_str(c);
        for v in sim.row(i) {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

fn metrics_files(st: &Stamp, reports: &[MetricsReport], baseline: Option<&[f64]>) -> Vec<(String, String)> {
    let acc: Vec<f64> = reports.iter().map(|r| r.overall_accuracy).collect();
    let (mean, std) = mean_std(&acc);
    let summary = json!({
        "mean_accuracy": mean,
        "std_accuracy": std,
        "baseline_mean_accuracy": baseline.map(|b| mean_std(b).0),
        "runs": reports,
    });
    let mut csv = String::from("seed,class,n_test,correct,accuracy\n");
    for r in reports {
        let seed = r.run_seed.map(|s| s.to_string()).unwrap_or_default();
        for line in r.to_csv().lines().skip(1) {
            writeln!(csv, "{seed},{line}").unwrap();
        }
    }
    vec![
        ("metrics.json".into(), st.json(summary).expect("metrics serialize")),
        ("metrics.csv".into(), st.csv(&csv)),
    ]
}

fn write_all(out: &Path, files: &[(String, String)]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut written = Vec::new();
    for (name, body) in files {
        let path = out.join(name);
        let tmp = out.join(format!(".{name}.partial"));
        let res = fs::write(&tmp, body).and_then(|_| fs::rename(&tmp, &path));
        if let Err(e) = res {
            let _ = fs::remove_file(&tmp);
            for p in &written {
                let _ = fs::remove_file(p);
            }
            bail!("writing {}: {e}", path.display());
        }
        written.push(path);
    }
    Ok(written)
}

/// Timestamps live only here, never in the artifacts.
fn log_line(out: &Path, st: &Stamp, err: Option<&anyhow::Error>) {
    let Ok(()) = fs::create_dir_all(out) else { return };
    let ts = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let status = match err {
        None => "ok".to_string(),
        Some(e) => format!("error: {e:#}").replace('\n', " "),
    };
    if let Ok(mut f) = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(out.join("run.log"))
    {
        let _ = writeln!(
            f,
            "{ts} {} seed={} config_hash={} {status}",
            st.command.name(),
            st.seed,
            st.hash
        );
    }
}
