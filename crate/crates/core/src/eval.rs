//! Metrics and seeded experiment procedures: repeated runs, sweeps over the
//! unlabeled fraction, `k` and the labeled count, and sign transfer.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ClassId, FeatureMatrix, LabelVector, Scaling, ScalingKind, SymMatrix};
use crate::error::{Error, Result};
use crate::learn::{
    argmax, equal_weight_baseline, estimate_class_signs, fit_multiclass_with_pool, FitConfig, LearningMode,
    MulticlassModel, PoolGram, PoolPolicy, TrainingSet,
};
use crate::signs::{class_similarity, sign_accuracy, FlipRule};

pub const DEFAULT_REPEATS: usize = 30;
pub const DEFAULT_FRACTIONS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall_accuracy: f64,
    /// Only classes that occur in the test labels.
    pub per_class_accuracy: BTreeMap<ClassId, f64>,
    /// Class order of the confusion matrix (the model's order).
    pub classes: Vec<ClassId>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub n_test: usize,
    pub run_seed: Option<u64>,
}

impl MetricsReport {
    fn from_predictions(classes: Vec<ClassId>, truth: &[usize], pred: &[usize], seed: Option<u64>) -> Self {
        let c = classes.len();
        let mut confusion = vec![vec![0usize; c]; c];
        for (&t, &p) in truth.iter().zip(pred) {
            confusion[t][p] += 1;
        }
        let correct: usize = (0..c).map(|i| confusion[i][i]).sum();
        let per_class_accuracy = classes
            .iter()
            .enumerate()
            .filter_map(|(i, id)| {
                let total: usize = confusion[i].iter().sum();
                (total > 0).then(|| (id.clone(), confusion[i][i] as f64 / total as f64))
            })
            .collect();
        Self {
            overall_accuracy: correct as f64 / truth.len() as f64,
            per_class_accuracy,
            classes,
            confusion,
            n_test: truth.len(),
            run_seed: seed,
        }
    }

    /// Test samples per class, in `classes` order.
    pub fn class_counts(&self) -> Vec<usize> {
        self.confusion.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `class,n_test,correct,accuracy` rows followed by an `overall` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,n_test,correct,accuracy\n");
        for (i, c) in self.classes.iter().enumerate() {
            let n: usize = self.confusion[i].iter().sum();
            if n == 0 {
                continue;
            }
            let acc = self.per_class_accuracy[c];
            writeln!(out, "{c},{n},{},{acc}", self.confusion[i][i]).unwrap();
        }
        let correct: usize = (0..self.classes.len()).map(|i| self.confusion[i][i]).sum();
        writeln!(out, "overall,{},{correct},{}", self.n_test, self.overall_accuracy).unwrap();
        out
    }
}

/// Accuracy of `mm` on raw test samples.
pub fn evaluate(mm: &MulticlassModel, f_test: &FeatureMatrix, labels_test: &LabelVector) -> Result<MetricsReport> {
    if f_test.cols() != mm.n_features() {
        return Err(Error::dim(format!(
            "test data has {} features, model has {}",
            f_test.cols(),
            mm.n_features()
        )));
    }
    let scaled = mm.scaling.apply(f_test)?;
    evaluate_scaled(mm, &scaled, labels_test, None)
}

fn evaluate_scaled(
    mm: &MulticlassModel,
    scaled: &FeatureMatrix,
    labels: &LabelVector,
    seed: Option<u64>,
) -> Result<MetricsReport> {
    if scaled.rows() != labels.len() {
        return Err(Error::dim(format!(
            "{} test samples but {} labels",
            scaled.rows(),
            labels.len()
        )));
    }
    let classes: Vec<ClassId> = mm.classes().into_iter().map(String::from).collect();
    let by_name: HashMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let truth = (0..labels.len())
        .map(|i| {
            let l = labels.label(i);
            by_name
                .get(l)
                .copied()
                .ok_or_else(|| Error::input(format!("test label {l:?} is not a model class")))
        })
        .collect::<Result<Vec<_>>>()?;
    let pred = (0..scaled.rows())
        .into_par_iter()
        .map(|i| {
            let row = scaled.row(i);
            let scores = mm
                .models
                .iter()
                .map(|m| m.score_scaled(row))
                .collect::<Result<Vec<_>>>()?;
            Ok(argmax(&scores))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport::from_predictions(classes, &truth, &pred, seed))
}

/// Where the unlabeled pool of a run comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnlabeledSource {
    None,
    /// The test samples, labels unused.
    Test,
    /// Every training sample, labels unused.
    Train,
}

/// Settings shared by every run of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub fit: FitConfig,
    /// Labeled training samples drawn per class; `None` uses all of them.
    pub labeled_per_class: Option<usize>,
    pub unlabeled: UnlabeledSource,
    /// Share of the unlabeled source kept in each run.
    pub unlabeled_fraction: f64,
    pub repeats: usize,
    pub base_seed: u64,
}

impl ExperimentConfig {
    pub fn new(fit: FitConfig, base_seed: u64) -> Self {
        Self {
            fit,
            labeled_per_class: None,
            unlabeled: UnlabeledSource::None,
            unlabeled_fraction: 1.0,
            repeats: DEFAULT_REPEATS,
            base_seed,
        }
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::input("repeats must be at least 1"));
        }
        if self.labeled_per_class == Some(0) {
            return Err(Error::input("labeled-per-class must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.unlabeled_fraction) {
            return Err(Error::input(format!(
                "unlabeled fraction {} outside [0, 1]",
                self.unlabeled_fraction
            )));
        }
        if self.fit.k == 0 || self.fit.k > n_features {
            return Err(Error::Domain(format!("k = {} with n = {n_features}", self.fit.k)));
        }
        Ok(())
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.repeats as u64).map(|i| self.base_seed.wrapping_add(i))
    }
}

/// Train and test data scaled once with statistics of the training features.
#[derive(Debug)]
pub struct Experiment {
    train: Arc<FeatureMatrix>,
    train_labels: LabelVector,
    test: Arc<FeatureMatrix>,
    test_labels: LabelVector,
    scaling: Scaling,
    pools: Mutex<HashMap<(UnlabeledSource, FlipRule), Arc<PoolGram>>>,
}

impl Experiment {
    pub fn new(
        train_raw: &FeatureMatrix,
        train_labels: LabelVector,
        test_raw: &FeatureMatrix,
        test_labels: LabelVector,
        kind: ScalingKind,
    ) -> Result<Self> {
        let (train, scaling) = Scaling::fit(kind, train_raw)?;
        let test = scaling.apply(test_raw)?;
        Self::from_scaled(train, train_labels, test, test_labels, scaling)
    }

    pub fn from_scaled(
        train: FeatureMatrix,
        train_labels: LabelVector,
        test: FeatureMatrix,
        test_labels: LabelVector,
        scaling: Scaling,
    ) -> Result<Self> {
        if train.cols() != test.cols() {
            return Err(Error::dim(format!(
                "train has {} features, test has {}",
                train.cols(),
                test.cols()
            )));
        }
        if train.rows() != train_labels.len() || test.rows() != test_labels.len() {
            return Err(Error::dim("sample and label counts differ"));
        }
        Ok(Self {
            train: Arc::new(train),
            train_labels,
            test: Arc::new(test),
            test_labels,
            scaling,
            pools: Mutex::new(HashMap::new()),
        })
    }

    pub fn n_features(&self) -> usize {
        self.train.cols()
    }

    pub fn scaling(&self) -> &Scaling {
        &self.scaling
    }

    pub fn train_labels(&self) -> &LabelVector {
        &self.train_labels
    }

    pub fn test_labels(&self) -> &LabelVector {
        &self.test_labels
    }

    fn source(&self, s: UnlabeledSource) -> Option<&Arc<FeatureMatrix>> {
        match s {
            UnlabeledSource::None => None,
            UnlabeledSource::Test => Some(&self.test),
            UnlabeledSource::Train => Some(&self.train),
        }
    }

    /// Gram of a whole unlabeled source, built once.
    fn cached_pool(&self, s: UnlabeledSource, rule: FlipRule) -> Result<Arc<PoolGram>> {
        let key = (s, rule);
        if let Some(p) = self.pools.lock().unwrap().get(&key) {
            return Ok(p.clone());
        }
        let src = self.source(s).expect("caller checked the source").clone();
        let p = Arc::new(PoolGram::shared(src, rule)?);
        self.pools.lock().unwrap().insert(key, p.clone());
        Ok(p)
    }

    /// Training set of one run: a stratified labeled draw plus a uniform
    /// subsample of the unlabeled source.
    pub fn training_set(&self, cfg: &ExperimentConfig, seed: u64) -> Result<TrainingSet> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let idx = match cfg.labeled_per_class {
            None => (0..self.train_labels.len()).collect(),
            Some(m) => stratified_sample(&self.train_labels, m, &mut rng)?,
        };
        let labeled = self.train.select_rows(&idx)?;
        let labels = self.train_labels.select(&idx)?;
        let unlabeled = match self.source(cfg.unlabeled) {
            None if cfg.fit.mode == LearningMode::Unsupervised && cfg.fit.pool == PoolPolicy::UnlabeledOnly => {
                return Err(Error::input("an unlabeled-only pool needs an unlabeled source"));
            }
            None => None,
            Some(_) if cfg.unlabeled_fraction == 0.0 => None,
            Some(src) if cfg.unlabeled_fraction == 1.0 => Some(src.clone()),
            Some(src) => {
                let m = (cfg.unlabeled_fraction * src.rows() as f64).round() as usize;
                if m == 0 {
                    return Err(Error::input(format!(
                        "unlabeled fraction {} of {} samples is an empty pool",
                        cfg.unlabeled_fraction,
                        src.rows()
                    )));
                }
                let mut rows = index::sample(&mut rng, src.rows(), m).into_vec();
                rows.sort_unstable();
                Some(Arc::new(src.select_rows(&rows)?))
            }
        };
        TrainingSet::from_scaled(labeled, labels, unlabeled, self.scaling.clone())
    }

    /// Fits and evaluates one seeded run.
    pub fn run(&self, cfg: &ExperimentConfig, seed: u64, borrow: &BTreeMap<ClassId, ClassId>) -> Result<RunOutcome> {
        cfg.validate(self.n_features())?;
        let set = self.training_set(cfg, seed)?;
        let cached = if cfg.fit.mode == LearningMode::Unsupervised
            && cfg.fit.pool == PoolPolicy::UnlabeledOnly
            && cfg.unlabeled_fraction == 1.0
            && cfg.unlabeled != UnlabeledSource::None
        {
            Some(self.cached_pool(cfg.unlabeled, cfg.fit.flip_rule)?)
        } else {
            None
        };
        let model = fit_multiclass_with_pool(&set, &cfg.fit, borrow, cached.as_deref())?;
        let metrics = evaluate_scaled(&model, &self.test, &self.test_labels, Some(seed))?;
        let baseline = equal_weight_baseline(&set, &cfg.fit)?;
        let baseline_accuracy = evaluate_scaled(&baseline, &self.test, &self.test_labels, Some(seed))?.overall_accuracy;
        Ok(RunOutcome {
            model,
            metrics,
            baseline_accuracy,
        })
    }

    /// All repeats of `cfg`, in seed order.
    pub fn repeat(&self, cfg: &ExperimentConfig, borrow: &BTreeMap<ClassId, ClassId>) -> Result<Vec<RunRecord>> {
        cfg.validate(self.n_features())?;
        cfg.seeds()
            .map(|seed| {
                let r = self.run(cfg, seed, borrow)?;
                Ok(RunRecord {
                    seed,
                    accuracy: r.metrics.overall_accuracy,
                    baseline_accuracy: Some(r.baseline_accuracy),
                })
            })
            .collect()
    }

    /// Own signs of every class from all labeled training samples.
    pub fn reference_signs(&self, rule: FlipRule) -> Result<Vec<crate::signs::SignVector>> {
        let set = TrainingSet::from_scaled(
            FeatureMatrix::clone(&self.train),
            self.train_labels.clone(),
            None,
            self.scaling.clone(),
        )?;
        estimate_class_signs(&set, rule)
    }
}

/// Draws `per_class` indices of every class without replacement, sorted.
pub fn stratified_sample(labels: &LabelVector, per_class: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (c, members) in labels.indices_by_class().iter().enumerate() {
        if members.len() < per_class {
            return Err(Error::InsufficientLabels(format!(
                "class {} has {} samples, {per_class} requested",
                labels.classes()[c],
                members.len()
            )));
        }
        out.extend(index::sample(rng, members.len(), per_class).iter().map(|i| members[i]));
    }
    out.sort_unstable();
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub model: MulticlassModel,
    pub metrics: MetricsReport,
    pub baseline_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub accuracy: f64,
    pub baseline_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    UnlabeledFraction,
    K,
    LabeledCount,
}

impl SweepAxis {
    fn name(self) -> &'static str {
        match self {
            SweepAxis::UnlabeledFraction => "unlabeled_fraction",
            SweepAxis::K => "k",
            SweepAxis::LabeledCount => "labeled_count",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    /// Equal weights over all flipped features, same signs and seeds.
    pub baseline_mean_accuracy: Option<f64>,
    pub runs: Vec<RunRecord>,
}

impl SweepPoint {
    fn new(value: f64, runs: Vec<RunRecord>) -> Self {
        let acc: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
        let base: Option<Vec<f64>> = runs.iter().map(|r| r.baseline_accuracy).collect();
        let (mean_accuracy, std_accuracy) = mean_std(&acc);
        Self {
            value,
            mean_accuracy,
            std_accuracy,
            baseline_mean_accuracy: base.map(|b| mean_std(&b).0),
            runs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
    pub repeats: usize,
}

impl SweepResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep serializes")
    }

    /// One row per point and repeat.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("axis,value,repeat,seed,accuracy,baseline_accuracy\n");
        for p in &self.points {
            for (i, r) in p.runs.iter().enumerate() {
                let base = r.baseline_accuracy.map(|b| b.to_string()).unwrap_or_default();
                writeln!(
                    out,
                    "{},{},{i},{},{},{base}",
                    self.axis.name(),
                    p.value,
                    r.seed,
                    r.accuracy
                )
                .unwrap();
            }
        }
        out
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn sorted_points(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::input("sweep needs at least one point"));
    }
    let mut v = values.to_vec();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::input("sweep values must be finite"));
    }
    v.sort_by(f64::total_cmp);
    if v.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::input("duplicate sweep values"));
    }
    Ok(v)
}

fn sweep(
    exp: &Experiment,
    axis: SweepAxis,
    values: &[f64],
    point_cfg: impl Fn(f64) -> Result<ExperimentConfig>,
) -> Result<SweepResult> {
    let values = sorted_points(values)?;
    let cfgs = values.iter().map(|&v| point_cfg(v)).collect::<Result<Vec<_>>>()?;
    for c in &cfgs {
        c.validate(exp.n_features())?;
    }
    let points = values
        .iter()
        .zip(&cfgs)
        .map(|(&v, c)| Ok(SweepPoint::new(v, exp.repeat(c, &BTreeMap::new())?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        axis,
        points,
        repeats: cfgs[0].repeats,
    })
}

/// Unsupervised fits on the labeled samples plus a seeded uniform share of
/// the unlabeled source.
pub fn sweep_unlabeled(exp: &Experiment, cfg: &ExperimentConfig, fractions: &[f64]) -> Result<SweepResult> {
    if cfg.unlabeled == UnlabeledSource::None && fractions.iter().any(|&f| f > 0.0) {
        return Err(Error::input("empty unlabeled pool at a nonzero fraction"));
    }
    sweep(exp, SweepAxis::UnlabeledFraction, fractions, |f| {
        let mut c = cfg.clone();
        c.fit.mode = LearningMode::Unsupervised;
        c.fit.pool = PoolPolicy::LabeledPlusUnlabeled;
        c.unlabeled_fraction = f;
        Ok(c)
    })
}

pub fn sweep_k(exp: &Experiment, cfg: &ExperimentConfig, ks: &[usize]) -> Result<SweepResult> {
    let n = exp.n_features();
    if let Some(k) = ks.iter().find(|&&k| k == 0 || k > n) {
        return Err(Error::Domain(format!("sweep point k = {k} with n = {n}")));
    }
    let values: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    sweep(exp, SweepAxis::K, &values, |k| {
        let mut c = cfg.clone();
        c.fit.k = k as usize;
        Ok(c)
    })
}

pub fn sweep_labeled(exp: &Experiment, cfg: &ExperimentConfig, counts: &[usize]) -> Result<SweepResult> {
    if counts.contains(&0) {
        return Err(Error::input("labeled count must be at least 1"));
    }
    let values: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    sweep(exp, SweepAxis::LabeledCount, &values, |m| {
        let mut c = cfg.clone();
        c.labeled_per_class = Some(m as usize);
        Ok(c)
    })
}

/// Mean agreement between signs estimated from `m` labeled samples per class
/// and the signs from every labeled sample, one point per count.
pub fn sign_accuracy_sweep(exp: &Experiment, cfg: &ExperimentConfig, counts: &[usize]) -> Result<SweepResult> {
    let values = sorted_points(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>())?;
    if counts.contains(&0) || cfg.repeats == 0 {
        return Err(Error::input("labeled count and repeats must be at least 1"));
    }
    let reference = exp.reference_signs(cfg.fit.flip_rule)?;
    let points = values
        .iter()
        .map(|&m| {
            let mut c = cfg.clone();
            c.labeled_per_class = Some(m as usize);
            c.unlabeled = UnlabeledSource::None;
            c.fit.pool = PoolPolicy::LabeledOnly;
            let runs = c
                .seeds()
                .map(|seed| {
                    let set = exp.training_set(&c, seed)?;
                    let est = estimate_class_signs(&set, c.fit.flip_rule)?;
                    let mut total = 0.0;
                    for (e, r) in est.iter().zip(&reference) {
                        total += sign_accuracy(e, r)?;
                    }
                    let acc = total / est.len() as f64;
                    Ok(RunRecord {
                        seed,
                        accuracy: acc,
                        baseline_accuracy: None,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepPoint::new(m, runs))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        axis: SweepAxis::LabeledCount,
        points,
        repeats: cfg.repeats,
    })
}

/// Which classes use another class's signs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSetting {
    pub name: String,
    /// target class → class whose signs it uses
    pub borrow: BTreeMap<ClassId, ClassId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub name: String,
    pub own: usize,
    pub borrowed: usize,
    pub borrow: BTreeMap<ClassId, ClassId>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub runs: Vec<RunRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferTable {
    pub rows: Vec<TransferRow>,
    pub repeats: usize,
}

impl TransferTable {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("setting,own,borrowed,repeat,seed,accuracy\n");
        for row in &self.rows {
            for (i, r) in row.runs.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{i},{},{}",
                    row.name, row.own, row.borrowed, r.seed, r.accuracy
                )
                .unwrap();
            }
        }
        out
    }
}

/// Borrowing plan for `n_borrowed` classes. Classes whose closest other class
/// is most similar borrow first, each from its most similar non-borrowing
/// class; ties go to the earlier class.
pub fn plan_transfer(
    classes: &[ClassId],
    similarity: &SymMatrix,
    n_borrowed: usize,
) -> Result<BTreeMap<ClassId, ClassId>> {
    let c = classes.len();
    if similarity.dim() != c {
        return Err(Error::dim(format!(
            "{c} classes, similarity is {}x{}",
            similarity.dim(),
            similarity.dim()
        )));
    }
    if n_borrowed >= c {
        return Err(Error::input(format!(
            "{n_borrowed} borrowing classes leaves no class with its own signs"
        )));
    }
    let nearest = |i: usize| {
        (0..c)
            .filter(|&j| j != i)
            .map(|j| similarity.get(i, j))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| nearest(b).total_cmp(&nearest(a)).then(a.cmp(&b)));
    let borrowers: Vec<usize> = order[..n_borrowed].to_vec();
    let mut plan = BTreeMap::new();
    for &i in &borrowers {
        let src = (0..c)
            .filter(|j| !borrowers.contains(j))
            .fold(None::<usize>, |best, j| match best {
                Some(b) if similarity.get(i, b) >= similarity.get(i, j) => Some(b),
                _ => Some(j),
            })
            .expect("at least one own class");
        plan.insert(classes[i].clone(), classes[src].clone());
    }
    Ok(plan)
}

/// The three standard settings: all own signs, 40% borrowed, 60% borrowed,
/// planned from sign similarity on all labeled training data.
pub fn standard_transfer_settings(exp: &Experiment, rule: FlipRule) -> Result<Vec<TransferSetting>> {
    let signs = exp.reference_signs(rule)?;
    let sim = class_similarity(&signs)?;
    let classes = exp.train_labels().classes();
    let c = classes.len();
    if c < 2 {
        return Err(Error::InsufficientLabels(
            "sign transfer needs at least two classes".into(),
        ));
    }
    let mut counts = vec![0, (c * 4 + 5) / 10, (c * 6 + 5) / 10];
    counts.iter_mut().for_each(|b| *b = (*b).min(c - 1));
    counts.dedup();
    counts
        .into_iter()
        .map(|b| {
            Ok(TransferSetting {
                name: if b == 0 {
                    "all_own".into()
                } else {
                    format!("{}_own_{b}_borrowed", c - b)
                },
                borrow: plan_transfer(classes, &sim, b)?,
            })
        })
        .collect()
}

/// Multiclass accuracy per borrowing setting over the seeded repeats.
pub fn sign_transfer_experiment(
    exp: &Experiment,
    cfg: &ExperimentConfig,
    settings: &[TransferSetting],
) -> Result<TransferTable> {
    let classes = exp.train_labels().classes();
    if classes.len() < 2 {
        return Err(Error::InsufficientLabels(
            "sign transfer needs at least two classes".into(),
        ));
    }
    for s in settings {
        for (t, src) in &s.borrow {
            for c in [t, src] {
                if !classes.contains(c) {
                    return Err(Error::input(format!("unknown class {c:?} in setting {}", s.name)));
                }
            }
        }
    }
    let rows = settings
        .iter()
        .map(|s| {
            let runs = exp.repeat(cfg, &s.borrow)?;
            let acc: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
            let (mean_accuracy, std_accuracy) = mean_std(&acc);
            let borrowed = s.borrow.iter().filter(|(t, src)| t != src).count();
            Ok(TransferRow {
                name: s.name.clone(),
                own: classes.len() - borrowed,
                borrowed,
                borrow: s.borrow.clone(),
                mean_accuracy,
                std_accuracy,
                runs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TransferTable {
        rows,
        repeats: cfg.repeats,
    })
}

/// Synthetic data for checking the learner's statistical claims.
pub mod synthetic {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    use crate::data::{FeatureMatrix, LabelVector};
    use crate::error::{Error, Result};

    /// Empirical error of the equal-weight average of `n` independent
    /// features distributed `N(mu_p, sigma²)` on positives and
    /// `N(mu_n, sigma²)` on negatives, thresholded at the midpoint.
    /// Uses `samples` draws per class.
    pub fn equal_weight_error(n: usize, mu_p: f64, mu_n: f64, sigma: f64, samples: usize, seed: u64) -> Result<f64> {
        if n == 0 || samples == 0 || sigma.is_nan() || sigma <= 0.0 || mu_p.is_nan() || mu_n.is_nan() || mu_p <= mu_n {
            return Err(Error::input("need n, samples ≥ 1, sigma > 0 and mu_p > mu_n"));
        }
        let theta = 0.5 * (mu_p + mu_n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pos = Normal::new(mu_p, sigma).expect("valid normal");
        let neg = Normal::new(mu_n, sigma).expect("valid normal");
        let mut errors = 0usize;
        for _ in 0..samples {
            let s: f64 = pos.sample_iter(&mut rng).take(n).sum::<f64>() / n as f64;
            errors += usize::from(s <= theta);
            let s: f64 = neg.sample_iter(&mut rng).take(n).sum::<f64>() / n as f64;
            errors += usize::from(s > theta);
        }
        Ok(errors as f64 / (2 * samples) as f64)
    }

    /// `Σw² / (Σw)²`, the ensemble variance relative to one feature's for
    /// independent equal-variance features.
    pub fn variance_ratio(w: &[f64]) -> f64 {
        let s: f64 = w.iter().sum();
        w.iter().map(|x| x * x).sum::<f64>() / (s * s)
    }

    /// Gaussian classes in `[0,1]`-ish feature space: feature `j` of class
    /// `c` has mean `0.5 ± delta` (random side per class and feature) and
    /// standard deviation `sigma`. Rows are grouped by class.
    pub fn class_blobs(
        classes: usize,
        n: usize,
        per_class: usize,
        delta: f64,
        sigma: f64,
        seed: u64,
    ) -> Result<(FeatureMatrix, LabelVector)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let means: Vec<Vec<f64>> = (0..classes)
            .map(|_| {
                (0..n)
                    .map(|_| if rng.random::<bool>() { 0.5 + delta } else { 0.5 - delta })
                    .collect()
            })
            .collect();
        let noise = Normal::new(0.0, sigma).map_err(|e| Error::input(e.to_string()))?;
        let mut data = Vec::with_capacity(classes * per_class * n);
        let mut labels = Vec::with_capacity(classes * per_class);
        for (c, mu) in means.iter().enumerate() {
            for _ in 0..per_class {
                data.extend(mu.iter().map(|m| m + noise.sample(&mut rng)));
                labels.push(c.to_string());
            }
        }
        Ok((
            FeatureMatrix::new(classes * per_class, n, data)?,
            LabelVector::from_labels(&labels)?,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::fit_multiclass;

    fn labels(v: &[&str]) -> LabelVector {
        LabelVector::from_labels(v).unwrap()
    }

    #[test]
    fn report_from_predictions() {
        let classes: Vec<ClassId> = vec!["a".into(), "b".into(), "c".into()];
        let perfect = MetricsReport::from_predictions(classes.clone(), &[0, 1, 2, 1], &[0, 1, 2, 1], None);
        assert_eq!(perfect.overall_accuracy, 1.0);
        assert_eq!(perfect.confusion, vec![vec![1, 0, 0], vec![0, 2, 0], vec![0, 0, 1]]);

        let constant = MetricsReport::from_predictions(classes.clone(), &[0, 1, 2, 0, 1, 2], &[1; 6], None);
        assert!((constant.overall_accuracy - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(constant.per_class_accuracy["b"], 1.0);
        assert_eq!(constant.per_class_accuracy["a"], 0.0);

        let r = MetricsReport::from_predictions(classes, &[0, 1, 2], &[0, 1, 0], Some(7));
        assert_eq!(r.overall_accuracy, 2.0 / 3.0);
        assert_eq!(r.class_counts(), vec![1, 1, 1]);
        assert_eq!(r.run_seed, Some(7));
        assert_eq!(
            r.to_csv(),
            "class,n_test,correct,accuracy\na,1,1,1\nb,1,1,1\nc,1,0,0\noverall,3,2,0.6666666666666666\n"
        );
    }

    #[test]
    fn evaluate_checks_dims_and_labels() {
        let f = FeatureMatrix::from_rows(&[[0.9, 0.1], [0.1, 0.9], [0.8, 0.2], [0.2, 0.8]]).unwrap();
        let l = labels(&["a", "b", "a", "b"]);
        let set = TrainingSet::new(&f, l.clone(), None, Scaling::UnitInterval).unwrap();
        let mut cfg = FitConfig::new(1, LearningMode::Supervised, FlipRule::OneMinus);
        cfg.pool = PoolPolicy::LabeledOnly;
        let mm = fit_multiclass(&set, &cfg).unwrap();
        let r = evaluate(&mm, &f, &l).unwrap();
        assert_eq!(r.overall_accuracy, 1.0);
        assert_eq!(r.n_test, 4);

        let wide = FeatureMatrix::from_rows(&[[0.5, 0.5, 0.5]]).unwrap();
        assert!(matches!(
            evaluate(&mm, &wide, &labels(&["a"])),
            Err(Error::Dimension(_))
        ));
        let one = FeatureMatrix::from_rows(&[[0.5, 0.5]]).unwrap();
        assert!(matches!(evaluate(&mm, &one, &labels(&["z"])), Err(Error::Input(_))));
    }

    #[test]
    fn mean_std_sample() {
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn stratified_draws_are_balanced_and_seeded() {
        let l = labels(&["0", "1", "0", "1", "0", "1", "2", "2"]);
        let a = stratified_sample(&l, 2, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = stratified_sample(&l, 2, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
        let picked = l.select(&a).unwrap();
        assert_eq!(picked.histogram(), vec![2, 2, 2]);
        assert!(matches!(
            stratified_sample(&l, 3, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::InsufficientLabels(_))
        ));
    }

    #[test]
    fn transfer_plan_borrows_from_nearest_own_class() {
        let classes: Vec<ClassId> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let sim = SymMatrix::from_rows(&[vec![1.0, 0.9, 0.1], vec![0.9, 1.0, 0.3], vec![0.1, 0.3, 1.0]]).unwrap();
        assert!(plan_transfer(&classes, &sim, 0).unwrap().is_empty());
        let p = plan_transfer(&classes, &sim, 1).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p["a"], "b");
        let p = plan_transfer(&classes, &sim, 2).unwrap();
        assert_eq!(p["a"], "c");
        assert_eq!(p["b"], "c");
        assert!(plan_transfer(&classes, &sim, 3).is_err());
    }

    #[test]
    fn sweep_values_sorted_and_unique() {
        assert_eq!(sorted_points(&[0.5, 0.0, 1.0]).unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(sorted_points(&[0.5, 0.5]).is_err());
        assert!(sorted_points(&[]).is_err());
    }

    #[test]
    fn variance_ratio_of_uniform() {
        assert!((synthetic::variance_ratio(&[0.25; 4]) - 0.25).abs() < 1e-15);
        assert!(synthetic::variance_ratio(&[0.4, 0.2, 0.2, 0.2]) > 0.25);
    }
}
