//! Objective construction, binary and one-vs-all model fitting, prediction.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    dot, gram, linear_term, ClassId, FeatureMatrix, LabelVector, Scaling, ScalingKind, SymMatrix, TargetVector, Targets,
};
use crate::error::{Error, Result};
use crate::optim::{ipfp_solve, CappedSimplex, QuadraticObjective, SelectionWeights, SolveReport, SolverOptions};
use crate::signs::{estimate_all_signs, estimate_signs, flip, FlipRule, SignProvenance, SignVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearningMode {
    /// Least squares against the labeled targets (convex).
    Supervised,
    /// Maximize `wᵀMw` over a pool of flipped samples (concave).
    Unsupervised,
}

/// Which samples form `M` in unsupervised mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolPolicy {
    LabeledOnly,
    LabeledPlusUnlabeled,
    UnlabeledOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub k: usize,
    pub mode: LearningMode,
    pub pool: PoolPolicy,
    pub flip_rule: FlipRule,
    pub targets: Targets,
    /// Decision threshold; defaults to the midpoint of the targets.
    pub threshold: Option<f64>,
    pub solver: SolverOptions,
}

impl FitConfig {
    pub fn new(k: usize, mode: LearningMode, flip_rule: FlipRule) -> Self {
        Self {
            k,
            mode,
            pool: PoolPolicy::LabeledPlusUnlabeled,
            flip_rule,
            targets: Targets::default(),
            threshold: None,
            solver: SolverOptions::default(),
        }
    }

    fn threshold(&self) -> Result<f64> {
        let t = self.threshold.unwrap_or_else(|| self.targets.midpoint());
        if !(self.targets.mu_n < t && t < self.targets.mu_p) {
            return Err(Error::input(format!(
                "threshold {t} must lie strictly between {} and {}",
                self.targets.mu_n, self.targets.mu_p
            )));
        }
        Ok(t)
    }
}

/// Scaled labeled samples plus an optional unlabeled pool. The pool carries
/// no labels at all.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    labeled: FeatureMatrix,
    labels: LabelVector,
    unlabeled: Option<Arc<FeatureMatrix>>,
    scaling: Scaling,
}

impl TrainingSet {
    /// Applies an already fitted `scaling` to raw matrices.
    pub fn new(
        labeled_raw: &FeatureMatrix,
        labels: LabelVector,
        unlabeled_raw: Option<&FeatureMatrix>,
        scaling: Scaling,
    ) -> Result<Self> {
        if labels.len() != labeled_raw.rows() {
            return Err(Error::dim(format!(
                "{} labels for {} labeled samples",
                labels.len(),
                labeled_raw.rows()
            )));
        }
        if let Some(u) = unlabeled_raw {
            if u.cols() != labeled_raw.cols() {
                return Err(Error::dim(format!(
                    "unlabeled pool has {} features, labeled data has {}",
                    u.cols(),
                    labeled_raw.cols()
                )));
            }
        }
        let labeled = scaling.apply(labeled_raw)?;
        let unlabeled = unlabeled_raw.map(|u| scaling.apply(u)).transpose()?;
        Self::from_scaled(labeled, labels, unlabeled.map(Arc::new), scaling)
    }

    /// Wraps matrices that already have `scaling` applied.
    pub fn from_scaled(
        labeled: FeatureMatrix,
        labels: LabelVector,
        unlabeled: Option<Arc<FeatureMatrix>>,
        scaling: Scaling,
    ) -> Result<Self> {
        if labels.len() != labeled.rows() {
            return Err(Error::dim(format!(
                "{} labels for {} labeled samples",
                labels.len(),
                labeled.rows()
            )));
        }
        if let Some(u) = &unlabeled {
            if u.cols() != labeled.cols() {
                return Err(Error::dim(format!(
                    "unlabeled pool has {} features, labeled data has {}",
                    u.cols(),
                    labeled.cols()
                )));
            }
        }
        if scaling == Scaling::UnitInterval {
            let ok = labeled.is_unit_interval() && unlabeled.as_deref().is_none_or(FeatureMatrix::is_unit_interval);
            if !ok {
                return Err(Error::ModeMismatch(
                    "unit-interval scaling requires every entry in [0, 1]".into(),
                ));
            }
        }
        Ok(Self {
            labeled,
            labels,
            unlabeled,
            scaling,
        })
    }

    pub fn labeled(&self) -> &FeatureMatrix {
        &self.labeled
    }

    pub fn labels(&self) -> &LabelVector {
        &self.labels
    }

    pub fn unlabeled(&self) -> Option<&FeatureMatrix> {
        self.unlabeled.as_deref()
    }

    pub fn scaling(&self) -> &Scaling {
        &self.scaling
    }

    pub fn n_features(&self) -> usize {
        self.labeled.cols()
    }

    /// Samples whose flipped values form `M` under `policy`.
    pub fn pool(&self, policy: PoolPolicy) -> Result<FeatureMatrix> {
        match (policy, &self.unlabeled) {
            (PoolPolicy::LabeledOnly, _) | (PoolPolicy::LabeledPlusUnlabeled, None) => Ok(self.labeled.clone()),
            (PoolPolicy::LabeledPlusUnlabeled, Some(u)) => self.labeled.vstack(u),
            (PoolPolicy::UnlabeledOnly, Some(u)) => Ok(FeatureMatrix::clone(u)),
            (PoolPolicy::UnlabeledOnly, None) => Err(Error::input(
                "unlabeled-only pool requested but no unlabeled data given",
            )),
        }
    }
}

/// A quadratic objective together with the constant dropped while building it.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltObjective {
    pub objective: QuadraticObjective,
    /// Adding this to `J(w)` gives the squared residual `‖Fw − t‖²`.
    pub dropped_constant: f64,
}

/// `A = FᵀF`, `c = −2Fᵀt` for already flipped `F`.
pub fn build_supervised_objective(f_flipped: &FeatureMatrix, t: &TargetVector) -> Result<BuiltObjective> {
    let b = linear_term(f_flipped, t)?;
    let a = gram(f_flipped)?;
    let c = b.iter().map(|v| -2.0 * v).collect();
    Ok(BuiltObjective {
        objective: QuadraticObjective::new(a, c)?,
        dropped_constant: t.squared_norm(),
    })
}

/// `A = −FᵀF`, `c = 0`: maximizing `wᵀMw` as a minimization.
pub fn build_unsupervised_objective(f_flipped: &FeatureMatrix) -> Result<QuadraticObjective> {
    let n = f_flipped.cols();
    QuadraticObjective::new(gram(f_flipped)?.neg(), vec![0.0; n])
}

/// Gram matrix of a pool, reusable across sign vectors under the negate rule
/// (flipping a column by negation conjugates `M` by the sign matrix exactly).
#[derive(Debug, Clone)]
pub struct PoolGram {
    pool: Arc<FeatureMatrix>,
    unflipped: Option<SymMatrix>,
}

impl PoolGram {
    pub fn new(pool: FeatureMatrix, rule: FlipRule) -> Result<Self> {
        Self::shared(Arc::new(pool), rule)
    }

    pub fn shared(pool: Arc<FeatureMatrix>, rule: FlipRule) -> Result<Self> {
        let unflipped = match rule {
            FlipRule::Negate => Some(gram(&pool)?),
            FlipRule::OneMinus => None,
        };
        Ok(Self { pool, unflipped })
    }

    pub fn pool(&self) -> &FeatureMatrix {
        &self.pool
    }

    /// `M` of the pool after flipping by `signs`.
    pub fn flipped(&self, signs: &SignVector) -> Result<SymMatrix> {
        match (&self.unflipped, signs.flip_rule()) {
            (Some(m), FlipRule::Negate) => {
                if signs.len() != m.dim() {
                    return Err(Error::dim(format!(
                        "pool has {} features, signs have {}",
                        m.dim(),
                        signs.len()
                    )));
                }
                Ok(m.conjugate_by_signs(signs.signs()))
            }
            _ => gram(&flip(&self.pool, signs)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub class_id: ClassId,
    pub signs: SignVector,
    pub weights: SelectionWeights,
    pub threshold: f64,
    pub targets: Targets,
    pub scaling: Scaling,
    pub sign_provenance: SignProvenance,
    pub mode: LearningMode,
}

impl EnsembleModel {
    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    pub fn k(&self) -> usize {
        self.weights.k()
    }

    /// `wᵀf` after scaling and flipping the raw sample `f`.
    pub fn score(&self, f: &[f64]) -> Result<f64> {
        if f.len() != self.n_features() {
            return Err(Error::dim(format!(
                "sample has {} features, model has {}",
                f.len(),
                self.n_features()
            )));
        }
        let scaled = self.scaling.apply_row(f)?;
        let flipped = self.signs.flip_row(&scaled)?;
        Ok(dot(self.weights.weights(), &flipped))
    }

    /// Score on a sample that is already scaled.
    pub(crate) fn score_scaled(&self, scaled: &[f64]) -> Result<f64> {
        let flipped = self.signs.flip_row(scaled)?;
        Ok(dot(self.weights.weights(), &flipped))
    }

    pub fn is_positive(&self, f: &[f64]) -> Result<bool> {
        Ok(self.score(f)? > self.threshold)
    }

    pub fn selected_features(&self) -> Vec<usize> {
        self.weights.selected()
    }
}

pub fn predict_score(m: &EnsembleModel, f: &[f64]) -> Result<f64> {
    m.score(f)
}

pub fn selected_features(m: &EnsembleModel) -> Vec<usize> {
    m.selected_features()
}

/// A fitted model plus the solver run that produced it.
#[derive(Debug, Clone)]
pub struct BinaryFit {
    pub model: EnsembleModel,
    pub report: Option<SolveReport>,
}

/// Fits one class against the rest with signs estimated on the labeled data.
pub fn fit_binary(set: &TrainingSet, positive: &str, cfg: &FitConfig) -> Result<EnsembleModel> {
    let (_, signs) = estimate_signs(set.labeled(), set.labels(), positive, cfg.flip_rule)?;
    let pool = pool_for(set, cfg)?;
    Ok(fit_with_signs(set, positive, signs, cfg, pool.as_ref())?.model)
}

fn pool_for(set: &TrainingSet, cfg: &FitConfig) -> Result<Option<PoolGram>> {
    cfg.flip_rule.check_scaling(set.scaling().kind())?;
    match cfg.mode {
        LearningMode::Supervised => Ok(None),
        LearningMode::Unsupervised => Ok(Some(PoolGram::new(set.pool(cfg.pool)?, cfg.flip_rule)?)),
    }
}

/// Fits `positive` using the given sign vector, which may come from another class.
pub fn fit_with_signs(
    set: &TrainingSet,
    positive: &str,
    signs: SignVector,
    cfg: &FitConfig,
    pool: Option<&PoolGram>,
) -> Result<BinaryFit> {
    let n = set.n_features();
    let pos = set
        .labels()
        .class_index(positive)
        .ok_or_else(|| Error::InsufficientLabels(format!("class {positive:?} does not occur in the labels")))?;
    let counts = set.labels().histogram();
    let n_pos = counts[pos];
    let n_neg = set.labels().len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InsufficientLabels(format!(
            "class {positive:?} has {n_pos} positive and {n_neg} negative labeled samples"
        )));
    }
    if signs.len() != n {
        return Err(Error::dim(format!("signs have {} entries, data has {n}", signs.len())));
    }
    if signs.flip_rule() != cfg.flip_rule {
        return Err(Error::ModeMismatch(format!(
            "signs use {:?}, configuration uses {:?}",
            signs.flip_rule(),
            cfg.flip_rule
        )));
    }
    cfg.flip_rule.check_scaling(set.scaling().kind())?;
    let threshold = cfg.threshold()?;
    let dom = CappedSimplex::new(n, cfg.k)?;

    let objective = match cfg.mode {
        LearningMode::Supervised => {
            let flipped = flip(set.labeled(), &signs)?;
            let t = TargetVector::one_vs_all(set.labels(), pos, cfg.targets);
            build_supervised_objective(&flipped, &t)?.objective
        }
        LearningMode::Unsupervised => {
            let owned;
            let pool = match pool {
                Some(p) => p,
                None => {
                    owned = PoolGram::new(set.pool(cfg.pool)?, cfg.flip_rule)?;
                    &owned
                }
            };
            QuadraticObjective::new(pool.flipped(&signs)?.neg(), vec![0.0; n])?
        }
    };

    let report = ipfp_solve(&objective, &dom, &dom.uniform(), &cfg.solver)?;
    let model = EnsembleModel {
        class_id: positive.to_string(),
        sign_provenance: SignProvenance::of(&signs, positive),
        signs,
        weights: report.w_star.clone(),
        threshold,
        targets: cfg.targets,
        scaling: set.scaling().clone(),
        mode: cfg.mode,
    };
    Ok(BinaryFit {
        model,
        report: Some(report),
    })
}

/// One model per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassModel {
    pub models: Vec<EnsembleModel>,
    pub scaling: Scaling,
}

impl MulticlassModel {
    pub fn new(models: Vec<EnsembleModel>, scaling: Scaling) -> Result<Self> {
        let Some(first) = models.first() else {
            return Err(Error::input("multiclass model needs at least one class"));
        };
        let n = first.n_features();
        for m in &models {
            if m.n_features() != n {
                return Err(Error::dim(format!(
                    "class {} has {} features, expected {n}",
                    m.class_id,
                    m.n_features()
                )));
            }
            if m.scaling != scaling {
                return Err(Error::input(format!("class {} uses a different scaling", m.class_id)));
            }
        }
        let mut ids: Vec<&str> = models.iter().map(|m| m.class_id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::input("duplicate class ids in multiclass model"));
        }
        Ok(Self { models, scaling })
    }

    pub fn n_features(&self) -> usize {
        self.models[0].n_features()
    }

    pub fn classes(&self) -> Vec<&str> {
        self.models.iter().map(|m| m.class_id.as_str()).collect()
    }

    /// Per-class scores of a raw sample, in model order.
    pub fn scores(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.n_features() {
            return Err(Error::dim(format!(
                "sample has {} features, model has {}",
                f.len(),
                self.n_features()
            )));
        }
        let scaled = self.scaling.apply_row(f)?;
        self.models.iter().map(|m| m.score_scaled(&scaled)).collect()
    }

    /// Index of the highest-scoring class; ties go to the earliest class.
    pub fn predict_index(&self, f: &[f64]) -> Result<usize> {
        Ok(argmax(&self.scores(f)?))
    }

    pub fn predict(&self, f: &[f64]) -> Result<&str> {
        Ok(&self.models[self.predict_index(f)?].class_id)
    }

    /// Scores for every row of a raw matrix.
    pub fn score_matrix(&self, f: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
        (0..f.rows()).into_par_iter().map(|i| self.scores(f.row(i))).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: MulticlassModel = serde_json::from_str(s).map_err(|e| Error::input(format!("bad model file: {e}")))?;
        for e in &m.models {
            SelectionWeights::new(e.weights.weights().to_vec(), e.weights.k())?;
            if e.signs.len() != e.weights.len() {
                return Err(Error::dim(format!(
                    "class {}: signs and weights differ in length",
                    e.class_id
                )));
            }
            e.signs.flip_rule().check_scaling(e.scaling.kind())?;
        }
        Self::new(m.models, m.scaling)
    }
}

pub fn predict_class<'a>(mm: &'a MulticlassModel, f: &[f64]) -> Result<&'a str> {
    mm.predict(f)
}

pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

/// One-vs-all over every labeled class.
pub fn fit_multiclass(set: &TrainingSet, cfg: &FitConfig) -> Result<MulticlassModel> {
    fit_multiclass_with_transfer(set, cfg, &BTreeMap::new())
}

/// Own signs for every class.
pub fn estimate_class_signs(set: &TrainingSet, flip_rule: FlipRule) -> Result<Vec<SignVector>> {
    estimate_all_signs(set.labeled(), set.labels(), flip_rule)
}

/// One-vs-all where each class in `borrow` uses the signs estimated for the
/// mapped source class instead of its own.
pub fn fit_multiclass_with_transfer(
    set: &TrainingSet,
    cfg: &FitConfig,
    borrow: &BTreeMap<ClassId, ClassId>,
) -> Result<MulticlassModel> {
    fit_multiclass_with_pool(set, cfg, borrow, None)
}

/// As [`fit_multiclass_with_transfer`], reusing a pool gram built by the
/// caller. The cached pool must be the one `cfg.pool` selects from `set`.
pub fn fit_multiclass_with_pool(
    set: &TrainingSet,
    cfg: &FitConfig,
    borrow: &BTreeMap<ClassId, ClassId>,
    cached_pool: Option<&PoolGram>,
) -> Result<MulticlassModel> {
    cfg.flip_rule.check_scaling(set.scaling().kind())?;
    let classes = set.labels().classes();
    if classes.len() < 2 {
        return Err(Error::InsufficientLabels(format!(
            "one-vs-all needs at least two classes, got {}",
            classes.len()
        )));
    }
    for (target, source) in borrow {
        for c in [target, source] {
            if set.labels().class_index(c).is_none() {
                return Err(Error::input(format!("unknown class {c:?} in sign transfer")));
            }
        }
    }
    let own = estimate_class_signs(set, cfg.flip_rule)?;
    let built;
    let pool = match (cached_pool, cfg.mode) {
        (Some(p), LearningMode::Unsupervised) => Some(p),
        _ => {
            built = pool_for(set, cfg)?;
            built.as_ref()
        }
    };
    let models = classes
        .par_iter()
        .map(|c| {
            let src = borrow.get(c).unwrap_or(c);
            let idx = set.labels().class_index(src).expect("validated above");
            let signs = crate::signs::transfer_signs(&own[idx]);
            fit_with_signs(set, c, signs, cfg, pool)
                .map(|f| f.model)
                .map_err(|e| e.for_class(c))
        })
        .collect::<Result<Vec<_>>>()?;
    MulticlassModel::new(models, set.scaling().clone())
}

/// Equal weights over every flipped feature, without running the solver.
pub fn equal_weight_baseline(set: &TrainingSet, cfg: &FitConfig) -> Result<MulticlassModel> {
    let n = set.n_features();
    let threshold = cfg.threshold()?;
    let own = estimate_class_signs(set, cfg.flip_rule)?;
    let uniform = CappedSimplex::new(n, n)?.uniform();
    let models = set
        .labels()
        .classes()
        .iter()
        .zip(own)
        .map(|(c, signs)| EnsembleModel {
            class_id: c.clone(),
            sign_provenance: SignProvenance::Own,
            signs,
            weights: uniform.clone(),
            threshold,
            targets: cfg.targets,
            scaling: set.scaling().clone(),
            mode: cfg.mode,
        })
        .collect();
    MulticlassModel::new(models, set.scaling().clone())
}

/// Fits the scaling of `kind` on `stats_source` and builds a training set.
pub fn prepare(
    labeled_raw: &FeatureMatrix,
    labels: LabelVector,
    unlabeled_raw: Option<&FeatureMatrix>,
    kind: ScalingKind,
    stats_source: &FeatureMatrix,
) -> Result<TrainingSet> {
    let (_, scaling) = Scaling::fit(kind, stats_source)?;
    TrainingSet::new(labeled_raw, labels, unlabeled_raw, scaling)
}
