//! Joint linear-classifier learning and sparse feature selection over the
//! capped simplex.
//!
//! Features are first oriented so that each one responds more strongly on the
//! positive class ([`signs`]), then a weight vector `w` with `Σw = 1` and
//! `0 ≤ wⱼ ≤ 1/k` is found by the conditional-gradient solver in [`optim`],
//! either against labeled targets (supervised, convex) or by maximizing the
//! ensemble's second moment over unlabeled data (unsupervised, concave).
//! Optima put weight `1/k` on `k` features, so the classifier doubles as a
//! feature selector.

pub mod data;
pub mod error;
pub mod eval;
pub mod learn;
pub mod optim;
pub mod signs;

pub use data::{
    gram, linear_term, standardize, ClassId, FeatureMatrix, LabelVector, Scaling, ScalingKind, SymMatrix, TargetVector,
    Targets,
};
pub use error::{Error, Result};
pub use learn::{
    build_supervised_objective, build_unsupervised_objective, fit_binary, fit_multiclass, predict_class, predict_score,
    selected_features, EnsembleModel, FitConfig, LearningMode, MulticlassModel, PoolPolicy, TrainingSet,
};
pub use optim::{
    ipfp_solve, line_search, linear_oracle, CappedSimplex, QuadraticObjective, SelectionWeights, SolveReport,
    SolverOptions,
};
pub use signs::{
    class_similarity, estimate_signs, flip, sign_accuracy, transfer_signs, FlipRule, SignEstimate, SignProvenance,
    SignVector,
};
