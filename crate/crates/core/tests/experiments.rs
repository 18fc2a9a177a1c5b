use std::collections::BTreeMap;

use signsel::eval::synthetic::class_blobs;
use signsel::eval::{
    sign_transfer_experiment, sweep_k, sweep_unlabeled, Experiment, ExperimentConfig, MetricsReport, TransferSetting,
    UnlabeledSource,
};
use signsel::{fit_multiclass, flip, gram, FitConfig, FlipRule, LearningMode, PoolPolicy, ScalingKind, TrainingSet};

const N: usize = 40;

fn experiment() -> Experiment {
    // Same seed for train and test so both share class means.
    let (f, labels) = class_blobs(4, N, 300, 0.08, 0.2, 21).unwrap();
    let train: Vec<usize> = (0..f.rows()).filter(|i| i % 3 != 0).collect();
    let test: Vec<usize> = (0..f.rows()).filter(|i| i % 3 == 0).collect();
    Experiment::new(
        &f.select_rows(&train).unwrap(),
        labels.select(&train).unwrap(),
        &f.select_rows(&test).unwrap(),
        labels.select(&test).unwrap(),
        ScalingKind::Standardized,
    )
    .unwrap()
}

fn config(k: usize, mode: LearningMode) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(FitConfig::new(k, mode, FlipRule::Negate), 100);
    c.labeled_per_class = Some(5);
    c.repeats = 6;
    c
}

fn check_report(r: &MetricsReport, exp: &Experiment) {
    assert_eq!(r.class_counts(), exp.test_labels().histogram());
    let trace: usize = (0..r.classes.len()).map(|i| r.confusion[i][i]).sum();
    assert_eq!(r.overall_accuracy, trace as f64 / r.n_test as f64);
    assert_eq!(r.n_test, exp.test_labels().len());
    for (i, c) in r.classes.iter().enumerate() {
        let row: usize = r.confusion[i].iter().sum();
        assert_eq!(r.per_class_accuracy[c], r.confusion[i][i] as f64 / row as f64);
    }
}

#[test]
fn reports_are_consistent() {
    let exp = experiment();
    for mode in [LearningMode::Supervised, LearningMode::Unsupervised] {
        let mut cfg = config(8, mode);
        cfg.unlabeled = UnlabeledSource::Test;
        for seed in cfg.seeds() {
            check_report(&exp.run(&cfg, seed, &BTreeMap::new()).unwrap().metrics, &exp);
        }
    }
}

#[test]
fn sweeps_are_reproducible() {
    let exp = experiment();
    let cfg = config(8, LearningMode::Supervised);
    let a = sweep_k(&exp, &cfg, &[4, 8, 16]).unwrap();
    let b = sweep_k(&experiment(), &cfg, &[16, 4, 8]).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.to_csv(), b.to_csv());
    let values: Vec<f64> = a.points.iter().map(|p| p.value).collect();
    assert_eq!(values, [4.0, 8.0, 16.0]);
}

#[test]
fn full_k_matches_equal_weights() {
    let exp = experiment();
    for mode in [LearningMode::Supervised, LearningMode::Unsupervised] {
        let r = sweep_k(&exp, &config(N, mode), &[N]).unwrap();
        for run in &r.points[0].runs {
            assert_eq!(Some(run.accuracy), run.baseline_accuracy);
        }
    }
    assert!(sweep_k(&exp, &config(4, LearningMode::Supervised), &[N + 1]).is_err());
}

#[test]
fn single_feature_models_are_stationary_vertices() {
    let exp = experiment();
    let cfg = config(1, LearningMode::Unsupervised);
    let set: TrainingSet = exp.training_set(&cfg, 7).unwrap();
    let mm = fit_multiclass(&set, &cfg.fit).unwrap();
    let pool = set.pool(PoolPolicy::LabeledPlusUnlabeled).unwrap();
    for m in &mm.models {
        let sel = m.selected_features();
        assert_eq!(sel.len(), 1);
        let j = sel[0];
        assert_eq!(m.weights.weights()[j], 1.0);
        // At the indicator of j the gradient is -2 M e_j, so no other
        // single feature is a descent direction when M_jj >= M_ij.
        let g = gram(&flip(&pool, &m.signs).unwrap()).unwrap();
        for i in 0..N {
            assert!(
                g.get(j, j) >= g.get(i, j),
                "class {}: feature {i} beats {j}",
                m.class_id
            );
        }
    }
}

#[test]
fn own_signs_setting_equals_plain_run() {
    let exp = experiment();
    let cfg = config(8, LearningMode::Supervised);
    let plain = exp.repeat(&cfg, &BTreeMap::new()).unwrap();
    let classes = exp.train_labels().classes().to_vec();
    let selfish: BTreeMap<_, _> = classes.iter().map(|c| (c.clone(), c.clone())).collect();
    let settings = [
        TransferSetting {
            name: "all_own".into(),
            borrow: BTreeMap::new(),
        },
        TransferSetting {
            name: "self".into(),
            borrow: selfish.clone(),
        },
    ];
    let table = sign_transfer_experiment(&exp, &cfg, &settings).unwrap();
    for row in &table.rows {
        assert_eq!(row.runs, plain);
        assert_eq!(row.borrowed, 0);
    }
    let a = exp.run(&cfg, 3, &BTreeMap::new()).unwrap();
    let b = exp.run(&cfg, 3, &selfish).unwrap();
    for (x, y) in a.model.models.iter().zip(&b.model.models) {
        assert_eq!(x.weights, y.weights);
        assert_eq!(x.signs.signs(), y.signs.signs());
    }
    let bad = [TransferSetting {
        name: "bad".into(),
        borrow: BTreeMap::from([(classes[0].clone(), "nope".to_string())]),
    }];
    assert!(sign_transfer_experiment(&exp, &cfg, &bad).is_err());
}

#[test]
fn zero_fraction_reproduces_labeled_pool() {
    let exp = experiment();
    let mut cfg = config(8, LearningMode::Unsupervised);
    cfg.unlabeled = UnlabeledSource::Test;
    let sweep = sweep_unlabeled(&exp, &cfg, &[0.0]).unwrap();
    let mut labeled_only = cfg.clone();
    labeled_only.fit.pool = PoolPolicy::LabeledOnly;
    assert_eq!(
        sweep.points[0].runs,
        exp.repeat(&labeled_only, &BTreeMap::new()).unwrap()
    );
}

#[test]
fn more_unlabeled_data_does_not_hurt() {
    let exp = experiment();
    let mut cfg = config(8, LearningMode::Unsupervised);
    cfg.unlabeled = UnlabeledSource::Test;
    cfg.repeats = 10;
    let r = sweep_unlabeled(&exp, &cfg, &[0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
    for pair in r.points.windows(2) {
        assert!(
            pair[1].mean_accuracy >= pair[0].mean_accuracy - pair[0].std_accuracy,
            "{} -> {}: {} then {}",
            pair[0].value,
            pair[1].value,
            pair[0].mean_accuracy,
            pair[1].mean_accuracy
        );
    }
    assert!(sweep_unlabeled(&exp, &config(8, LearningMode::Unsupervised), &[0.5]).is_err());
}
