//! Seeded random problem families.

use rand::Rng;
use signsel::{
    build_supervised_objective, build_unsupervised_objective, FeatureMatrix, QuadraticObjective, TargetVector, Targets,
};

pub struct Instance {
    pub objective: QuadraticObjective,
    pub k: usize,
}

impl Instance {
    pub fn n(&self) -> usize {
        self.objective.dim()
    }

    /// Dense copy of `A` for the reference solvers.
    pub fn a_rows(&self) -> Vec<Vec<f64>> {
        let a = self.objective.quadratic();
        (0..a.dim()).map(|i| a.row(i).to_vec()).collect()
    }

    pub fn c(&self) -> &[f64] {
        self.objective.linear()
    }
}

fn uniform_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> FeatureMatrix {
    let data = (0..rows * cols).map(|_| rng.random::<f64>()).collect();
    FeatureMatrix::new(rows, cols, data).expect("finite entries")
}

/// Supervised least squares with uniform features and random binary
/// targets: `n ∈ {4..12}`, `k ∈ {1..n}`, between `n` and `2n + 10` samples.
pub fn random_supervised(rng: &mut impl Rng) -> Instance {
    let n = rng.random_range(4..=12);
    let k = rng.random_range(1..=n);
    let rows = rng.random_range(n..=2 * n + 10);
    let f = uniform_matrix(rng, rows, n);
    let flags: Vec<bool> = (0..rows).map(|_| rng.random()).collect();
    let t = TargetVector::from_flags(&flags, Targets::default());
    let objective = build_supervised_objective(&f, &t).expect("shapes agree").objective;
    Instance { objective, k }
}

/// Unsupervised second-moment maximization over uniform features, which
/// are in general position with probability one.
pub fn general_position_unsupervised(rng: &mut impl Rng, n: usize, k: usize, rows: usize) -> Instance {
    let f = uniform_matrix(rng, rows, n);
    let objective = build_unsupervised_objective(&f).expect("non-empty");
    Instance { objective, k }
}

/// Supervised problem over soft classifier outputs: feature `j` responds
/// `0.5 ± qⱼ` plus noise on positives and negatives, clamped to `[0, 1]`,
/// with per-feature quality `qⱼ ∈ [0, 0.25]`.
pub fn informative_supervised(rng: &mut impl Rng, n: usize, k: usize, rows: usize) -> Instance {
    let quality: Vec<f64> = (0..n).map(|_| 0.25 * rng.random::<f64>()).collect();
    let flags: Vec<bool> = (0..rows).map(|i| i % 2 == 0).collect();
    let mut data = Vec::with_capacity(rows * n);
    for &pos in &flags {
        for q in &quality {
            let noise = 0.4 * (rng.random::<f64>() - 0.5);
            let centre = if pos { 0.5 + q } else { 0.5 - q };
            data.push((centre + noise).clamp(0.0, 1.0));
        }
    }
    let f = FeatureMatrix::new(rows, n, data).expect("finite entries");
    let t = TargetVector::from_flags(&flags, Targets::default());
    let objective = build_supervised_objective(&f, &t).expect("shapes agree").objective;
    Instance { objective, k }
}
