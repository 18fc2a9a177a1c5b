//! Run configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use signsel::eval::{ExperimentConfig, UnlabeledSource, DEFAULT_REPEATS};
use signsel::{FitConfig, FlipRule, LearningMode, PoolPolicy, ScalingKind, SolverOptions, Targets};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad config {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Csv {
        train: PathBuf,
        /// Evaluation data; the training file is reused when absent.
        #[serde(default)]
        test: Option<PathBuf>,
        #[serde(default = "default_label_column")]
        label_column: String,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default)]
        center_crop: bool,
    },
}

fn default_label_column() -> String {
    "label".into()
}

fn default_source() -> UnlabeledSource {
    UnlabeledSource::None
}

fn default_fraction() -> f64 {
    1.0
}

fn default_repeats() -> usize {
    DEFAULT_REPEATS
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub fractions: Option<Vec<f64>>,
    #[serde(default)]
    pub ks: Option<Vec<usize>>,
    #[serde(default)]
    pub labeled_counts: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferConfig {
    /// Number of borrowing classes per setting, planned by sign similarity.
    pub borrowed: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub mode: LearningMode,
    pub scaling: ScalingKind,
    pub flip_rule: FlipRule,
    pub k: usize,
    /// Labeled samples drawn per class; all labeled samples when absent.
    #[serde(default)]
    pub labeled_per_class: Option<usize>,
    pub pool: PoolPolicy,
    #[serde(default = "default_source")]
    pub unlabeled_source: UnlabeledSource,
    #[serde(default = "default_fraction")]
    pub unlabeled_fraction: f64,
    pub seed: u64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub targets: Option<Targets>,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub solver: Option<SolverOptions>,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub transfer: Option<TransferConfig>,
    /// Saved model used by `predict` and `eval` instead of fitting.
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Parses a config file and resolves relative paths against its folder.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.data {
            DataConfig::Csv { train, test, .. } => {
                fix(train);
                if let Some(t) = test {
                    fix(t);
                }
            }
            DataConfig::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                ..
            } => {
                for p in [train_images, train_labels, test_images, test_labels] {
                    fix(p);
                }
            }
        }
        if let Some(m) = &mut self.model {
            fix(m);
        }
        if let Some(o) = &mut self.output_dir {
            fix(o);
        }
    }

    /// Checks everything that can be checked without loading data.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.labeled_per_class == Some(0) {
            return bad("labeled_per_class must be at least 1".into());
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.unlabeled_fraction) {
            return bad(format!("unlabeled_fraction {} outside [0, 1]", self.unlabeled_fraction));
        }
        self.flip_rule
            .check_scaling(self.scaling)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let Some(t) = self.targets {
            Targets::new(t.mu_p, t.mu_n).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if let Some(s) = self.solver {
            if s.max_iter == 0 || s.tol.is_nan() || s.tol <= 0.0 {
                return bad("solver needs max_iter ≥ 1 and tol > 0".into());
            }
        }
        let needs_pool = self.mode == LearningMode::Unsupervised && self.pool != PoolPolicy::LabeledOnly;
        if needs_pool && self.pool == PoolPolicy::UnlabeledOnly && self.unlabeled_source == UnlabeledSource::None {
            return bad("unlabeled_only pool needs an unlabeled_source".into());
        }
        let files: Vec<&PathBuf> = match &self.data {
            DataConfig::Csv { train, test, .. } => std::iter::once(train).chain(test).collect(),
            DataConfig::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                ..
            } => vec![train_images, train_labels, test_images, test_labels],
        };
        for f in files {
            if !f.is_file() {
                return bad(format!("data file {} not found", f.display()));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring the output folder.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        format!("{:x}", Sha256::digest(json.as_bytes()))
    }

    pub fn fit_config(&self) -> FitConfig {
        let mut f = FitConfig::new(self.k, self.mode, self.flip_rule);
        f.pool = self.pool;
        if let Some(t) = self.targets {
            f.targets = t;
        }
        f.threshold = self.threshold;
        if let Some(s) = self.solver {
            f.solver = s;
        }
        f
    }

    pub fn experiment_config(&self) -> ExperimentConfig {
        let mut e = ExperimentConfig::new(self.fit_config(), self.seed);
        e.labeled_per_class = self.labeled_per_class;
        e.unlabeled = self.unlabeled_source;
        e.unlabeled_fraction = self.unlabeled_fraction;
        e.repeats = self.repeats;
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = r#"{
        "data": {"format": "csv", "train": "toy.csv"},
        "mode": "supervised",
        "scaling": "unit_interval",
        "flip_rule": "one_minus",
        "k": 1,
        "pool": "labeled_only",
        "seed": 5
    }"#;

    #[test]
    fn parses_with_defaults() {
        let c: RunConfig = serde_json::from_str(TOY).unwrap();
        assert_eq!(c.repeats, DEFAULT_REPEATS);
        assert_eq!(c.unlabeled_source, UnlabeledSource::None);
        assert_eq!(c.unlabeled_fraction, 1.0);
        match &c.data {
            DataConfig::Csv { label_column, test, .. } => {
                assert_eq!(label_column, "label");
                assert!(test.is_none());
            }
            _ => panic!(),
        }
        assert_eq!(c.experiment_config().base_seed, 5);
    }

    #[test]
    fn rejects_unknown_and_missing_seed() {
        let extra = TOY.replace("\"seed\": 5", "\"seed\": 5, \"colour\": 1");
        assert!(serde_json::from_str::<RunConfig>(&extra).is_err());
        let no_seed = TOY.replace(",\n        \"seed\": 5", "");
        let e = serde_json::from_str::<RunConfig>(&no_seed).unwrap_err().to_string();
        assert!(e.contains("seed"), "{e}");
    }

    #[test]
    fn validation() {
        let mut c: RunConfig = serde_json::from_str(TOY).unwrap();
        c.flip_rule = FlipRule::Negate;
        assert!(c.validate().unwrap_err().to_string().contains("flip rule"));
        c.flip_rule = FlipRule::OneMinus;
        c.k = 0;
        assert!(c.validate().is_err());
        c.k = 1;
        let e = c.validate().unwrap_err().to_string();
        assert!(e.contains("not found"), "{e}");
    }

    #[test]
    fn hash_ignores_output_dir() {
        let mut c: RunConfig = serde_json::from_str(TOY).unwrap();
        let h = c.hash();
        c.output_dir = Some("elsewhere".into());
        assert_eq!(c.hash(), h);
        c.seed = 6;
        assert_ne!(c.hash(), h);
    }
}
