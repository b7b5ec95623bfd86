//! Versioned JSON experiment configuration.
//!
//! ```json
//! {
//!   "version": 1,
//!   "kind": "q1_effectiveness",
//!   "data": { "synthetic": { "n_per_class": 60, "n_per_class_target": 10 } },
//!   "methods": ["baseline", "ddc"],
//!   "train": { "epochs": 100, "lambda_mmd": 0.25 },
//!   "sweep": {},
//!   "seeds": [0, 1, 2],
//!   "output_dir": "runs/q1"
//! }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::da::Method;
use crate::domain::{PerturbKind, SynthSpec, DEFAULT_TRAIN_FRACTION};
use crate::error::{Error, Result};
use crate::numcore::TrainConfig;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Baseline vs DA-trained models on the same target.
    Q1Effectiveness,
    /// Several DA methods on the same source/target pair.
    Q2Methods,
    /// Source subset to `k` samples per category, for each `k`.
    Q3Size,
    /// Source is a mix of pool datasets, for each composition.
    Q3Diversity,
    /// Source is a perturbed domain similar to the target.
    Q3Similarity,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Q1Effectiveness => "q1_effectiveness",
            ExperimentKind::Q2Methods => "q2_methods",
            ExperimentKind::Q3Size => "q3_size",
            ExperimentKind::Q3Diversity => "q3_diversity",
            ExperimentKind::Q3Similarity => "q3_similarity",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxPair {
    pub images: PathBuf,
    pub labels: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxSource {
    /// The sensitive dataset.
    pub target: IdxPair,
    /// Held-out target samples. When absent the target is split by
    /// `train_fraction`.
    #[serde(default)]
    pub target_test: Option<IdxPair>,
    /// Candidate source datasets. Q1/Q2/Q3-size/Q3-similarity use the first;
    /// Q3-diversity mixes them per composition.
    #[serde(default)]
    pub sources: Vec<IdxPair>,
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
}

fn default_fraction() -> f64 {
    DEFAULT_TRAIN_FRACTION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SynthSpec),
    Idx(IdxSource),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbSpec {
    pub kind: PerturbKind,
    /// Defaults to the kind's default severity.
    #[serde(default)]
    pub severity: Option<f64>,
}

impl PerturbSpec {
    pub fn severity(&self) -> f64 {
        self.severity.unwrap_or_else(|| self.kind.default_severity())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Samples per category kept in the source (`q3_size`).
    pub size_levels: Vec<usize>,
    /// Shifts of the synthetic pool datasets (`q3_diversity`).
    pub pool_shifts: Vec<f64>,
    /// Pool indices mixed into each source (`q3_diversity`).
    pub compositions: Vec<Vec<usize>>,
    /// Perturbations producing similar sources (`q3_similarity`).
    pub perturbations: Vec<PerturbSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub kind: ExperimentKind,
    pub data: DataSource,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Records real elapsed seconds; otherwise `wall_time` is 0 so that
    /// reruns produce byte-identical records.
    #[serde(default)]
    pub record_wall_time: bool,
}

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return config_err(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            ));
        }
        if self.methods.is_empty() {
            return config_err("methods must be non-empty");
        }
        if self.seeds.is_empty() {
            return config_err("seeds must be non-empty");
        }
        self.train.validate()?;
        let sweep = &self.sweep;
        match self.kind {
            ExperimentKind::Q3Size => {
                if sweep.size_levels.is_empty() || sweep.size_levels.contains(&0) {
                    return config_err("q3_size needs positive size_levels");
                }
            }
            ExperimentKind::Q3Diversity => {
                if sweep.compositions.is_empty() || sweep.compositions.iter().any(Vec::is_empty) {
                    return config_err("q3_diversity needs non-empty compositions");
                }
                let pool = match &self.data {
                    DataSource::Synthetic(_) => sweep.pool_shifts.len(),
                    DataSource::Idx(idx) => idx.sources.len(),
                };
                if let Some(bad) = sweep.compositions.iter().flatten().find(|&&i| i >= pool) {
                    return config_err(format!("composition index {bad} outside a pool of {pool}"));
                }
            }
            ExperimentKind::Q3Similarity => {
                if sweep.perturbations.is_empty() {
                    return config_err("q3_similarity needs perturbations");
                }
                if let DataSource::Synthetic(spec) = &self.data {
                    if spec.image_side.is_none() {
                        return config_err("q3_similarity on synthetic data needs image_side");
                    }
                }
                if let Some(p) = sweep.perturbations.iter().find(|p| p.severity().is_nan() || p.severity() < 0.0) {
                    return config_err(format!("negative severity for {}", p.kind));
                }
            }
            ExperimentKind::Q1Effectiveness | ExperimentKind::Q2Methods => {}
        }
        if let DataSource::Idx(idx) = &self.data {
            let needs_source = self.methods.iter().any(|m| m.is_domain_adaptation());
            if needs_source && idx.sources.is_empty() {
                return config_err("DA methods need at least one idx source dataset");
            }
        }
        Ok(())
    }
}
