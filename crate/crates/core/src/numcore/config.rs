use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel used by the MMD discrepancy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// Identity feature map: MMD is the distance between means.
    #[default]
    Linear,
    /// Gaussian kernel `exp(-‖a − b‖² / h)`.
    Rbf,
}

/// Bandwidth `h` of the Gaussian kernel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Median of pairwise squared distances over the pooled samples.
    #[default]
    MedianHeuristic,
    Fixed(f64),
}

/// Hyperparameters shared by every trainer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Weight of the squared MMD term.
    pub lambda_mmd: f64,
    /// Weight of the target reconstruction term.
    pub recon_weight: f64,
    pub kernel: Kernel,
    pub rbf_bandwidth: Bandwidth,
    /// Hidden layer widths of the classifier.
    pub hidden: Vec<usize>,
    /// Hidden layer used as the intermediate representation; last one if unset.
    pub feature_layer: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 0.05,
            batch_size: 32,
            seed: 0,
            lambda_mmd: 0.25,
            recon_weight: 0.5,
            kernel: Kernel::Linear,
            rbf_bandwidth: Bandwidth::MedianHeuristic,
            hidden: vec![64, 64],
            feature_layer: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.epochs == 0 {
            return fail("epochs must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if !(self.lambda_mmd >= 0.0 && self.lambda_mmd.is_finite()) {
            return fail("lambda_mmd must be non-negative");
        }
        if !(self.recon_weight >= 0.0 && self.recon_weight.is_finite()) {
            return fail("recon_weight must be non-negative");
        }
        if self.hidden.is_empty() {
            return fail("at least one hidden layer is required");
        }
        if self.hidden.contains(&0) {
            return fail("hidden widths must be positive");
        }
        if let Bandwidth::Fixed(h) = self.rbf_bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return fail("fixed bandwidth must be positive");
            }
        }
        if self.feature_layer.is_some_and(|f| f >= self.hidden.len()) {
            return fail("feature_layer must index a hidden layer");
        }
        Ok(())
    }

    pub fn feature_layer_index(&self) -> usize {
        self.feature_layer
            .unwrap_or_else(|| self.hidden.len().saturating_sub(1))
    }

    /// Full layer widths for a classifier over `input_dim` features.
    pub fn layer_dims(&self, input_dim: usize, n_categories: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(input_dim);
        dims.extend_from_slice(&self.hidden);
        dims.push(n_categories);
        dims
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
        assert_eq!(TrainConfig::default().feature_layer_index(), 1);
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { lambda_mmd: -1.0, ..Default::default() },
            TrainConfig { recon_weight: -0.1, ..Default::default() },
            TrainConfig { hidden: vec![], ..Default::default() },
            TrainConfig { feature_layer: Some(2), ..Default::default() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
    }

    #[test]
    fn json_defaults_fill_in() {
        let cfg: TrainConfig = serde_json::from_str(r#"{"epochs": 5, "kernel": "rbf"}"#).unwrap();
        assert_eq!(cfg.epochs, 5);
        assert_eq!(cfg.kernel, Kernel::Rbf);
        assert_eq!(cfg.lambda_mmd, 0.25);
        let fixed: TrainConfig =
            serde_json::from_str(r#"{"rbf_bandwidth": {"fixed": 2.0}}"#).unwrap();
        assert_eq!(fixed.rbf_bandwidth, Bandwidth::Fixed(2.0));
    }
}
