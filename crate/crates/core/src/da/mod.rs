//! Domain-adaptation trainers and the undefended baseline.
//!
//! Every DA trainer receives the labeled source [`Split`] and an
//! [`UnlabeledSplit`] view of the target: the target type has no labels field,
//! so no trainer can read target labels. Only [`train_baseline`], which models
//! the undefended victim, takes labeled target data.
//!
//! Random streams (all derived from `config.seed`):
//!
//! | stream | use                         |
//! |--------|-----------------------------|
//! | 0      | classifier initialization   |
//! | 1      | source minibatch shuffling  |
//! | 2      | DRCN decoder initialization |
//! | 3      | target minibatch shuffling  |
//! | 4      | ADDA discriminator init     |
//! | 5      | ADDA target batch shuffling |
//! | 6      | ADDA source batch shuffling |
//!
//! Streams 0 and 1 are consumed identically by every trainer, so turning an
//! auxiliary term off (`lambda_mmd = 0`, `recon_weight = 0`) reproduces a
//! source-only run bit for bit.

mod adda;
mod baseline;
mod ddc;
mod drcn;
mod mmd;
mod model_io;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use adda::{train_adda, AddaOutcome, ADVERSARIAL_LR_SCALE, DISCRIMINATOR_HIDDEN};
pub use baseline::{train_baseline, train_source_only};
pub use ddc::{ddc_objective, train_ddc};
pub use drcn::{drcn_objective, train_drcn, train_drcn_with_decoder, Decoder, DecoderGradients};
pub use mmd::{median_bandwidth, mmd, mmd2, mmd2_grad, resolve_bandwidth, MmdGrad};
pub use model_io::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};

use crate::domain::{Dataset, Split, UnlabeledDataset, UnlabeledSplit};
use crate::error::{arg_err, shape_err, Error, Result};
use crate::numcore::{Mat2, MlpModel, Rng, TrainConfig};

/// Target sets up to this many rows enter every DA step in full.
pub const FULL_BATCH_LIMIT: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Baseline,
    Ddc,
    Drcn,
    Adda,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Baseline, Method::Ddc, Method::Drcn, Method::Adda];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Ddc => "ddc",
            Method::Drcn => "drcn",
            Method::Adda => "adda",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Method::Baseline => 0,
            Method::Ddc => 1,
            Method::Drcn => 2,
            Method::Adda => 3,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        Method::ALL.into_iter().find(|m| m.tag() == tag)
    }

    pub fn is_domain_adaptation(self) -> bool {
        self != Method::Baseline
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Method::Baseline),
            "ddc" => Ok(Method::Ddc),
            "drcn" => Ok(Method::Drcn),
            "adda" => Ok(Method::Adda),
            other => arg_err(format!("unknown method '{other}'")),
        }
    }
}

/// Losses recorded at the end of one epoch. Terms a method does not use are
/// `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// Mean source (or baseline target) cross-entropy over the epoch's batches.
    pub classification: f64,
    /// MMD between source-train and target-train features after the epoch.
    pub mmd: Option<f64>,
    /// Per-sample squared reconstruction error on target-train after the epoch.
    pub reconstruction: Option<f64>,
    /// Mean discriminator cross-entropy over the epoch's adversarial steps.
    pub adversarial: Option<f64>,
    /// Discriminator accuracy on held-out source vs target features.
    pub discriminator_acc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedArtifact {
    pub model: MlpModel,
    pub method: Method,
    /// One entry per epoch.
    pub history: Vec<EpochStats>,
}

/// A domain-adaptation training job.
///
/// The target is stored without labels. Build it with [`DaJob::new`], which
/// strips them.
#[derive(Clone, Debug)]
pub struct DaJob {
    pub source: Split,
    pub target: UnlabeledSplit,
    pub method: Method,
    pub config: TrainConfig,
}

impl DaJob {
    pub fn new(source: Split, target: &Split, method: Method, config: TrainConfig) -> Result<Self> {
        Self::from_unlabeled(source, target.without_labels(), method, config)
    }

    pub fn from_unlabeled(
        source: Split,
        target: UnlabeledSplit,
        method: Method,
        config: TrainConfig,
    ) -> Result<Self> {
        if method == Method::Baseline {
            return arg_err("the baseline trains on labeled target data; use train_baseline");
        }
        config.validate()?;
        source.train.require_labels()?;
        if source.n_categories() != target.train.n_categories() {
            return shape_err(format!(
                "source has {} categories, target {}",
                source.n_categories(),
                target.train.n_categories()
            ));
        }
        if source.train.width() != target.train.width() {
            return shape_err(format!(
                "source width {} differs from target width {}",
                source.train.width(),
                target.train.width()
            ));
        }
        if source.train.is_empty() || target.train.is_empty() {
            return arg_err("source and target training sets must be non-empty");
        }
        Ok(Self {
            source,
            target,
            method,
            config,
        })
    }

    /// The only view of the target that trainers receive.
    pub fn trainer_visible_target(&self) -> &UnlabeledDataset {
        &self.target.train
    }
}

/// Runs `job.method`.
pub fn train(job: &DaJob) -> Result<TrainedArtifact> {
    match job.method {
        Method::Ddc => train_ddc(job),
        Method::Drcn => train_drcn(job),
        Method::Adda => train_adda(job).map(|o| o.artifact),
        Method::Baseline => arg_err("the baseline is not a domain-adaptation job"),
    }
}

/// Fresh classifier for `input_dim` features, initialized from stream 0.
pub(crate) fn init_classifier(config: &TrainConfig, input_dim: usize, n_categories: usize) -> Result<MlpModel> {
    let dims = config.layer_dims(input_dim, n_categories);
    MlpModel::new(&dims, config.feature_layer_index(), &mut Rng::derive(config.seed, 0))
}

/// Yields shuffled index batches, reshuffling at the start of every pass.
pub(crate) struct Batcher {
    n: usize,
    batch_size: usize,
    order: Vec<usize>,
    at: usize,
    rng: Rng,
}

impl Batcher {
    pub(crate) fn new(n: usize, batch_size: usize, rng: Rng) -> Self {
        Self {
            n,
            batch_size: batch_size.min(n).max(1),
            order: Vec::new(),
            at: n,
            rng,
        }
    }

    /// All batches of one pass over the data.
    pub(crate) fn epoch(&mut self) -> Vec<Vec<usize>> {
        let order = self.rng.permutation(self.n);
        order.chunks(self.batch_size).map(<[usize]>::to_vec).collect()
    }

    /// Next batch of a cyclic stream; a new permutation starts whenever the
    /// current one is used up.
    pub(crate) fn next_batch(&mut self) -> Vec<usize> {
        if self.at >= self.n {
            self.order = self.rng.permutation(self.n);
            self.at = 0;
        }
        let end = (self.at + self.batch_size).min(self.n);
        let batch = self.order[self.at..end].to_vec();
        self.at = end;
        batch
    }
}

/// Target rows for one DA step: the whole set when small, else a minibatch.
pub(crate) struct TargetFeed<'a> {
    data: &'a Mat2,
    batcher: Option<Batcher>,
}

impl<'a> TargetFeed<'a> {
    pub(crate) fn new(data: &'a UnlabeledDataset, config: &TrainConfig) -> Self {
        let n = data.len();
        let batcher = (n > FULL_BATCH_LIMIT)
            .then(|| Batcher::new(n, config.batch_size, Rng::derive(config.seed, 3)));
        Self {
            data: data.features(),
            batcher,
        }
    }

    pub(crate) fn next(&mut self) -> Mat2 {
        match &mut self.batcher {
            None => self.data.clone(),
            Some(b) => {
                let idx = b.next_batch();
                self.data.select_rows(&idx)
            }
        }
    }
}

/// At most `FULL_BATCH_LIMIT` leading rows, used for per-epoch diagnostics.
pub(crate) fn head_rows(m: &Mat2) -> Mat2 {
    if m.rows() <= FULL_BATCH_LIMIT {
        m.clone()
    } else {
        m.select_rows(&(0..FULL_BATCH_LIMIT).collect::<Vec<_>>())
    }
}

pub(crate) fn labeled_parts(d: &Dataset) -> Result<(&Mat2, &[usize])> {
    Ok((d.features(), d.require_labels()?))
}

pub(crate) fn ensure_finite(model: &MlpModel, what: &str) -> Result<()> {
    if model.weights().iter().all(Mat2::is_finite)
        && model.biases().iter().flatten().all(|v| v.is_finite())
    {
        Ok(())
    } else {
        Err(Error::State(format!("{what} diverged to non-finite parameters")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{synth_two_domains, SynthSpec};

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            assert_eq!(Method::from_tag(m.tag()), Some(m));
        }
        assert!("dann".parse::<Method>().is_err());
    }

    #[test]
    fn job_strips_target_labels() {
        let (s, t) = synth_two_domains(&SynthSpec::default()).unwrap();
        let job = DaJob::new(s.clone(), &t, Method::Ddc, TrainConfig::default()).unwrap();
        let json = serde_json::to_value(job.trainer_visible_target()).unwrap();
        assert!(json.get("labels").is_none());
        assert!(DaJob::new(s, &t, Method::Baseline, TrainConfig::default()).is_err());
    }

    #[test]
    fn batcher_covers_every_index() {
        let mut b = Batcher::new(10, 3, Rng::new(1));
        let mut seen: Vec<usize> = b.epoch().into_iter().flatten().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        let mut cyc: Vec<usize> = (0..4).flat_map(|_| b.next_batch()).collect();
        cyc.sort_unstable();
        assert_eq!(cyc, (0..10).collect::<Vec<_>>());
    }
}
