//! Domain adaptation as a defense against membership inference.
//!
//! The crate trains small dense classifiers with domain-adaptation objectives
//! (MMD confusion, target reconstruction, adversarial feature alignment) so that
//! a sensitive dataset only ever participates as *unlabeled* target data, then
//! measures how much a black-box threshold attacker can still learn about
//! membership in that dataset.
//!
//! Layout:
//!
//! - [`numcore`]: matrices, seeded RNG, dense networks with manual backprop.
//! - [`domain`]: datasets, domains, size/diversity/similarity, perceptual
//!   hashing, image perturbations, IDX ingestion, synthetic domains.
//! - [`da`]: baseline, DDC, DRCN-style and ADDA-style trainers plus MMD.
//! - [`attack`]: threshold membership inference and attacker advantage.
//! - [`metrics`]: generalization error, prediction distributions, 2D embedding.
//! - [`harness`]: experiment configs, orchestration and CSV reports.

pub mod attack;
pub mod da;
pub mod domain;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod numcore;

pub use attack::{advantage, extract_scores, fit_threshold, AttackReport, ScoreSet};
pub use metrics::{embed2d, generalization_errors, prediction_distributions, Embedding2D, GenErrorReport, PredDistribution};
pub use da::{
    mmd, train, train_adda, train_baseline, train_ddc, train_drcn, DaJob, EpochStats, Method, TrainedArtifact,
};
pub use domain::{
    domain_diversity, domain_norm, domain_size, mix, perturb, phash, similarity,
    subset_per_category, Dataset, Domain, Fingerprint, PerturbKind, Split, UnlabeledDataset,
    UnlabeledSplit,
};
pub use error::{Error, Result};
pub use numcore::{Bandwidth, ForwardPass, Gradients, Kernel, Mat2, MlpModel, Rng, TrainConfig};
pub use harness::{
    run_and_write, run_experiment, summarize, ExperimentConfig, ExperimentKind, ExperimentOutput,
    RunRecord,
};
