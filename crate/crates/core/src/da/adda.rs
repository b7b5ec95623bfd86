//! Adversarial adaptation in three phases.
//!
//! 1. Train encoder and classifier on labeled source (identical to a
//!    source-only run).
//! 2. Freeze them. Initialize a target encoder from the source encoder and
//!    alternate a discriminator step (source features labeled 1, target
//!    features 0) with a target-encoder step on the inverted labels.
//! 3. Return the target encoder under the frozen source classifier head.

use super::baseline::fit_supervised;
use super::{ensure_finite, labeled_parts, Batcher, DaJob, EpochStats, Method, TrainedArtifact};
use crate::error::Result;
use crate::numcore::{argmax_rows, cross_entropy, Mat2, MlpModel, Rng};

/// Width of the discriminator's single hidden layer.
pub const DISCRIMINATOR_HIDDEN: usize = 32;
/// Adversarial learning rate as a fraction of the main one.
pub const ADVERSARIAL_LR_SCALE: f64 = 0.1;

const SOURCE: usize = 1;
const TARGET: usize = 0;

#[derive(Clone, Debug)]
pub struct AddaOutcome {
    pub artifact: TrainedArtifact,
    /// Phase-1 model: source encoder plus classifier.
    pub source_model: MlpModel,
    pub discriminator: MlpModel,
}

/// Balanced accuracy of the discriminator on source vs target features.
fn discriminator_accuracy(disc: &MlpModel, fs: &Mat2, ft: &Mat2) -> Result<f64> {
    let ps = argmax_rows(&disc.predict(fs)?);
    let pt = argmax_rows(&disc.predict(ft)?);
    let hit_s = ps.iter().filter(|&&p| p == SOURCE).count() as f64 / ps.len().max(1) as f64;
    let hit_t = pt.iter().filter(|&&p| p == TARGET).count() as f64 / pt.len().max(1) as f64;
    Ok(0.5 * (hit_s + hit_t))
}

pub fn train_adda(job: &DaJob) -> Result<AddaOutcome> {
    let config = &job.config;
    let phase1 = fit_supervised(&job.source.train, config, Method::Adda)?;
    let source_model = phase1.model;
    let mut encoder = source_model.clone();
    let mut disc = MlpModel::new(
        &[source_model.feature_dim(), DISCRIMINATOR_HIDDEN, 2],
        0,
        &mut Rng::derive(config.seed, 4),
    )?;
    let lr = config.learning_rate * ADVERSARIAL_LR_SCALE;

    let (xs_all, _) = labeled_parts(&job.source.train)?;
    let xt_all = job.target.train.features();
    let mut target_batches = Batcher::new(xt_all.rows(), config.batch_size, Rng::derive(config.seed, 5));
    let mut source_batches = Batcher::new(xs_all.rows(), config.batch_size, Rng::derive(config.seed, 6));

    // Held-out source features never change: the source encoder is frozen.
    let held_s = source_model.features(job.source.non_train.features())?;
    let held_t_x = job.target.non_train.features();

    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut adv_total = 0.0;
        let batches = target_batches.epoch();
        for t_idx in &batches {
            let s_idx = source_batches.next_batch();
            let fs = source_model.features(&xs_all.select_rows(&s_idx))?;
            let xt = xt_all.select_rows(t_idx);

            // Discriminator step.
            let ft = encoder.features(&xt)?;
            let both = fs.vstack(&ft)?;
            let mut labels = vec![SOURCE; fs.rows()];
            labels.extend(std::iter::repeat_n(TARGET, ft.rows()));
            let d_pass = disc.forward(&both)?;
            adv_total += cross_entropy(&d_pass.probs, &labels)?;
            let d_grads = disc.backward(&d_pass, &labels, None)?;
            disc.sgd_step(&d_grads, lr)?;

            // Target-encoder step on inverted labels, discriminator held fixed.
            let e_pass = encoder.forward(&xt)?;
            let dt_pass = disc.forward(e_pass.features())?;
            let fooled = vec![SOURCE; ft.rows()];
            let through = disc.backward(&dt_pass, &fooled, None)?;
            let e_grads = encoder.backward_features(&e_pass, &through.input)?;
            encoder.sgd_step(&e_grads, lr)?;
        }
        ensure_finite(&encoder, "ADDA target encoder")?;
        ensure_finite(&disc, "ADDA discriminator")?;
        let acc = if held_s.rows() > 0 && held_t_x.rows() > 0 {
            Some(discriminator_accuracy(&disc, &held_s, &encoder.features(held_t_x)?)?)
        } else {
            None
        };
        history.push(EpochStats {
            classification: phase1.history[epoch].classification,
            adversarial: Some(adv_total / batches.len() as f64),
            discriminator_acc: acc,
            ..EpochStats::default()
        });
    }

    let mut model = source_model.clone();
    model.copy_trunk_from(&encoder)?;
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        log::debug!(
            "ADDA discriminator accuracy {:?} -> {:?}",
            first.discriminator_acc,
            last.discriminator_acc
        );
    }
    Ok(AddaOutcome {
        artifact: TrainedArtifact {
            model,
            method: job.method,
            history,
        },
        source_model,
        discriminator: disc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::da::train_source_only;
    use crate::domain::{synth_two_domains, SynthSpec};
    use crate::numcore::TrainConfig;

    fn job() -> DaJob {
        let spec = SynthSpec {
            domain_shift: 0.3,
            ..SynthSpec::default()
        };
        let (s, t) = synth_two_domains(&spec).unwrap();
        let config = TrainConfig {
            epochs: 15,
            hidden: vec![16, 8],
            ..TrainConfig::default()
        };
        DaJob::new(s, &t, Method::Adda, config).unwrap()
    }

    #[test]
    fn phase_one_is_source_only_and_head_is_frozen() {
        let job = job();
        let out = train_adda(&job).unwrap();
        let plain = train_source_only(&job.source, &job.config).unwrap().model;
        assert_eq!(out.source_model, plain);
        let head = out.source_model.feature_layer() + 1..out.source_model.weights().len();
        for k in head {
            assert_eq!(out.artifact.model.weights()[k], plain.weights()[k]);
            assert_eq!(out.artifact.model.biases()[k], plain.biases()[k]);
        }
        assert_eq!(out.artifact.history.len(), job.config.epochs);
        assert_ne!(out.artifact.model, plain, "target encoder should have moved");
    }

    #[test]
    fn discriminator_trajectory_is_logged() {
        let out = train_adda(&job()).unwrap();
        for h in &out.artifact.history {
            let acc = h.discriminator_acc.unwrap();
            assert!((0.0..=1.0).contains(&acc));
            assert!(h.adversarial.unwrap().is_finite());
        }
    }
}
