//! Discrepancy-based adaptation: `Loss = CE(source) + λ · MMD²(φ(source), φ(target))`
//! with `φ` the feature-layer activations.

use super::mmd::{mmd, mmd2_grad};
use super::{ensure_finite, head_rows, init_classifier, labeled_parts, Batcher, DaJob, EpochStats, TargetFeed, TrainedArtifact};
use crate::error::Result;
use crate::numcore::{cross_entropy, Gradients, Mat2, MlpModel, Rng, TrainConfig};

/// Value and parameter gradient of the DDC objective for one source batch
/// `(xs, ys)` and one target batch `xt`. The kernel bandwidth is resolved once
/// from the current features and held constant.
pub fn ddc_objective(
    model: &MlpModel,
    xs: &Mat2,
    ys: &[usize],
    xt: &Mat2,
    config: &TrainConfig,
) -> Result<(f64, Gradients)> {
    let (ce, mmd2, grads) = ddc_step(model, xs, ys, xt, config)?;
    Ok((ce + config.lambda_mmd * mmd2, grads))
}

/// Returns `(cross-entropy, MMD², gradient of the full objective)`.
fn ddc_step(
    model: &MlpModel,
    xs: &Mat2,
    ys: &[usize],
    xt: &Mat2,
    config: &TrainConfig,
) -> Result<(f64, f64, Gradients)> {
    let pass_s = model.forward(xs)?;
    let ce = cross_entropy(&pass_s.probs, ys)?;
    if config.lambda_mmd == 0.0 {
        return Ok((ce, 0.0, model.backward(&pass_s, ys, None)?));
    }
    let pass_t = model.forward(xt)?;
    let mut g = mmd2_grad(pass_s.features(), pass_t.features(), config.kernel, config.rbf_bandwidth)?;
    g.grad_source.scale(config.lambda_mmd);
    g.grad_target.scale(config.lambda_mmd);
    let mut grads = model.backward(&pass_s, ys, Some(&g.grad_source))?;
    grads.accumulate(&model.backward_features(&pass_t, &g.grad_target)?)?;
    Ok((ce, g.mmd2, grads))
}

pub fn train_ddc(job: &DaJob) -> Result<TrainedArtifact> {
    let config = &job.config;
    let (x, y) = labeled_parts(&job.source.train)?;
    let target = &job.target.train;
    let mut model = init_classifier(config, x.cols(), job.source.n_categories())?;
    let mut batches = Batcher::new(x.rows(), config.batch_size, Rng::derive(config.seed, 1));
    let mut feed = TargetFeed::new(target, config);
    let probe_s = head_rows(x);
    let probe_t = head_rows(target.features());

    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let epoch = batches.epoch();
        let mut total = 0.0;
        for idx in &epoch {
            let xb = x.select_rows(idx);
            let yb: Vec<usize> = idx.iter().map(|&i| y[i]).collect();
            // The target feed is only drawn from when the MMD term is active.
            let xt = if config.lambda_mmd == 0.0 { Mat2::zeros(0, x.cols()) } else { feed.next() };
            let (ce, _, grads) = ddc_step(&model, &xb, &yb, &xt, config)?;
            total += ce;
            model.sgd_step(&grads, config.learning_rate)?;
        }
        let discrepancy = mmd(
            &model.features(&probe_s)?,
            &model.features(&probe_t)?,
            config.kernel,
            config.rbf_bandwidth,
        )?;
        history.push(EpochStats {
            classification: total / epoch.len() as f64,
            mmd: Some(discrepancy),
            ..EpochStats::default()
        });
    }
    ensure_finite(&model, "DDC training")?;
    Ok(TrainedArtifact {
        model,
        method: job.method,
        history,
    })
}
