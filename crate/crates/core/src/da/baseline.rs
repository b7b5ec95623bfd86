use super::{ensure_finite, init_classifier, labeled_parts, Batcher, EpochStats, Method, TrainedArtifact};
use crate::domain::{Dataset, Split};
use crate::error::{arg_err, Result};
use crate::numcore::{Rng, TrainConfig};

/// Plain minibatch cross-entropy training on `data`.
pub(crate) fn fit_supervised(data: &Dataset, config: &TrainConfig, method: Method) -> Result<TrainedArtifact> {
    config.validate()?;
    let (x, y) = labeled_parts(data)?;
    if x.rows() == 0 {
        return arg_err("cannot train on an empty dataset");
    }
    let mut model = init_classifier(config, x.cols(), data.n_categories())?;
    let mut batches = Batcher::new(x.rows(), config.batch_size, Rng::derive(config.seed, 1));
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let mut total = 0.0;
        let epoch = batches.epoch();
        for idx in &epoch {
            let xb = x.select_rows(idx);
            let yb: Vec<usize> = idx.iter().map(|&i| y[i]).collect();
            let pass = model.forward(&xb)?;
            total += crate::numcore::cross_entropy(&pass.probs, &yb)?;
            let grads = model.backward(&pass, &yb, None)?;
            model.sgd_step(&grads, config.learning_rate)?;
        }
        history.push(EpochStats {
            classification: total / epoch.len() as f64,
            ..EpochStats::default()
        });
    }
    ensure_finite(&model, "training")?;
    Ok(TrainedArtifact {
        model,
        method,
        history,
    })
}

/// The undefended victim: cross-entropy training directly on the labeled
/// target training partition.
pub fn train_baseline(target: &Split, config: &TrainConfig) -> Result<TrainedArtifact> {
    fit_supervised(&target.train, config, Method::Baseline)
}

/// Cross-entropy training on the labeled source alone. This is what every DA
/// trainer reduces to when its auxiliary term is switched off, and ADDA's
/// first phase. The artifact is tagged as a baseline.
pub fn train_source_only(source: &Split, config: &TrainConfig) -> Result<TrainedArtifact> {
    fit_supervised(&source.train, config, Method::Baseline)
}
