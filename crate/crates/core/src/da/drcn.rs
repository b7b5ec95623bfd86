//! Reconstruction-based adaptation.
//!
//! The classifier trunk is a shared encoder. A dense decoder
//! `x̂ = sigmoid(h · W + b)` reconstructs target samples from their feature
//! activations `h`. Total loss:
//!
//! ```text
//! CE(source) + recon_weight · (1 / B) Σ_i ‖x̂_i − x_i‖²
//! ```
//!
//! Encoder, classifier head and decoder are updated jointly by SGD.

use serde::{Deserialize, Serialize};

use super::{ensure_finite, head_rows, init_classifier, labeled_parts, Batcher, DaJob, EpochStats, TargetFeed, TrainedArtifact};
use crate::error::{shape_err, Result};
use crate::numcore::{cross_entropy, Gradients, Mat2, MlpModel, Rng, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decoder {
    /// Shape `(feature_dim, output_dim)`.
    pub weight: Mat2,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderGradients {
    pub weight: Mat2,
    pub bias: Vec<f64>,
    /// Gradient with respect to the decoder input (the features).
    pub input: Mat2,
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl Decoder {
    /// Glorot-uniform weights, zero bias.
    pub fn new(feature_dim: usize, output_dim: usize, rng: &mut Rng) -> Result<Self> {
        let limit = (6.0 / (feature_dim + output_dim) as f64).sqrt();
        let data = (0..feature_dim * output_dim)
            .map(|_| rng.uniform_in(-limit, limit))
            .collect();
        Ok(Self {
            weight: Mat2::from_vec(feature_dim, output_dim, data)?,
            bias: vec![0.0; output_dim],
        })
    }

    pub fn reconstruct(&self, h: &Mat2) -> Result<Mat2> {
        let mut z = h.matmul(&self.weight)?;
        z.add_row_vector(&self.bias);
        Ok(z.map(sigmoid))
    }

    /// Squared reconstruction error of `x` from `h`, summed over coordinates
    /// and averaged over rows.
    pub fn loss(&self, h: &Mat2, x: &Mat2) -> Result<f64> {
        let xhat = self.reconstruct(h)?;
        if xhat.shape() != x.shape() {
            return shape_err("reconstruction target shape mismatch");
        }
        let n = x.rows().max(1) as f64;
        Ok(xhat
            .as_slice()
            .iter()
            .zip(x.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n)
    }

    /// Loss and its gradients with respect to decoder parameters and `h`.
    pub fn loss_and_grad(&self, h: &Mat2, x: &Mat2) -> Result<(f64, DecoderGradients)> {
        let xhat = self.reconstruct(h)?;
        if xhat.shape() != x.shape() {
            return shape_err("reconstruction target shape mismatch");
        }
        let n = x.rows().max(1) as f64;
        let mut loss = 0.0;
        let mut dz = xhat.clone();
        for ((g, &xh), &xv) in dz.as_mut_slice().iter_mut().zip(xhat.as_slice()).zip(x.as_slice()) {
            let diff = xh - xv;
            loss += diff * diff;
            // d/dz of (σ(z) − x)² / n
            *g = 2.0 * diff / n * xh * (1.0 - xh);
        }
        Ok((
            loss / n,
            DecoderGradients {
                weight: h.t_matmul(&dz)?,
                bias: dz.column_sums(),
                input: dz.matmul_t(&self.weight)?,
            },
        ))
    }

    pub fn sgd_step(&mut self, g: &DecoderGradients, learning_rate: f64) -> Result<()> {
        if g.weight.shape() != self.weight.shape() || g.bias.len() != self.bias.len() {
            return shape_err("decoder gradient shape mismatch");
        }
        for (p, d) in self.weight.as_mut_slice().iter_mut().zip(g.weight.as_slice()) {
            *p -= learning_rate * d;
        }
        for (p, d) in self.bias.iter_mut().zip(&g.bias) {
            *p -= learning_rate * d;
        }
        Ok(())
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = self.weight.as_slice().to_vec();
        out.extend_from_slice(&self.bias);
        out
    }

    pub fn set_flat_params(&mut self, p: &[f64]) -> Result<()> {
        let nw = self.weight.as_slice().len();
        if p.len() != nw + self.bias.len() {
            return shape_err("decoder parameter count mismatch");
        }
        self.weight.as_mut_slice().copy_from_slice(&p[..nw]);
        self.bias.copy_from_slice(&p[nw..]);
        Ok(())
    }
}

impl DecoderGradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.weight.as_slice().to_vec();
        out.extend_from_slice(&self.bias);
        out
    }
}

/// Value and gradients of the joint DRCN objective for one source batch and
/// one target batch.
pub fn drcn_objective(
    model: &MlpModel,
    decoder: &Decoder,
    xs: &Mat2,
    ys: &[usize],
    xt: &Mat2,
    config: &TrainConfig,
) -> Result<(f64, Gradients, DecoderGradients)> {
    let (ce, recon, grads, dec) = drcn_step(model, decoder, xs, ys, xt, config.recon_weight)?;
    Ok((ce + config.recon_weight * recon, grads, dec))
}

/// Returns `(cross-entropy, reconstruction, model gradient, decoder gradient)`,
/// gradients already weighted by `w`.
fn drcn_step(
    model: &MlpModel,
    decoder: &Decoder,
    xs: &Mat2,
    ys: &[usize],
    xt: &Mat2,
    w: f64,
) -> Result<(f64, f64, Gradients, DecoderGradients)> {
    let pass_s = model.forward(xs)?;
    let ce = cross_entropy(&pass_s.probs, ys)?;
    let mut grads = model.backward(&pass_s, ys, None)?;
    let pass_t = model.forward(xt)?;
    let (recon, mut dec) = decoder.loss_and_grad(pass_t.features(), xt)?;
    dec.weight.scale(w);
    dec.bias.iter_mut().for_each(|b| *b *= w);
    dec.input.scale(w);
    grads.accumulate(&model.backward_features(&pass_t, &dec.input)?)?;
    Ok((ce, recon, grads, dec))
}

pub fn train_drcn(job: &DaJob) -> Result<TrainedArtifact> {
    Ok(train_drcn_with_decoder(job)?.0)
}

/// Like [`train_drcn`] but also returns the trained decoder.
pub fn train_drcn_with_decoder(job: &DaJob) -> Result<(TrainedArtifact, Decoder)> {
    let config = &job.config;
    let (x, y) = labeled_parts(&job.source.train)?;
    let target = &job.target.train;
    let mut model = init_classifier(config, x.cols(), job.source.n_categories())?;
    let mut decoder = Decoder::new(model.feature_dim(), x.cols(), &mut Rng::derive(config.seed, 2))?;
    let mut batches = Batcher::new(x.rows(), config.batch_size, Rng::derive(config.seed, 1));
    let mut feed = TargetFeed::new(target, config);
    let probe_t = head_rows(target.features());
    let active = config.recon_weight != 0.0;

    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let epoch = batches.epoch();
        let mut total = 0.0;
        for idx in &epoch {
            let xb = x.select_rows(idx);
            let yb: Vec<usize> = idx.iter().map(|&i| y[i]).collect();
            if active {
                let xt = feed.next();
                let (ce, _, grads, dec) = drcn_step(&model, &decoder, &xb, &yb, &xt, config.recon_weight)?;
                total += ce;
                model.sgd_step(&grads, config.learning_rate)?;
                decoder.sgd_step(&dec, config.learning_rate)?;
            } else {
                let pass = model.forward(&xb)?;
                total += cross_entropy(&pass.probs, &yb)?;
                let grads = model.backward(&pass, &yb, None)?;
                model.sgd_step(&grads, config.learning_rate)?;
            }
        }
        let recon = decoder.loss(&model.features(&probe_t)?, &probe_t)?;
        history.push(EpochStats {
            classification: total / epoch.len() as f64,
            reconstruction: Some(recon),
            ..EpochStats::default()
        });
    }
    ensure_finite(&model, "DRCN training")?;
    Ok((
        TrainedArtifact {
            model,
            method: job.method,
            history,
        },
        decoder,
    ))
}
