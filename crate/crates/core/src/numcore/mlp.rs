//! Dense feed-forward classifier with manual backpropagation.
//!
//! Layer `k` maps `activations[k]` to `activations[k + 1]` through
//! `z = a · W_k + b_k`. Hidden layers use ReLU, the last layer feeds a softmax.
//! Weights are stored with shape `(fan_in, fan_out)` so a batch of row vectors
//! multiplies on the left.
//!
//! One hidden layer is designated the *feature layer*: its post-ReLU output is
//! the intermediate representation that domain-adaptation losses act on, and
//! the point where their gradients are injected during backprop.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use super::mat::Mat2;
use super::rng::Rng;
use crate::error::{arg_err, shape_err, Error, Result};

/// Probabilities are clamped here before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    weights: Vec<Mat2>,
    biases: Vec<Vec<f64>>,
    feature_layer: usize,
}

/// Everything a forward pass produced.
///
/// `activations[0]` is the input batch and `activations[k]` for `k ≥ 1` the
/// post-ReLU output of hidden layer `k - 1`.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub activations: Vec<Mat2>,
    pub logits: Mat2,
    pub probs: Mat2,
    feature_layer: usize,
}

impl ForwardPass {
    pub fn features(&self) -> &Mat2 {
        &self.activations[self.feature_layer + 1]
    }

    pub fn batch_len(&self) -> usize {
        self.probs.rows()
    }
}

/// Per-parameter gradients plus the gradient with respect to the input batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Mat2>,
    pub biases: Vec<Vec<f64>>,
    pub input: Mat2,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel, batch_len: usize) -> Self {
        Self {
            weights: model
                .weights
                .iter()
                .map(|w| Mat2::zeros(w.rows(), w.cols()))
                .collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            input: Mat2::zeros(batch_len, model.input_dim()),
        }
    }

    /// Parameter gradients in the same order as [`MlpModel::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }

    /// Sums parameter gradients. Input gradients are not combined since the
    /// two passes generally saw different batches.
    pub fn accumulate(&mut self, other: &Gradients) -> Result<()> {
        if self.weights.len() != other.weights.len() {
            return shape_err("gradient layer count mismatch");
        }
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.add_assign(b)?;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            if a.len() != b.len() {
                return shape_err("bias gradient length mismatch");
            }
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        self.flatten().iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

impl MlpModel {
    /// He-uniform weights, zero biases.
    pub fn new(layer_dims: &[usize], feature_layer: usize, rng: &mut Rng) -> Result<Self> {
        validate_dims(layer_dims, feature_layer)?;
        let mut weights = Vec::with_capacity(layer_dims.len() - 1);
        for pair in layer_dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / fan_in as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.uniform_in(-limit, limit))
                .collect();
            weights.push(Mat2::from_vec(fan_in, fan_out, data)?);
        }
        let biases = layer_dims[1..].iter().map(|&d| vec![0.0; d]).collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            feature_layer,
        })
    }

    pub fn zeros(layer_dims: &[usize], feature_layer: usize) -> Result<Self> {
        validate_dims(layer_dims, feature_layer)?;
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights: layer_dims
                .windows(2)
                .map(|p| Mat2::zeros(p[0], p[1]))
                .collect(),
            biases: layer_dims[1..].iter().map(|&d| vec![0.0; d]).collect(),
            feature_layer,
        })
    }

    pub fn from_parameters(
        layer_dims: &[usize],
        weights: Vec<Mat2>,
        biases: Vec<Vec<f64>>,
        feature_layer: usize,
    ) -> Result<Self> {
        validate_dims(layer_dims, feature_layer)?;
        let n_layers = layer_dims.len() - 1;
        if weights.len() != n_layers || biases.len() != n_layers {
            return shape_err(format!("expected {n_layers} weight and bias tensors"));
        }
        for (k, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.shape() != (layer_dims[k], layer_dims[k + 1]) || b.len() != layer_dims[k + 1] {
                return shape_err(format!("layer {k} parameters do not match dims"));
            }
            if !w.is_finite() || b.iter().any(|x| !x.is_finite()) {
                return shape_err(format!("layer {k} has non-finite parameters"));
            }
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            feature_layer,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn weights(&self) -> &[Mat2] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn feature_layer(&self) -> usize {
        self.feature_layer
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn n_categories(&self) -> usize {
        *self.layer_dims.last().expect("validated non-empty")
    }

    pub fn n_hidden(&self) -> usize {
        self.layer_dims.len() - 2
    }

    pub fn feature_dim(&self) -> usize {
        self.layer_dims[self.feature_layer + 1]
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.rows() * w.cols()).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Layers whose output feeds the feature activations (the encoder).
    pub fn trunk_layers(&self) -> RangeInclusive<usize> {
        0..=self.feature_layer
    }

    /// All weights then biases, layer by layer.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return shape_err(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                params.len()
            ));
        }
        let mut at = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let n = w.as_slice().len();
            w.as_mut_slice().copy_from_slice(&params[at..at + n]);
            at += n;
            let nb = b.len();
            b.copy_from_slice(&params[at..at + nb]);
            at += nb;
        }
        Ok(())
    }

    /// Replaces the encoder layers with those of `other`.
    pub fn copy_trunk_from(&mut self, other: &MlpModel) -> Result<()> {
        if other.layer_dims[..=self.feature_layer + 1] != self.layer_dims[..=self.feature_layer + 1]
            || other.feature_layer != self.feature_layer
        {
            return shape_err("encoder architectures differ");
        }
        for k in self.trunk_layers() {
            self.weights[k] = other.weights[k].clone();
            self.biases[k] = other.biases[k].clone();
        }
        Ok(())
    }

    pub fn forward(&self, batch: &Mat2) -> Result<ForwardPass> {
        if batch.cols() != self.input_dim() {
            return shape_err(format!(
                "batch width {} does not match input dim {}",
                batch.cols(),
                self.input_dim()
            ));
        }
        let n_layers = self.weights.len();
        let mut activations = Vec::with_capacity(n_layers);
        activations.push(batch.clone());
        for k in 0..n_layers - 1 {
            let mut z = activations[k].matmul(&self.weights[k])?;
            z.add_row_vector(&self.biases[k]);
            activations.push(z.map(|v| v.max(0.0)));
        }
        let mut logits = activations[n_layers - 1].matmul(&self.weights[n_layers - 1])?;
        logits.add_row_vector(&self.biases[n_layers - 1]);
        let probs = softmax_rows(&logits);
        Ok(ForwardPass {
            activations,
            logits,
            probs,
            feature_layer: self.feature_layer,
        })
    }

    pub fn predict(&self, batch: &Mat2) -> Result<Mat2> {
        Ok(self.forward(batch)?.probs)
    }

    pub fn features(&self, batch: &Mat2) -> Result<Mat2> {
        Ok(self.forward(batch)?.features().clone())
    }

    /// Mean cross-entropy of `labels` under the model.
    pub fn loss(&self, batch: &Mat2, labels: &[usize]) -> Result<f64> {
        let pass = self.forward(batch)?;
        cross_entropy(&pass.probs, labels)
    }

    /// Gradients of mean cross-entropy over the batch, plus an optional
    /// gradient `∂L_extra/∂features` added at the feature layer.
    pub fn backward(
        &self,
        pass: &ForwardPass,
        labels: &[usize],
        extra_grad_on_feature: Option<&Mat2>,
    ) -> Result<Gradients> {
        self.check_pass(pass)?;
        let n = pass.batch_len();
        if labels.len() != n {
            return shape_err(format!("{} labels for a batch of {n}", labels.len()));
        }
        let classes = self.n_categories();
        let mut dlogits = pass.probs.clone();
        for (r, &y) in labels.iter().enumerate() {
            if y >= classes {
                return arg_err(format!("label {y} out of range for {classes} categories"));
            }
            dlogits[(r, y)] -= 1.0;
        }
        dlogits.scale(1.0 / n as f64);
        self.backprop(pass, Some(dlogits), extra_grad_on_feature)
    }

    /// Gradients of a loss that depends on the model only through its feature
    /// activations. Layers above the feature layer get zero gradient.
    pub fn backward_features(&self, pass: &ForwardPass, grad_on_feature: &Mat2) -> Result<Gradients> {
        self.check_pass(pass)?;
        self.backprop(pass, None, Some(grad_on_feature))
    }

    fn check_pass(&self, pass: &ForwardPass) -> Result<()> {
        let n_layers = self.weights.len();
        let matches = pass.activations.len() == n_layers
            && pass.feature_layer == self.feature_layer
            && pass
                .activations
                .iter()
                .zip(&self.layer_dims)
                .all(|(a, &d)| a.cols() == d)
            && pass.probs.cols() == self.n_categories();
        if matches {
            Ok(())
        } else {
            Err(Error::State(
                "forward pass does not belong to this model".into(),
            ))
        }
    }

    fn backprop(
        &self,
        pass: &ForwardPass,
        dlogits: Option<Mat2>,
        extra: Option<&Mat2>,
    ) -> Result<Gradients> {
        let n = pass.batch_len();
        let n_layers = self.weights.len();
        let feat = pass.features();
        if let Some(e) = extra {
            if e.shape() != feat.shape() {
                return shape_err(format!(
                    "feature gradient {:?} does not match features {:?}",
                    e.shape(),
                    feat.shape()
                ));
            }
        }
        let mut grads = Gradients::zeros_like(self, n);

        // Gradient w.r.t. the output of the layer currently being processed.
        let (mut upstream, top) = match dlogits {
            Some(dz) => {
                let last = n_layers - 1;
                grads.weights[last] = pass.activations[last].t_matmul(&dz)?;
                grads.biases[last] = dz.column_sums();
                (dz.matmul_t(&self.weights[last])?, last)
            }
            None => (Mat2::zeros(n, self.feature_dim()), self.feature_layer + 1),
        };

        for k in (0..top).rev() {
            if k == self.feature_layer {
                if let Some(e) = extra {
                    upstream.add_assign(e)?;
                }
            }
            let out = &pass.activations[k + 1];
            let mut dz = upstream;
            for (g, &a) in dz.as_mut_slice().iter_mut().zip(out.as_slice()) {
                if a <= 0.0 {
                    *g = 0.0;
                }
            }
            grads.weights[k] = pass.activations[k].t_matmul(&dz)?;
            grads.biases[k] = dz.column_sums();
            upstream = dz.matmul_t(&self.weights[k])?;
        }
        grads.input = upstream;
        Ok(grads)
    }

    /// `w ← w − lr·g` for every parameter.
    pub fn sgd_step(&mut self, grads: &Gradients, learning_rate: f64) -> Result<()> {
        if grads.weights.len() != self.weights.len() {
            return shape_err("gradient layer count mismatch");
        }
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            if w.shape() != g.shape() {
                return shape_err("weight gradient shape mismatch");
            }
            for (p, &d) in w.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *p -= learning_rate * d;
            }
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            if b.len() != g.len() {
                return shape_err("bias gradient shape mismatch");
            }
            for (p, &d) in b.iter_mut().zip(g) {
                *p -= learning_rate * d;
            }
        }
        Ok(())
    }
}

/// Free-function form of [`MlpModel::sgd_step`].
pub fn sgd_step(model: &MlpModel, grads: &Gradients, learning_rate: f64) -> Result<MlpModel> {
    let mut next = model.clone();
    next.sgd_step(grads, learning_rate)?;
    Ok(next)
}

fn validate_dims(layer_dims: &[usize], feature_layer: usize) -> Result<()> {
    if layer_dims.len() < 3 {
        return Err(Error::Config(
            "a model needs at least one hidden layer".into(),
        ));
    }
    if layer_dims.contains(&0) {
        return Err(Error::Config("layer widths must be positive".into()));
    }
    if *layer_dims.last().unwrap() < 2 {
        return Err(Error::Config("need at least two output categories".into()));
    }
    let n_hidden = layer_dims.len() - 2;
    if feature_layer >= n_hidden {
        return Err(Error::Config(format!(
            "feature layer {feature_layer} out of range for {n_hidden} hidden layers"
        )));
    }
    Ok(())
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Mat2) -> Mat2 {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Mean of `-ln p[y]` with probabilities clamped at [`PROB_FLOOR`].
pub fn cross_entropy(probs: &Mat2, labels: &[usize]) -> Result<f64> {
    if labels.len() != probs.rows() {
        return shape_err("label count does not match batch");
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        if y >= probs.cols() {
            return arg_err(format!("label {y} out of range"));
        }
        total -= probs[(r, y)].max(PROB_FLOOR).ln();
    }
    Ok(total / labels.len() as f64)
}

/// Index of the largest entry of each row (first on ties).
pub fn argmax_rows(m: &Mat2) -> Vec<usize> {
    m.iter_rows()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                    if v > bv {
                        (i, v)
                    } else {
                        (bi, bv)
                    }
                })
                .0
        })
        .collect()
}
