//! Diagnostics comparing how a model treats its training samples and
//! held-out samples: per-class generalization error, per-class confidence
//! histograms and a deterministic 2D projection of feature activations.

use std::fs::File;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::attack::confidence_scores;
use crate::domain::{Dataset, Split};
use crate::error::{arg_err, Error, Result};
use crate::numcore::{argmax_rows, Mat2, MlpModel};

/// Histogram bins over `[0, 1]`.
pub const N_BINS: usize = 20;

/// Fraction of correctly classified samples; `None` for an empty dataset.
pub fn accuracy(model: &MlpModel, data: &Dataset) -> Result<Option<f64>> {
    let labels = data.require_labels()?;
    if labels.is_empty() {
        return Ok(None);
    }
    let pred = argmax_rows(&model.predict(data.features())?);
    let hits = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(Some(hits as f64 / labels.len() as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassGenError {
    pub category: usize,
    /// `None` when the category has no training samples.
    pub train_acc: Option<f64>,
    /// `None` when the category has no held-out samples.
    pub test_acc: Option<f64>,
    /// `train_acc − test_acc`, defined when both are.
    pub gen_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenErrorReport {
    pub classes: Vec<ClassGenError>,
    /// `(gen_error, cumulative fraction)` over defined categories, sorted.
    pub cdf: Vec<(f64, f64)>,
    /// Categories left out of the CDF because a partition lacks them.
    pub n_undefined: usize,
}

impl GenErrorReport {
    /// Mean over defined categories; `None` when no category is defined.
    pub fn mean(&self) -> Option<f64> {
        let defined: Vec<f64> = self.classes.iter().filter_map(|c| c.gen_error).collect();
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

fn per_class_accuracy(model: &MlpModel, data: &Dataset) -> Result<Vec<Option<f64>>> {
    let labels = data.require_labels()?;
    let pred = argmax_rows(&model.predict(data.features())?);
    let k = data.n_categories();
    let mut hit = vec![0usize; k];
    let mut total = vec![0usize; k];
    for (&p, &y) in pred.iter().zip(labels) {
        total[y] += 1;
        hit[y] += usize::from(p == y);
    }
    Ok(hit
        .into_iter()
        .zip(total)
        .map(|(h, t)| (t > 0).then(|| h as f64 / t as f64))
        .collect())
}

pub fn generalization_errors(model: &MlpModel, split: &Split) -> Result<GenErrorReport> {
    let train = per_class_accuracy(model, &split.train)?;
    let test = per_class_accuracy(model, &split.non_train)?;
    let classes: Vec<ClassGenError> = train
        .into_iter()
        .zip(test)
        .enumerate()
        .map(|(category, (tr, te))| ClassGenError {
            category,
            train_acc: tr,
            test_acc: te,
            gen_error: tr.zip(te).map(|(a, b)| a - b),
        })
        .collect();
    let mut defined: Vec<f64> = classes.iter().filter_map(|c| c.gen_error).collect();
    defined.sort_by(f64::total_cmp);
    let n = defined.len();
    let cdf = defined
        .into_iter()
        .enumerate()
        .map(|(i, g)| (g, (i + 1) as f64 / n as f64))
        .collect();
    Ok(GenErrorReport {
        n_undefined: classes.len() - n,
        classes,
        cdf,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredDistribution {
    pub category: usize,
    /// Normalized mass per bin; all zeros when the partition has no samples
    /// of this category.
    pub member_hist: Vec<f64>,
    pub nonmember_hist: Vec<f64>,
    /// `Σ |member − nonmember|`, in `[0, 2]`.
    pub l1_distance: f64,
}

/// Normalized histogram of values in `[0, 1]`; bin `min(⌊v·20⌋, 19)`.
pub fn histogram(values: &[f64]) -> Vec<f64> {
    let mut h = vec![0.0; N_BINS];
    for &v in values {
        let b = ((v * N_BINS as f64).floor().max(0.0) as usize).min(N_BINS - 1);
        h[b] += 1.0;
    }
    if !values.is_empty() {
        let n = values.len() as f64;
        h.iter_mut().for_each(|x| *x /= n);
    }
    h
}

fn scores_of_category(model: &MlpModel, data: &Dataset, category: usize) -> Result<Vec<f64>> {
    let labels = data.require_labels()?;
    let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == category).collect();
    if idx.is_empty() {
        return Ok(Vec::new());
    }
    confidence_scores(model, &data.features().select_rows(&idx))
}

/// Predicted-class confidence histograms of members (train partition) and
/// nonmembers, for each requested true category.
pub fn prediction_distributions(
    model: &MlpModel,
    split: &Split,
    categories: &[usize],
) -> Result<Vec<PredDistribution>> {
    let k = split.n_categories();
    if let Some(&bad) = categories.iter().find(|&&c| c >= k) {
        return arg_err(format!("category {bad} out of range for {k} categories"));
    }
    categories
        .iter()
        .map(|&category| {
            let member_hist = histogram(&scores_of_category(model, &split.train, category)?);
            let nonmember_hist = histogram(&scores_of_category(model, &split.non_train, category)?);
            let l1_distance = member_hist
                .iter()
                .zip(&nonmember_hist)
                .map(|(a, b)| (a - b).abs())
                .sum();
            Ok(PredDistribution {
                category,
                member_hist,
                nonmember_hist,
                l1_distance,
            })
        })
        .collect()
}

/// Mean L1 distance over every category.
pub fn mean_pred_l1(model: &MlpModel, split: &Split) -> Result<f64> {
    let cats: Vec<usize> = (0..split.n_categories()).collect();
    let d = prediction_distributions(model, split, &cats)?;
    Ok(d.iter().map(|p| p.l1_distance).sum::<f64>() / d.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding2D {
    /// `n × 2`.
    pub points: Mat2,
    pub labels: Vec<Option<usize>>,
    pub membership: Vec<bool>,
}

/// Projects centered rows of `data` onto its top two principal directions.
///
/// Each direction's sign is fixed so its largest-magnitude coordinate is
/// positive (first such coordinate on ties). Data narrower than two columns
/// yields a zero second coordinate.
pub fn pca2(data: &Mat2) -> Result<Mat2> {
    let (n, d) = data.shape();
    if n < 3 {
        return arg_err(format!("need at least 3 samples to embed, got {n}"));
    }
    let means = data.column_means();
    let centered = DMatrix::from_fn(n, d, |r, c| data[(r, c)] - means[c]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut out = Mat2::zeros(n, 2);
    for (slot, &k) in order.iter().take(2).enumerate() {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let pivot = v
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bv), (i, &x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) })
            .0;
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        for r in 0..n {
            out[(r, slot)] = centered.row(r).iter().zip(&v).map(|(a, b)| a * b).sum();
        }
    }
    Ok(out)
}

/// Activations of hidden layer `feature_layer` for every sample of every
/// dataset, reduced to two dimensions.
pub fn embed2d(
    model: &MlpModel,
    datasets: &[(&Dataset, bool)],
    feature_layer: usize,
) -> Result<Embedding2D> {
    if feature_layer >= model.n_hidden() {
        return arg_err(format!(
            "feature layer {feature_layer} out of range for {} hidden layers",
            model.n_hidden()
        ));
    }
    let mut acts = Mat2::zeros(0, model.layer_dims()[feature_layer + 1]);
    let mut labels = Vec::new();
    let mut membership = Vec::new();
    for &(d, is_member) in datasets {
        let pass = model.forward(d.features())?;
        acts = acts.vstack(&pass.activations[feature_layer + 1])?;
        match d.labels() {
            Some(y) => labels.extend(y.iter().map(|&v| Some(v))),
            None => labels.extend(std::iter::repeat_n(None, d.len())),
        }
        membership.extend(std::iter::repeat_n(is_member, d.len()));
    }
    Ok(Embedding2D {
        points: pca2(&acts)?,
        labels,
        membership,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `category,train_acc,test_acc,gen_error`; undefined values are empty.
pub fn write_gen_errors(path: impl AsRef<Path>, report: &GenErrorReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    w.write_record(["category", "train_acc", "test_acc", "gen_error"])?;
    for c in &report.classes {
        w.write_record([c.category.to_string(), opt(c.train_acc), opt(c.test_acc), opt(c.gen_error)])?;
    }
    w.flush().map_err(Error::from)
}

/// `category,bin,member_mass,nonmember_mass`.
pub fn write_pred_dist(path: impl AsRef<Path>, dists: &[PredDistribution]) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    w.write_record(["category", "bin", "member_mass", "nonmember_mass"])?;
    for d in dists {
        for b in 0..N_BINS {
            w.write_record([
                d.category.to_string(),
                b.to_string(),
                d.member_hist[b].to_string(),
                d.nonmember_hist[b].to_string(),
            ])?;
        }
    }
    w.flush().map_err(Error::from)
}

/// `x,y,label,is_member`; unlabeled points have an empty label.
pub fn write_embedding(path: impl AsRef<Path>, e: &Embedding2D) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    w.write_record(["x", "y", "label", "is_member"])?;
    for r in 0..e.points.rows() {
        w.write_record([
            e.points[(r, 0)].to_string(),
            e.points[(r, 1)].to_string(),
            e.labels[r].map(|l| l.to_string()).unwrap_or_default(),
            u8::from(e.membership[r]).to_string(),
        ])?;
    }
    w.flush().map_err(Error::from)
}

/// Writes `gen_errors.csv`, `pred_dist.csv` and `embedding.csv` into `dir`.
pub fn write_all(model: &MlpModel, split: &Split, categories: &[usize], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_gen_errors(dir.join("gen_errors.csv"), &generalization_errors(model, split)?)?;
    write_pred_dist(dir.join("pred_dist.csv"), &prediction_distributions(model, split, categories)?)?;
    let e = embed2d(model, &[(&split.train, true), (&split.non_train, false)], model.feature_layer())?;
    write_embedding(dir.join("embedding.csv"), &e)
}
