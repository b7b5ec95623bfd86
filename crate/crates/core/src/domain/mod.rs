//! Datasets, domains and the source-domain manipulations: size, diversity
//! (mixing), perceptual-hash similarity, and image perturbations.

mod idx;
mod perturb;
mod phash;
mod synth;

use serde::{Deserialize, Serialize};

pub use idx::{load_idx, load_idx_images, load_image_dir, save_idx};
pub use perturb::{perturb, PerturbKind};
pub use phash::{hamming, phash, Fingerprint};
pub use synth::{
    synth_image_domain, synth_related_domains, synth_two_domains, SynthSpec, SynthWorld,
};

use crate::error::{arg_err, shape_err, Error, Result};
use crate::numcore::{Mat2, Rng};

/// Default fraction of each dataset used for training.
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

/// A collection of samples, one per row, with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    name: String,
    features: Mat2,
    labels: Option<Vec<usize>>,
    n_categories: usize,
    image_shape: Option<(usize, usize)>,
}

/// A dataset whose labels have been removed. This is the only form in which
/// target-domain data reaches the domain-adaptation trainers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnlabeledDataset {
    name: String,
    features: Mat2,
    n_categories: usize,
    image_shape: Option<(usize, usize)>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: Mat2,
        labels: Option<Vec<usize>>,
        n_categories: usize,
        image_shape: Option<(usize, usize)>,
    ) -> Result<Self> {
        if n_categories == 0 {
            return arg_err("n_categories must be positive");
        }
        if let Some(labels) = &labels {
            if labels.len() != features.rows() {
                return shape_err(format!(
                    "{} labels for {} samples",
                    labels.len(),
                    features.rows()
                ));
            }
            if let Some(bad) = labels.iter().find(|&&y| y >= n_categories) {
                return arg_err(format!("label {bad} out of range for {n_categories} categories"));
            }
        }
        if features.as_slice().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return arg_err("feature values must lie in [0, 1]");
        }
        if let Some((h, w)) = image_shape {
            if h * w != features.cols() {
                return shape_err(format!(
                    "image shape {h}x{w} does not match width {}",
                    features.cols()
                ));
            }
        }
        Ok(Self {
            name: name.into(),
            features,
            labels,
            n_categories,
            image_shape,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn features(&self) -> &Mat2 {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Labels or an error naming the dataset.
    pub fn require_labels(&self) -> Result<&[usize]> {
        self.labels()
            .ok_or_else(|| Error::Argument(format!("dataset '{}' is unlabeled", self.name)))
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    pub fn image_shape(&self) -> Option<(usize, usize)> {
        self.image_shape
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> usize {
        self.features.cols()
    }

    /// Samples at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            features: self.features.select_rows(idx),
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
            n_categories: self.n_categories,
            image_shape: self.image_shape,
        }
    }

    pub fn without_labels(&self) -> UnlabeledDataset {
        UnlabeledDataset {
            name: self.name.clone(),
            features: self.features.clone(),
            n_categories: self.n_categories,
            image_shape: self.image_shape,
        }
    }

    /// Sample image `i` as an `h × w` matrix.
    pub fn image(&self, i: usize) -> Result<Mat2> {
        let (h, w) = self
            .image_shape
            .ok_or_else(|| Error::Unsupported(format!("dataset '{}' is not image-valued", self.name)))?;
        Mat2::from_vec(h, w, self.features.row(i).to_vec())
    }

    /// Indices of the samples of each category.
    pub fn indices_by_category(&self) -> Result<Vec<Vec<usize>>> {
        let labels = self.require_labels()?;
        let mut groups = vec![Vec::new(); self.n_categories];
        for (i, &y) in labels.iter().enumerate() {
            groups[y].push(i);
        }
        Ok(groups)
    }

    fn compatible(&self, other: &Dataset) -> Result<()> {
        if self.n_categories != other.n_categories {
            return shape_err(format!(
                "'{}' has {} categories, '{}' has {}",
                self.name, self.n_categories, other.name, other.n_categories
            ));
        }
        if self.width() != other.width() {
            return shape_err(format!(
                "'{}' has width {}, '{}' has width {}",
                self.name,
                self.width(),
                other.name,
                other.width()
            ));
        }
        Ok(())
    }
}

impl UnlabeledDataset {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn features(&self) -> &Mat2 {
        &self.features
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    pub fn image_shape(&self) -> Option<(usize, usize)> {
        self.image_shape
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> usize {
        self.features.cols()
    }
}

/// Disjoint training and non-training partitions of one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Dataset,
    pub non_train: Dataset,
    pub train_fraction: f64,
}

/// Label-free view of a [`Split`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnlabeledSplit {
    pub train: UnlabeledDataset,
    pub non_train: UnlabeledDataset,
}

impl Split {
    /// Shuffles and partitions `data`. Labeled data is split per category so
    /// every category keeps roughly `train_fraction` of its samples.
    pub fn new(data: &Dataset, train_fraction: f64, rng: &mut Rng) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return arg_err("train_fraction must lie strictly between 0 and 1");
        }
        let groups = match data.labels() {
            Some(_) => data.indices_by_category()?,
            None => vec![(0..data.len()).collect()],
        };
        let mut train_idx = Vec::new();
        let mut rest_idx = Vec::new();
        for mut group in groups {
            rng.shuffle(&mut group);
            let n_train = (group.len() as f64 * train_fraction).round() as usize;
            train_idx.extend_from_slice(&group[..n_train]);
            rest_idx.extend_from_slice(&group[n_train..]);
        }
        train_idx.sort_unstable();
        rest_idx.sort_unstable();
        Ok(Self {
            train: data.select(&train_idx),
            non_train: data.select(&rest_idx),
            train_fraction,
        })
    }

    /// Wraps partitions that were split elsewhere (e.g. MNIST train/test files).
    pub fn from_parts(train: Dataset, non_train: Dataset) -> Result<Self> {
        train.compatible(&non_train)?;
        let total = train.len() + non_train.len();
        let train_fraction = if total == 0 {
            0.0
        } else {
            train.len() as f64 / total as f64
        };
        Ok(Self {
            train,
            non_train,
            train_fraction,
        })
    }

    pub fn n_categories(&self) -> usize {
        self.train.n_categories()
    }

    pub fn name(&self) -> &str {
        self.train.name()
    }

    /// Both partitions back in one dataset, train first.
    pub fn merged(&self) -> Result<Dataset> {
        mix(&self.train, &self.non_train)
    }

    pub fn without_labels(&self) -> UnlabeledSplit {
        UnlabeledSplit {
            train: self.train.without_labels(),
            non_train: self.non_train.without_labels(),
        }
    }

    pub fn map(&self, f: impl Fn(&Dataset) -> Result<Dataset>) -> Result<Split> {
        Ok(Split {
            train: f(&self.train)?,
            non_train: f(&self.non_train)?,
            train_fraction: self.train_fraction,
        })
    }
}

/// An ordered, non-empty list of compatible datasets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    datasets: Vec<Dataset>,
}

impl Domain {
    pub fn new(datasets: Vec<Dataset>) -> Result<Self> {
        let first = datasets
            .first()
            .ok_or_else(|| Error::Argument("a domain needs at least one dataset".into()))?;
        for d in &datasets[1..] {
            first.compatible(d)?;
        }
        Ok(Self { datasets })
    }

    pub fn single(dataset: Dataset) -> Self {
        Self {
            datasets: vec![dataset],
        }
    }

    pub fn datasets(&self) -> &[Dataset] {
        &self.datasets
    }

    pub fn name(&self) -> String {
        let names: Vec<&str> = self.datasets.iter().map(Dataset::name).collect();
        if names.len() == 1 {
            names[0].to_string()
        } else {
            format!("Mix({})", names.join("+"))
        }
    }

    /// All member datasets concatenated in order.
    pub fn flatten(&self) -> Result<Dataset> {
        let mut it = self.datasets.iter();
        let mut acc = it.next().expect("non-empty").clone();
        for d in it {
            acc = mix(&acc, d)?;
        }
        Ok(acc.with_name(self.name()))
    }
}

/// Total number of samples across the member datasets.
pub fn domain_size(d: &Domain) -> usize {
    d.datasets.iter().map(Dataset::len).sum()
}

/// Number of member datasets.
pub fn domain_diversity(d: &Domain) -> usize {
    d.datasets.len()
}

/// Concatenation of `a` then `b`.
pub fn mix(a: &Dataset, b: &Dataset) -> Result<Dataset> {
    a.compatible(b)?;
    let labels = match (&a.labels, &b.labels) {
        (Some(x), Some(y)) => Some(x.iter().chain(y).copied().collect()),
        (None, None) => None,
        _ => return arg_err("cannot mix labeled with unlabeled data"),
    };
    let image_shape = if a.image_shape == b.image_shape {
        a.image_shape
    } else {
        None
    };
    Ok(Dataset {
        name: format!("{}+{}", a.name, b.name),
        features: a.features.vstack(&b.features)?,
        labels,
        n_categories: a.n_categories,
        image_shape,
    })
}

/// At most `k` samples of every category, drawn without replacement. Kept
/// samples stay in their original order.
pub fn subset_per_category(d: &Dataset, k: usize, rng: &mut Rng) -> Result<Dataset> {
    if k == 0 {
        return arg_err("k must be at least 1");
    }
    let mut keep = Vec::new();
    for mut group in d.indices_by_category()? {
        rng.shuffle(&mut group);
        group.truncate(k);
        keep.extend(group);
    }
    keep.sort_unstable();
    Ok(d.select(&keep))
}

/// Element-wise mean image over every sample of every member dataset.
pub fn domain_norm(d: &Domain) -> Result<Mat2> {
    let (h, w) = d.datasets[0].image_shape.ok_or_else(|| {
        Error::Unsupported(format!("domain '{}' is not image-valued", d.name()))
    })?;
    if d.datasets.iter().any(|x| x.image_shape != Some((h, w))) {
        return Err(Error::Unsupported("member image shapes differ".into()));
    }
    let n = domain_size(d);
    if n == 0 {
        return arg_err("cannot average an empty domain");
    }
    let mut sum = vec![0.0; h * w];
    for ds in &d.datasets {
        for row in ds.features.iter_rows() {
            sum.iter_mut().zip(row).for_each(|(s, &x)| *s += x);
        }
    }
    let mean = sum
        .into_iter()
        .map(|s| (s / n as f64).clamp(0.0, 1.0))
        .collect();
    Mat2::from_vec(h, w, mean)
}

/// `1 − hamming(phash(‖source‖), phash(‖target‖)) / 64`.
pub fn similarity(source: &Domain, target: &Domain) -> Result<f64> {
    let a = phash(&domain_norm(source)?)?;
    let b = phash(&domain_norm(target)?)?;
    Ok(a.similarity(&b))
}
