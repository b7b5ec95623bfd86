//! Synthetic "different but related" domains.
//!
//! Every class has a center in `[0, 1]^dim`. A domain is obtained by
//! translating all centers by `shift · u`, where `u` is a direction with unit
//! root-mean-square per coordinate, and sampling `center + noise · N(0, I)`
//! clamped to `[0, 1]`. Every domain shares the label semantics of the
//! others.
//!
//! In image mode (`image_side` set) centers and directions are smooth blob
//! images, so domain norms carry low-frequency structure that perceptual
//! hashing can see.

use serde::{Deserialize, Serialize};

use super::{Dataset, Domain, Split, DEFAULT_TRAIN_FRACTION};
use crate::error::{arg_err, Result};
use crate::numcore::{Mat2, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_per_class: usize,
    /// Per-class count for the target domain; `n_per_class` when unset.
    pub n_per_class_target: Option<usize>,
    pub n_classes: usize,
    /// Feature width. Ignored in image mode, where it is `image_side²`.
    pub dim: usize,
    /// RMS per-coordinate translation of the target centers.
    pub domain_shift: f64,
    /// Per-coordinate standard deviation of the samples.
    pub noise: f64,
    /// Half-width of the uniform box around 0.5 that centers are drawn from.
    pub center_spread: f64,
    pub image_side: Option<usize>,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_per_class: 60,
            n_per_class_target: None,
            n_classes: 4,
            dim: 16,
            domain_shift: 0.1,
            noise: 0.1,
            center_spread: 0.3,
            image_side: None,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn width(&self) -> usize {
        match self.image_side {
            Some(s) => s * s,
            None => self.dim,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return arg_err("n_classes must be at least 2");
        }
        if self.image_side.is_none() && self.dim < 2 {
            return arg_err("dim must be at least 2");
        }
        if self.image_side.is_some_and(|s| s < 8) {
            return arg_err("image_side must be at least 8");
        }
        if !(self.noise >= 0.0 && self.domain_shift.is_finite() && self.center_spread >= 0.0) {
            return arg_err("noise, shift and spread must be finite and non-negative");
        }
        Ok(())
    }
}

/// Shared class centers from which related domains are drawn.
#[derive(Clone, Debug)]
pub struct SynthWorld {
    spec: SynthSpec,
    centers: Mat2,
}

impl SynthWorld {
    pub fn new(spec: &SynthSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = Rng::derive(spec.seed, 0);
        let width = spec.width();
        let mut centers = Mat2::zeros(spec.n_classes, width);
        for c in 0..spec.n_classes {
            let row = match spec.image_side {
                Some(side) => blob_image(side, &mut rng, 4)
                    .into_iter()
                    .map(|v| 0.15 + 0.45 * v)
                    .collect(),
                None => (0..width)
                    .map(|_| 0.5 + rng.uniform_in(-spec.center_spread, spec.center_spread))
                    .collect::<Vec<_>>(),
            };
            centers.row_mut(c).copy_from_slice(&row);
        }
        Ok(Self {
            spec: spec.clone(),
            centers,
        })
    }

    pub fn spec(&self) -> &SynthSpec {
        &self.spec
    }

    /// Unit-RMS translation direction number `id`.
    pub fn direction(&self, id: u64) -> Vec<f64> {
        let mut rng = Rng::derive(self.spec.seed, 1000 + id);
        let raw: Vec<f64> = match self.spec.image_side {
            Some(side) => blob_image(side, &mut rng, 3)
                .into_iter()
                .map(|v| v - 0.5)
                .collect(),
            None => (0..self.spec.width()).map(|_| rng.normal()).collect(),
        };
        let rms = (raw.iter().map(|v| v * v).sum::<f64>() / raw.len() as f64).sqrt();
        raw.into_iter().map(|v| v / rms.max(1e-12)).collect()
    }

    /// Draws a labeled domain translated by `shift` along direction
    /// `direction_id`, using random stream `stream`, and splits it.
    pub fn domain(
        &self,
        name: &str,
        shift: f64,
        direction_id: u64,
        n_per_class: usize,
        stream: u64,
    ) -> Result<Split> {
        let dir = self.direction(direction_id);
        let mut rng = Rng::derive(self.spec.seed, 2000 + stream);
        let width = self.spec.width();
        let n = n_per_class * self.spec.n_classes;
        let mut features = Mat2::zeros(n, width);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % self.spec.n_classes;
            let center = self.centers.row(c);
            for (j, x) in features.row_mut(i).iter_mut().enumerate() {
                let v = center[j] + shift * dir[j] + self.spec.noise * rng.normal();
                *x = v.clamp(0.0, 1.0);
            }
            labels.push(c);
        }
        let shape = self.spec.image_side.map(|s| (s, s));
        let data = Dataset::new(name, features, Some(labels), self.spec.n_classes, shape)?;
        let mut split_rng = Rng::derive(self.spec.seed, 3000 + stream);
        Split::new(&data, self.spec.train_fraction, &mut split_rng)
    }
}

/// Smooth image in `[0, 1]` made of `k` Gaussian blobs.
fn blob_image(side: usize, rng: &mut Rng, k: usize) -> Vec<f64> {
    let s = side as f64;
    let blobs: Vec<(f64, f64, f64, f64)> = (0..k)
        .map(|_| {
            (
                rng.uniform_in(0.15 * s, 0.85 * s),
                rng.uniform_in(0.15 * s, 0.85 * s),
                rng.uniform_in(0.12 * s, 0.3 * s),
                rng.uniform_in(0.4, 1.0),
            )
        })
        .collect();
    let mut img = vec![0.0; side * side];
    for r in 0..side {
        for c in 0..side {
            let v: f64 = blobs
                .iter()
                .map(|&(y, x, w, a)| {
                    let d2 = (r as f64 - y).powi(2) + (c as f64 - x).powi(2);
                    a * (-d2 / (2.0 * w * w)).exp()
                })
                .sum();
            img[r * side + c] = v;
        }
    }
    let max = img.iter().copied().fold(0.0, f64::max).max(1e-12);
    img.iter_mut().for_each(|v| *v /= max);
    img
}

/// Source and target domains sharing class centers; the target is shifted by
/// `spec.domain_shift`.
pub fn synth_two_domains(spec: &SynthSpec) -> Result<(Split, Split)> {
    let world = SynthWorld::new(spec)?;
    let source = world.domain("source", 0.0, 0, spec.n_per_class, 0)?;
    let target = world.domain(
        "target",
        spec.domain_shift,
        0,
        spec.n_per_class_target.unwrap_or(spec.n_per_class),
        1,
    )?;
    Ok((source, target))
}

/// Domains with the given shifts, each along its own direction.
pub fn synth_related_domains(spec: &SynthSpec, shifts: &[f64]) -> Result<Vec<Split>> {
    let world = SynthWorld::new(spec)?;
    shifts
        .iter()
        .enumerate()
        .map(|(i, &shift)| {
            world.domain(&format!("domain{i}"), shift, i as u64, spec.n_per_class, 10 + i as u64)
        })
        .collect()
}

/// A single-dataset image domain of `n_per_class · n_classes` images.
pub fn synth_image_domain(side: usize, n_classes: usize, n_per_class: usize, noise: f64, seed: u64) -> Result<Domain> {
    let spec = SynthSpec {
        n_per_class,
        n_classes,
        noise,
        image_side: Some(side),
        domain_shift: 0.0,
        seed,
        ..SynthSpec::default()
    };
    let split = SynthWorld::new(&spec)?.domain("images", 0.0, 0, n_per_class, 0)?;
    Ok(Domain::single(split.merged()?.with_name("images")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_shift_gives_identical_distributions() {
        let spec = SynthSpec {
            domain_shift: 0.0,
            ..SynthSpec::default()
        };
        let world = SynthWorld::new(&spec).unwrap();
        // Same stream and zero shift: identical draws.
        let a = world.domain("a", 0.0, 0, 10, 5).unwrap();
        let b = world.domain("a", spec.domain_shift, 0, 10, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn same_seed_same_domains() {
        let spec = SynthSpec::default();
        assert_eq!(synth_two_domains(&spec).unwrap(), synth_two_domains(&spec).unwrap());
        let other = SynthSpec { seed: 1, ..spec };
        assert_ne!(synth_two_domains(&other).unwrap().0, synth_two_domains(&SynthSpec::default()).unwrap().0);
    }

    #[test]
    fn shift_moves_means() {
        let spec = SynthSpec {
            noise: 0.0,
            domain_shift: 0.05,
            ..SynthSpec::default()
        };
        let (s, t) = synth_two_domains(&spec).unwrap();
        let ms = s.merged().unwrap().features().column_means();
        let mt = t.merged().unwrap().features().column_means();
        let rms = (ms.iter().zip(&mt).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / ms.len() as f64)
            .sqrt();
        assert!(rms > 0.03 && rms <= 0.0500001, "rms {rms}");
    }

    #[test]
    fn sizes_and_labels() {
        let spec = SynthSpec {
            n_per_class: 10,
            n_per_class_target: Some(5),
            n_classes: 3,
            ..SynthSpec::default()
        };
        let (s, t) = synth_two_domains(&spec).unwrap();
        assert_eq!(s.train.len() + s.non_train.len(), 30);
        assert_eq!(t.train.len() + t.non_train.len(), 15);
        assert_eq!(s.train.len(), 24);
        assert_eq!(t.n_categories(), 3);
    }

    #[test]
    fn image_mode() {
        let d = synth_image_domain(16, 3, 4, 0.05, 2).unwrap();
        let ds = &d.datasets()[0];
        assert_eq!(ds.image_shape(), Some((16, 16)));
        assert_eq!(ds.len(), 12);
        assert!(SynthWorld::new(&SynthSpec { image_side: Some(4), ..SynthSpec::default() }).is_err());
        assert!(SynthWorld::new(&SynthSpec { n_classes: 1, ..SynthSpec::default() }).is_err());
    }
}
