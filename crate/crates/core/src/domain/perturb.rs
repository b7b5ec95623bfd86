//! Image corruptions used to craft source domains similar to a target.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{arg_err, Error, Result};
use crate::numcore::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbKind {
    /// `clamp(x + s)`
    Brightness,
    /// `clamp((x − mean(x))·s + mean(x))`, mean taken per image.
    Contrast,
    /// `clamp(x + N(0, s²))`
    GaussianNoise,
    /// Horizontal box blur of length `round(s)`, edges replicated. Odd lengths
    /// are centered; even lengths lean right by half a pixel.
    MotionBlur,
}

impl PerturbKind {
    pub const ALL: [PerturbKind; 4] = [
        PerturbKind::Brightness,
        PerturbKind::Contrast,
        PerturbKind::GaussianNoise,
        PerturbKind::MotionBlur,
    ];

    pub fn default_severity(self) -> f64 {
        match self {
            PerturbKind::Brightness => 0.3,
            PerturbKind::Contrast => 0.4,
            PerturbKind::GaussianNoise => 0.08,
            PerturbKind::MotionBlur => 3.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PerturbKind::Brightness => "brightness",
            PerturbKind::Contrast => "contrast",
            PerturbKind::GaussianNoise => "gaussian_noise",
            PerturbKind::MotionBlur => "motion_blur",
        }
    }
}

impl fmt::Display for PerturbKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PerturbKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "brightness" => Ok(PerturbKind::Brightness),
            "contrast" => Ok(PerturbKind::Contrast),
            "gaussian_noise" | "noise" => Ok(PerturbKind::GaussianNoise),
            "motion_blur" | "blur" => Ok(PerturbKind::MotionBlur),
            other => arg_err(format!("unknown perturbation '{other}'")),
        }
    }
}

/// Applies `kind` at `severity` to every image of `d`. Size, labels and image
/// shape are preserved and every output value stays in `[0, 1]`.
pub fn perturb(d: &Dataset, kind: PerturbKind, severity: f64, rng: &mut Rng) -> Result<Dataset> {
    let (h, w) = d.image_shape().ok_or_else(|| {
        Error::Unsupported(format!("dataset '{}' is not image-valued", d.name()))
    })?;
    if !(severity.is_finite() && severity >= 0.0) {
        return arg_err(format!("severity must be finite and non-negative, got {severity}"));
    }
    let blur_len = if kind == PerturbKind::MotionBlur {
        let len = severity.round() as usize;
        if len == 0 {
            return arg_err("motion blur length must round to at least 1");
        }
        len
    } else {
        0
    };

    let mut features = d.features().clone();
    for r in 0..features.rows() {
        let img = features.row_mut(r);
        match kind {
            PerturbKind::Brightness => {
                img.iter_mut().for_each(|x| *x = (*x + severity).clamp(0.0, 1.0));
            }
            PerturbKind::Contrast => {
                let mean = img.iter().sum::<f64>() / img.len().max(1) as f64;
                img.iter_mut()
                    .for_each(|x| *x = ((*x - mean) * severity + mean).clamp(0.0, 1.0));
            }
            PerturbKind::GaussianNoise => {
                img.iter_mut()
                    .for_each(|x| *x = (*x + severity * rng.normal()).clamp(0.0, 1.0));
            }
            PerturbKind::MotionBlur => blur_rows(img, h, w, blur_len),
        }
    }
    let name = format!("{}~{}", d.name(), kind);
    Dataset::new(
        name,
        features,
        d.labels().map(<[usize]>::to_vec),
        d.n_categories(),
        Some((h, w)),
    )
}

fn blur_rows(img: &mut [f64], h: usize, w: usize, len: usize) {
    let back = (len - 1) / 2;
    let mut line = vec![0.0; w];
    for r in 0..h {
        let row = &mut img[r * w..(r + 1) * w];
        line.copy_from_slice(row);
        for (c, out) in row.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in 0..len {
                let src = (c + k).saturating_sub(back).min(w - 1);
                s += line[src];
            }
            *out = (s / len as f64).clamp(0.0, 1.0);
        }
    }
}
