//! DCT perceptual hash of a grayscale image.
//!
//! 1. Resample to 32×32 by area-weighted box means (exact box pooling when the
//!    side is a multiple of 32; fractional pixel coverage otherwise).
//! 2. Orthonormal 2D DCT-II, keeping the top-left 8×8 block.
//! 3. Median of the 63 AC coefficients (the DC term is excluded).
//! 4. Bit `i·8 + j` is set iff coefficient `(i, j)` is strictly above the
//!    median. Bit 0 is the most significant bit of the `u64`.
//!
//! The DC coefficient only encodes mean brightness, so its bit is always 0.
//! Coefficients within [`SNAP`] of zero are treated as exactly zero so that
//! mathematically vanishing terms hash identically regardless of round-off.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};
use crate::numcore::Mat2;

const SIDE: usize = 32;
const BLOCK: usize = 8;
const SNAP: f64 = 1e-10;

/// 64-bit perceptual fingerprint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fingerprint {
    bits: u64,
}

impl Fingerprint {
    pub const BIT_LENGTH: u32 = 64;

    pub fn from_bits(bits: u64) -> Self {
        Self { bits }
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn bit_length(&self) -> u32 {
        Self::BIT_LENGTH
    }

    /// Bit `i` in row-major block order, bit 0 first.
    pub fn bit(&self, i: usize) -> bool {
        assert!(i < 64);
        self.bits >> (63 - i) & 1 == 1
    }

    pub fn hamming(&self, other: &Fingerprint) -> u32 {
        (self.bits ^ other.bits).count_ones()
    }

    /// `1 − hamming / 64`.
    pub fn similarity(&self, other: &Fingerprint) -> f64 {
        1.0 - self.hamming(other) as f64 / Self::BIT_LENGTH as f64
    }

    pub fn to_hex(&self) -> String {
        format!("{:016x}", self.bits)
    }
}

pub fn hamming(a: &Fingerprint, b: &Fingerprint) -> u32 {
    a.hamming(b)
}

pub fn phash(img: &Mat2) -> Result<Fingerprint> {
    if img.rows() < BLOCK || img.cols() < BLOCK {
        return arg_err(format!(
            "image {}x{} is smaller than {BLOCK}x{BLOCK}",
            img.rows(),
            img.cols()
        ));
    }
    let small = resample(img, SIDE, SIDE)?;
    let coeffs = dct_block(&small)?;
    let mut ac: Vec<f64> = coeffs.as_slice()[1..].to_vec();
    ac.sort_by(f64::total_cmp);
    let median = ac[ac.len() / 2];

    let mut bits = 0u64;
    for (k, &c) in coeffs.as_slice().iter().enumerate().skip(1) {
        if c > median {
            bits |= 1 << (63 - k);
        }
    }
    Ok(Fingerprint { bits })
}

/// Area-weighted resampling matrix mapping `n` source cells onto `m` targets.
/// Each row sums to one.
fn box_weights(n: usize, m: usize) -> Mat2 {
    let mut w = Mat2::zeros(m, n);
    let step = n as f64 / m as f64;
    for i in 0..m {
        let (a, b) = (i as f64 * step, (i + 1) as f64 * step);
        let first = a.floor() as usize;
        let last = (b.ceil() as usize).min(n);
        for j in first..last {
            let overlap = (b.min(j as f64 + 1.0) - a.max(j as f64)).max(0.0);
            w[(i, j)] = overlap / step;
        }
    }
    w
}

pub(crate) fn resample(img: &Mat2, rows: usize, cols: usize) -> Result<Mat2> {
    if img.shape() == (rows, cols) {
        return Ok(img.clone());
    }
    let wr = box_weights(img.rows(), rows);
    let wc = box_weights(img.cols(), cols);
    wr.matmul(img)?.matmul_t(&wc)
}

/// First `BLOCK` orthonormal DCT-II basis rows over `SIDE` samples.
fn dct_basis() -> Mat2 {
    let mut d = Mat2::zeros(BLOCK, SIDE);
    let n = SIDE as f64;
    for u in 0..BLOCK {
        let alpha = if u == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        for x in 0..SIDE {
            d[(u, x)] = alpha * (PI * (2 * x + 1) as f64 * u as f64 / (2.0 * n)).cos();
        }
    }
    d
}

/// Top-left `BLOCK × BLOCK` DCT-II coefficients of a `SIDE × SIDE` image.
pub(crate) fn dct_block(img: &Mat2) -> Result<Mat2> {
    let d = dct_basis();
    let mut c = d.matmul(img)?.matmul_t(&d)?;
    for v in c.as_mut_slice() {
        if v.abs() < SNAP {
            *v = 0.0;
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(h: usize, w: usize) -> Mat2 {
        let mut m = Mat2::zeros(h, w);
        for r in 0..h {
            for c in 0..w {
                let x = r as f64 / h as f64;
                let y = c as f64 / w as f64;
                m[(r, c)] = 0.3 + 0.2 * (3.0 * x).sin() * (2.0 * y + 0.5).cos() + 0.1 * x * y;
            }
        }
        m
    }

    /// Direct quadruple-sum DCT-II for one coefficient.
    fn dct_direct(img: &Mat2, u: usize, v: usize) -> f64 {
        let n = img.rows() as f64;
        let a = |k: usize| if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        let mut s = 0.0;
        for x in 0..img.rows() {
            for y in 0..img.cols() {
                s += img[(x, y)]
                    * (PI * (2 * x + 1) as f64 * u as f64 / (2.0 * n)).cos()
                    * (PI * (2 * y + 1) as f64 * v as f64 / (2.0 * n)).cos();
            }
        }
        a(u) * a(v) * s
    }

    #[test]
    fn block_matches_direct_sum() {
        let img = pattern(32, 32);
        let c = dct_block(&img).unwrap();
        for u in 0..8 {
            for v in 0..8 {
                assert!((c[(u, v)] - dct_direct(&img, u, v)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_image_hashes_to_zero() {
        for v in [0.0, 0.37, 1.0] {
            assert_eq!(phash(&Mat2::filled(40, 28, v)).unwrap().bits(), 0);
        }
    }

    #[test]
    fn brightness_shift_leaves_ac_terms_and_hash_unchanged() {
        let img = pattern(32, 32);
        let shifted = img.map(|x| x + 0.25);
        let a = dct_block(&img).unwrap();
        let b = dct_block(&shifted).unwrap();
        for k in 1..64 {
            assert!((a.as_slice()[k] - b.as_slice()[k]).abs() < 1e-12);
        }
        assert!(b.as_slice()[0] > a.as_slice()[0]);
        assert_eq!(phash(&img).unwrap(), phash(&shifted).unwrap());
        // Non-square, non-multiple-of-32 sizes go through resampling.
        let odd = pattern(28, 45);
        assert_eq!(phash(&odd).unwrap(), phash(&odd.map(|x| x + 0.1)).unwrap());
    }

    #[test]
    fn single_frequency_sets_one_bit() {
        // Only coefficient (1, 0) is non-zero, so the AC median is 0 and the
        // single set bit sits at index 8.
        let mut img = Mat2::zeros(32, 32);
        for x in 0..32 {
            for y in 0..32 {
                img[(x, y)] = 0.5 + 0.4 * (PI * (2 * x + 1) as f64 / 64.0).cos();
            }
        }
        let fp = phash(&img).unwrap();
        assert_eq!(fp.bits(), 1 << (63 - 8));
        assert!(fp.bit(8));
        assert_eq!(fp.to_hex(), "0080000000000000");
    }

    #[test]
    fn box_pooling_averages_blocks() {
        let img = Mat2::from_vec(64, 64, (0..64 * 64).map(|i| (i % 7) as f64 / 7.0).collect())
            .unwrap();
        let small = resample(&img, 32, 32).unwrap();
        let expect = (img[(0, 0)] + img[(0, 1)] + img[(1, 0)] + img[(1, 1)]) / 4.0;
        assert!((small[(0, 0)] - expect).abs() < 1e-15);
        for r in 0..5 {
            let w = box_weights(28 + r, 32);
            for row in w.iter_rows() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn too_small_is_rejected() {
        assert!(phash(&Mat2::zeros(7, 20)).is_err());
        assert!(phash(&Mat2::zeros(8, 8)).is_ok());
    }

    #[test]
    fn similarity_arithmetic() {
        let a = Fingerprint { bits: 0 };
        let b = Fingerprint { bits: 0xFFFF };
        assert_eq!(a.similarity(&b), 0.75);
        assert_eq!(a.similarity(&a), 1.0);
        assert_eq!(hamming(&a, &Fingerprint { bits: u64::MAX }), 64);
    }
}
