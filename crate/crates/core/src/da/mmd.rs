//! Maximum mean discrepancy between two sample sets.
//!
//! Linear kernel: `‖mean(xs) − mean(xt)‖₂`.
//!
//! Gaussian kernel `k(a, b) = exp(−‖a − b‖² / h)` with the biased estimator
//!
//! ```text
//! MMD²_b = mean k(s, s′) + mean k(t, t′) − 2 · mean k(s, t)
//! ```
//!
//! and `MMD = sqrt(max(0, MMD²_b))`. The default `h` is the median of pairwise
//! squared distances over the pooled samples.

use crate::error::{arg_err, Result};
use crate::numcore::{dot, sq_dist, Bandwidth, Kernel, Mat2};

/// Squared MMD and its gradients with respect to every row of both inputs.
#[derive(Clone, Debug)]
pub struct MmdGrad {
    pub mmd2: f64,
    pub grad_source: Mat2,
    pub grad_target: Mat2,
}

fn check(xs: &Mat2, xt: &Mat2) -> Result<()> {
    if xs.rows() == 0 || xt.rows() == 0 {
        return arg_err("MMD needs non-empty sample sets");
    }
    if xs.cols() != xt.cols() {
        return arg_err(format!("MMD widths differ: {} vs {}", xs.cols(), xt.cols()));
    }
    Ok(())
}

/// Median of pairwise squared distances over `xs ∪ xt` (distinct pairs).
/// Falls back to 1 when every pair coincides.
pub fn median_bandwidth(xs: &Mat2, xt: &Mat2) -> f64 {
    let rows: Vec<&[f64]> = xs.iter_rows().chain(xt.iter_rows()).collect();
    let mut d = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            d.push(sq_dist(rows[i], rows[j]));
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let med = if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

/// Resolves the configured bandwidth for this pair of sets.
pub fn resolve_bandwidth(xs: &Mat2, xt: &Mat2, bandwidth: Bandwidth) -> f64 {
    match bandwidth {
        Bandwidth::Fixed(h) => h,
        Bandwidth::MedianHeuristic => median_bandwidth(xs, xt),
    }
}

/// Mean of `k(a_i, b_j)` over all pairs.
fn mean_kernel(a: &Mat2, b: &Mat2, h: f64) -> f64 {
    let mut s = 0.0;
    for ra in a.iter_rows() {
        for rb in b.iter_rows() {
            s += (-sq_dist(ra, rb) / h).exp();
        }
    }
    s / (a.rows() * b.rows()) as f64
}

/// Squared MMD; non-negative for the linear kernel, may dip slightly below zero
/// from round-off for the Gaussian kernel.
pub fn mmd2(xs: &Mat2, xt: &Mat2, kernel: Kernel, bandwidth: Bandwidth) -> Result<f64> {
    check(xs, xt)?;
    Ok(match kernel {
        Kernel::Linear => {
            let ms = xs.column_means();
            let mt = xt.column_means();
            ms.iter().zip(&mt).map(|(a, b)| (a - b) * (a - b)).sum()
        }
        Kernel::Rbf => {
            let h = resolve_bandwidth(xs, xt, bandwidth);
            mean_kernel(xs, xs, h) + mean_kernel(xt, xt, h) - 2.0 * mean_kernel(xs, xt, h)
        }
    })
}

pub fn mmd(xs: &Mat2, xt: &Mat2, kernel: Kernel, bandwidth: Bandwidth) -> Result<f64> {
    Ok(mmd2(xs, xt, kernel, bandwidth)?.max(0.0).sqrt())
}

/// Squared MMD with analytic gradients. A median-heuristic bandwidth is
/// evaluated once and then held constant for differentiation.
pub fn mmd2_grad(xs: &Mat2, xt: &Mat2, kernel: Kernel, bandwidth: Bandwidth) -> Result<MmdGrad> {
    check(xs, xt)?;
    let (m, n, width) = (xs.rows(), xt.rows(), xs.cols());
    match kernel {
        Kernel::Linear => {
            let ms = xs.column_means();
            let mt = xt.column_means();
            let diff: Vec<f64> = ms.iter().zip(&mt).map(|(a, b)| a - b).collect();
            let mmd2 = dot(&diff, &diff);
            let mut gs = Mat2::zeros(m, width);
            let mut gt = Mat2::zeros(n, width);
            for r in 0..m {
                for (g, d) in gs.row_mut(r).iter_mut().zip(&diff) {
                    *g = 2.0 * d / m as f64;
                }
            }
            for r in 0..n {
                for (g, d) in gt.row_mut(r).iter_mut().zip(&diff) {
                    *g = -2.0 * d / n as f64;
                }
            }
            Ok(MmdGrad {
                mmd2,
                grad_source: gs,
                grad_target: gt,
            })
        }
        Kernel::Rbf => {
            let h = resolve_bandwidth(xs, xt, bandwidth);
            let (mf, nf) = (m as f64, n as f64);
            let mut gs = Mat2::zeros(m, width);
            let mut gt = Mat2::zeros(n, width);
            let (mut kss, mut ktt, mut kst) = (0.0, 0.0, 0.0);

            // ∂k(a, b)/∂a = −(2/h)(a − b)k(a, b)
            for i in 0..m {
                for j in 0..m {
                    let k = (-sq_dist(xs.row(i), xs.row(j)) / h).exp();
                    kss += k;
                    let c = -2.0 / h * k * 2.0 / (mf * mf);
                    accumulate_pair(&mut gs, i, xs.row(i), xs.row(j), c);
                }
            }
            for i in 0..n {
                for j in 0..n {
                    let k = (-sq_dist(xt.row(i), xt.row(j)) / h).exp();
                    ktt += k;
                    let c = -2.0 / h * k * 2.0 / (nf * nf);
                    accumulate_pair(&mut gt, i, xt.row(i), xt.row(j), c);
                }
            }
            for i in 0..m {
                for j in 0..n {
                    let k = (-sq_dist(xs.row(i), xt.row(j)) / h).exp();
                    kst += k;
                    let c = -2.0 / h * k * (-2.0 / (mf * nf));
                    accumulate_pair(&mut gs, i, xs.row(i), xt.row(j), c);
                    accumulate_pair(&mut gt, j, xt.row(j), xs.row(i), c);
                }
            }
            let mmd2 = kss / (mf * mf) + ktt / (nf * nf) - 2.0 * kst / (mf * nf);
            Ok(MmdGrad {
                mmd2,
                grad_source: gs,
                grad_target: gt,
            })
        }
    }
}

/// `g[row] += c · (a − b)`
#[inline]
fn accumulate_pair(g: &mut Mat2, row: usize, a: &[f64], b: &[f64], c: f64) {
    for ((gv, &x), &y) in g.row_mut(row).iter_mut().zip(a).zip(b) {
        *gv += c * (x - y);
    }
}
