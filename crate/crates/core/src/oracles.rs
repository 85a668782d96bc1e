//! Independent reference implementations used to cross-check the fast paths.
//!
//! These deliberately avoid the production code's shortcuts: the minimax
//! reference scans every prediction-grid point and every adjacent pair, and
//! the Gaussian reference density goes through the quadratic form rather than
//! the natural-parameter dot product. They exist so equivalence can be
//! asserted in tests and from the command line, and must stay independent of
//! the paths they check.

use nalgebra::{DMatrix, DVector};

use crate::buckets::BucketGrid;
use crate::engine::PredictionGrid;
use crate::exp_family::ln_2pi;

/// Worst-case value of a prediction distribution supported on two grid values
/// with P(hi) = q, against the bucket aggregates `a`.
fn pair_value(a: &[f64], lo: f64, lo_b: usize, hi: f64, hi_b: usize, q: f64) -> f64 {
    let c = (1.0 - q) * a[lo_b] * lo + q * a[hi_b] * hi;
    let d = (1.0 - q) * a[lo_b] + q * a[hi_b];
    c.max(c - d)
}

/// Brute-force minimax reference: minimize the worst-case value over all
/// point masses and all adjacent-pair mixtures on the prediction grid. For a
/// pair, the value is a maximum of two affine functions of the mixing weight,
/// so the per-pair optimum sits at an endpoint or where the label coefficient
/// vanishes.
pub fn minimax_brute_force(grid: &BucketGrid, pred: &PredictionGrid, a: &[f64]) -> f64 {
    let buckets: Vec<usize> = (0..pred.n_points())
        .map(|j| grid.bucket_of(pred.value(j)).expect("grid value in range"))
        .collect();
    let mut best = f64::INFINITY;
    for j in 0..pred.n_points() {
        let p = pred.value(j);
        let av = a[buckets[j]];
        best = best.min((av * p).max(av * (p - 1.0)));
    }
    for j in 0..pred.n_points() - 1 {
        let (lo, hi) = (pred.value(j), pred.value(j + 1));
        let (lb, hb) = (buckets[j], buckets[j + 1]);
        let (al, ar) = (a[lb], a[hb]);
        if al != ar {
            let q = al / (al - ar);
            if (0.0..=1.0).contains(&q) {
                best = best.min(pair_value(a, lo, lb, hi, hb, q));
            }
        }
        best = best.min(pair_value(a, lo, lb, hi, hb, 0.0));
        best = best.min(pair_value(a, lo, lb, hi, hb, 1.0));
    }
    best
}

/// Closed-form multivariate normal log-density through the quadratic form.
pub fn normal_log_pdf(x: &[f64], mean: &[f64], cov: &DMatrix<f64>) -> f64 {
    let d = mean.len();
    let chol = cov.clone().cholesky().expect("positive definite");
    let diff = DVector::from_iterator(d, x.iter().zip(mean).map(|(a, b)| a - b));
    let solved = chol.solve(&diff);
    let quad = diff.dot(&solved);
    let log_det = 2.0 * (0..d).map(|i| chol.l()[(i, i)].ln()).sum::<f64>();
    -0.5 * (quad + log_det + d as f64 * ln_2pi())
}

/// Closed-form isotropic normal log-density.
pub fn isotropic_log_pdf(x: &[f64], mean: &[f64], sigma2: f64) -> f64 {
    let d = mean.len() as f64;
    let quad: f64 = x
        .iter()
        .zip(mean)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / sigma2;
    -0.5 * (quad + d * sigma2.ln() + d * ln_2pi())
}
