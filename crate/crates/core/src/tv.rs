//! Monte Carlo total-variation diagnostic between two densities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exp_family::{Component, ModelError};
use crate::mixture::{Mixture, MixtureModel};
use crate::par;
use crate::util::{derive_seed, log_sum_exp};

/// Anything with a log density we can also sample from. Implemented by single
/// components and whole mixtures so the diagnostic works on either.
pub trait Density {
    fn dim(&self) -> usize;
    fn log_density(&self, x: &[f64]) -> f64;
    fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]);
}

impl Density for Component {
    fn dim(&self) -> usize {
        Component::dim(self)
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        Component::log_density(self, x)
    }
    fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        Component::sample_into(self, rng, out)
    }
}

impl Density for Mixture {
    fn dim(&self) -> usize {
        Mixture::dim(self)
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        let mut lj = vec![0.0; self.k()];
        self.log_joint_into(x, &mut lj);
        log_sum_exp(&lj)
    }
    fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        self.sample_x_into(rng, out);
    }
}

impl Density for MixtureModel {
    fn dim(&self) -> usize {
        self.mixture().dim()
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        self.mixture().log_density(x)
    }
    fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        self.mixture().sample_x_into(rng, out);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

pub const MIN_MC_SAMPLES: usize = 100;
const CHUNK: usize = 4096;

/// Estimate `TV(p, q) = ½∫|p - q|` by sampling from the equal mixture
/// `m = ½(p + q)` and averaging `½·|p - q|/m`, a statistic bounded in [0, 1].
/// Returns the estimate with its Monte Carlo standard error. Deterministic
/// given `seed` and independent of thread count.
pub fn tv_distance_mc<P: Density + Sync, Q: Density + Sync>(
    p: &P,
    q: &Q,
    n_mc: usize,
    seed: u64,
) -> Result<TvEstimate, ModelError> {
    tv_distance_impl(p, q, n_mc, seed, false)
}

/// Sequential twin of [`tv_distance_mc`]; same result bit for bit.
pub fn tv_distance_mc_seq<P: Density + Sync, Q: Density + Sync>(
    p: &P,
    q: &Q,
    n_mc: usize,
    seed: u64,
) -> Result<TvEstimate, ModelError> {
    tv_distance_impl(p, q, n_mc, seed, true)
}

fn tv_distance_impl<P: Density + Sync, Q: Density + Sync>(
    p: &P,
    q: &Q,
    n_mc: usize,
    seed: u64,
    sequential: bool,
) -> Result<TvEstimate, ModelError> {
    if n_mc < MIN_MC_SAMPLES {
        return Err(ModelError::TooFewMcSamples {
            got: n_mc,
            min: MIN_MC_SAMPLES,
        });
    }
    if p.dim() != q.dim() {
        return Err(ModelError::DimensionMismatch {
            expected: p.dim(),
            got: q.dim(),
        });
    }
    let dim = p.dim();
    let n_chunks = n_mc.div_ceil(CHUNK);
    let chunk_stats = |c: usize| -> (f64, f64, usize) {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(n_mc);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x7f00 + c as u64));
        let mut x = vec![0.0; dim];
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for _ in lo..hi {
            if rng.random::<f64>() < 0.5 {
                p.sample_into(&mut rng, &mut x);
            } else {
                q.sample_into(&mut rng, &mut x);
            }
            let lp = p.log_density(&x);
            let lq = q.log_density(&x);
            // ½|p-q| / (½(p+q)) = (1-r)/(1+r) with r = exp(min-max) in [0,1].
            let w = if lp == f64::NEG_INFINITY && lq == f64::NEG_INFINITY {
                0.0
            } else {
                let r = (lp.min(lq) - lp.max(lq)).exp();
                (1.0 - r) / (1.0 + r)
            };
            sum += w;
            sumsq += w * w;
        }
        (sum, sumsq, hi - lo)
    };
    let parts = if sequential {
        par::map_indexed_seq(n_chunks, chunk_stats)
    } else {
        par::map_indexed(n_chunks, chunk_stats)
    };
    let (mut sum, mut sumsq, mut n) = (0.0, 0.0, 0usize);
    for (s, s2, c) in parts {
        sum += s;
        sumsq += s2;
        n += c;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = (sumsq / nf - mean * mean).max(0.0);
    Ok(TvEstimate {
        estimate: mean,
        std_error: (var / nf).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exp_family::Component;

    #[test]
    fn identical_distributions_have_zero_tv() {
        let c = Component::gaussian_isotropic(vec![0.0, 0.0], 1.0).unwrap();
        let est = tv_distance_mc(&c, &c.clone(), 10_000, 1).unwrap();
        assert!(est.estimate <= 2.0 * est.std_error.max(1e-12));
    }

    #[test]
    fn far_apart_normals_have_tv_near_one() {
        let a = Component::gaussian_isotropic(vec![0.0], 1.0).unwrap();
        let b = Component::gaussian_isotropic(vec![1000.0], 1.0).unwrap();
        let est = tv_distance_mc(&a, &b, 5_000, 2).unwrap();
        assert!(est.estimate > 0.999, "estimate {}", est.estimate);
    }

    #[test]
    fn rejects_tiny_sample_counts() {
        let c = Component::gaussian_isotropic(vec![0.0], 1.0).unwrap();
        assert!(tv_distance_mc(&c, &c.clone(), 99, 0).is_err());
    }

    #[test]
    fn parallel_matches_sequential() {
        let a = Component::gaussian_isotropic(vec![0.0], 1.0).unwrap();
        let b = Component::gaussian_isotropic(vec![0.7], 1.3).unwrap();
        let x = tv_distance_mc(&a, &b, 20_000, 7).unwrap();
        let y = tv_distance_mc_seq(&a, &b, 20_000, 7).unwrap();
        assert_eq!(x, y);
    }
}
