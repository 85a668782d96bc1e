//! Structure estimators for the cluster-then-predict pipelines: a
//! principal-direction discriminant learner for two isotropic components,
//! and mixture parameter learning by expectation-maximization.
//!
//! Both are practical stand-ins for the black-box estimators the two-phase
//! analysis assumes; downstream checks are phrased against realized accuracy,
//! not against a specific estimator.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::exp_family::{Component, FamilyKind, GaussianParams, ModelError};
use crate::mixture::{Mixture, LEARNED_WEIGHT_FLOOR};
use crate::util::{derive_seed, log_sum_exp};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("numerical failure in responsibilities")]
    NumericalFailure,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Covariance eigenvalues are clamped at this floor during EM so unlucky
/// initializations cannot produce singular components.
pub const COV_EIGENVALUE_FLOOR: f64 = 1e-6;

/// Nearest-estimated-mean cluster assignment; a halfspace for two isotropic
/// components.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedDiscriminant {
    pub means: [Vec<f64>; 2],
}

impl LearnedDiscriminant {
    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    /// Index of the nearest estimated mean; ties go to the first.
    pub fn assign(&self, x: &[f64]) -> usize {
        let d0: f64 = x
            .iter()
            .zip(&self.means[0])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let d1: f64 = x
            .iter()
            .zip(&self.means[1])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        usize::from(d1 < d0)
    }
}

fn grand_mean(samples: &[Vec<f64>], d: usize) -> Vec<f64> {
    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    let n = samples.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Top eigenvector of the centered second-moment matrix, sign-fixed so its
/// first nonzero coordinate is positive.
fn principal_direction(samples: &[Vec<f64>], mean: &[f64]) -> Result<Vec<f64>, EstimatorError> {
    let d = mean.len();
    let n = samples.len() as f64;
    let mut m = DMatrix::zeros(d, d);
    for s in samples {
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] += (s[i] - mean[i]) * (s[j] - mean[j]);
            }
        }
    }
    m /= n;
    if m.amax() < 1e-12 {
        return Err(EstimatorError::DegenerateData(
            "zero variance in every direction".into(),
        ));
    }
    let eig = m.symmetric_eigen();
    let top = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite eigenvalues"))
        .map(|(i, _)| i)
        .expect("nonempty spectrum");
    let mut u: Vec<f64> = eig.eigenvectors.column(top).iter().cloned().collect();
    if let Some(first) = u.iter().find(|v| v.abs() > 1e-12) {
        if *first < 0.0 {
            u.iter_mut().for_each(|v| *v = -*v);
        }
    }
    Ok(u)
}

/// Learn a two-cluster discriminant for isotropic mixtures: split the sample
/// by the sign of its projection on the principal direction through the grand
/// mean, and assign by nearest per-side mean.
pub fn learn_discriminant_2iso(samples: &[Vec<f64>]) -> Result<LearnedDiscriminant, EstimatorError> {
    if samples.is_empty() {
        return Err(EstimatorError::TooFewSamples { min: 68, got: 0 });
    }
    let d = samples[0].len();
    let min = 68.max(4 * d);
    if samples.len() < min {
        return Err(EstimatorError::TooFewSamples {
            min,
            got: samples.len(),
        });
    }
    let mean = grand_mean(samples, d);
    let u = principal_direction(samples, &mean)?;
    let mut side_mean = [vec![0.0; d], vec![0.0; d]];
    let mut side_count = [0usize; 2];
    for s in samples {
        let proj: f64 = s.iter().zip(&mean).zip(&u).map(|((x, m), ui)| (x - m) * ui).sum();
        let side = usize::from(proj >= 0.0);
        side_count[side] += 1;
        for (acc, v) in side_mean[side].iter_mut().zip(s) {
            *acc += v;
        }
    }
    if side_count[0] == 0 || side_count[1] == 0 {
        return Err(EstimatorError::DegenerateData(
            "all samples project to one side".into(),
        ));
    }
    for (mean_s, count) in side_mean.iter_mut().zip(side_count) {
        mean_s.iter_mut().for_each(|v| *v /= count as f64);
    }
    Ok(LearnedDiscriminant { means: side_mean })
}

/// Fixed-iteration EM over k exponential-family components.
///
/// Initialization is moment-based: samples are sorted by their projection on
/// the principal direction and cut into k equal slices. The seed only matters
/// when that split degenerates (duplicate projections), where it jitters the
/// order; everything else is deterministic.
pub fn learn_mixture_em(
    samples: &[Vec<f64>],
    k: usize,
    family: FamilyKind,
    iters: usize,
    seed: u64,
) -> Result<Mixture, EstimatorError> {
    if k == 0 {
        return Err(EstimatorError::DegenerateData("k must be positive".into()));
    }
    let d = samples.first().map(|s| s.len()).unwrap_or(0);
    let min = 10 * k * d.max(1);
    if samples.len() < min {
        return Err(EstimatorError::TooFewSamples {
            min,
            got: samples.len(),
        });
    }
    let n = samples.len();

    // Responsibilities initialized from a principal-direction quantile split.
    let mut resp = vec![0.0; n * k];
    if k == 1 {
        resp.iter_mut().for_each(|r| *r = 1.0);
    } else {
        let mean = grand_mean(samples, d);
        let u = principal_direction(samples, &mean)?;
        let mut proj: Vec<(f64, usize)> = samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let p: f64 = s.iter().zip(&mean).zip(&u).map(|((x, m), ui)| (x - m) * ui).sum();
                (p, i)
            })
            .collect();
        let distinct = {
            let mut vals: Vec<f64> = proj.iter().map(|p| p.0).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).expect("finite projections"));
            vals.dedup();
            vals.len()
        };
        if distinct < k {
            // Duplicate projections: break ties with seeded jitter.
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xe3));
            for p in proj.iter_mut() {
                p.0 += 1e-9 * rng.random::<f64>();
            }
        }
        proj.sort_by(|a, b| a.partial_cmp(b).expect("finite projections"));
        for (rank, &(_, i)) in proj.iter().enumerate() {
            let slice = (rank * k / n).min(k - 1);
            resp[i * k + slice] = 1.0;
        }
    }

    let mut mixture = m_step(samples, &resp, k, d, family)?;
    let mut log_joint = vec![0.0; k];
    for _ in 0..iters {
        // E-step in log space.
        for (i, s) in samples.iter().enumerate() {
            mixture.log_joint_into(s, &mut log_joint);
            let lse = log_sum_exp(&log_joint);
            for g in 0..k {
                let r = (log_joint[g] - lse).exp();
                if !r.is_finite() {
                    return Err(EstimatorError::NumericalFailure);
                }
                resp[i * k + g] = r;
            }
        }
        mixture = m_step(samples, &resp, k, d, family)?;
    }
    Ok(mixture)
}

fn m_step(
    samples: &[Vec<f64>],
    resp: &[f64],
    k: usize,
    d: usize,
    family: FamilyKind,
) -> Result<Mixture, EstimatorError> {
    let mut weights = vec![0.0; k];
    let mut means = vec![vec![0.0; d]; k];
    for (i, s) in samples.iter().enumerate() {
        for g in 0..k {
            let r = resp[i * k + g];
            weights[g] += r;
            for (m, v) in means[g].iter_mut().zip(s) {
                *m += r * v;
            }
        }
    }
    let mut components = Vec::with_capacity(k);
    for g in 0..k {
        let mass = weights[g].max(1e-12);
        means[g].iter_mut().for_each(|m| *m /= mass);
        let comp = match family {
            FamilyKind::GaussianIsotropic => {
                let mut ss = 0.0;
                for (i, s) in samples.iter().enumerate() {
                    let r = resp[i * k + g];
                    ss += r * s
                        .iter()
                        .zip(&means[g])
                        .map(|(v, m)| (v - m) * (v - m))
                        .sum::<f64>();
                }
                let sigma2 = (ss / (mass * d as f64)).max(COV_EIGENVALUE_FLOOR);
                Component::gaussian_isotropic(means[g].clone(), sigma2)?
            }
            FamilyKind::GaussianFull => {
                let mut cov = DMatrix::zeros(d, d);
                for (i, s) in samples.iter().enumerate() {
                    let r = resp[i * k + g];
                    for a in 0..d {
                        for b in 0..d {
                            cov[(a, b)] += r * (s[a] - means[g][a]) * (s[b] - means[g][b]);
                        }
                    }
                }
                cov /= mass;
                let mut eig = cov.symmetric_eigen();
                for e in eig.eigenvalues.iter_mut() {
                    *e = e.max(COV_EIGENVALUE_FLOOR);
                }
                let floored = &eig.eigenvectors
                    * DMatrix::from_diagonal(&eig.eigenvalues)
                    * eig.eigenvectors.transpose();
                let floored = (&floored + floored.transpose()) * 0.5;
                Component::gaussian_full(GaussianParams::new(
                    DVector::from_column_slice(&means[g]),
                    floored,
                )?)?
            }
            FamilyKind::PoissonProduct => {
                let rates: Vec<f64> = means[g].iter().map(|m| m.max(1e-9)).collect();
                Component::poisson_product(rates)?
            }
        };
        components.push(comp);
    }
    let total: f64 = weights.iter().sum();
    let mut weights: Vec<f64> = weights
        .iter()
        .map(|w| (w / total).max(LEARNED_WEIGHT_FLOOR * 2.0))
        .collect();
    let renorm: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= renorm);
    if weights.iter().any(|w| !w.is_finite()) || weights.iter().any(|w| w.is_nan()) {
        return Err(EstimatorError::NumericalFailure);
    }
    Ok(Mixture::with_weight_floor(
        weights,
        components,
        LEARNED_WEIGHT_FLOOR,
    )?)
}
