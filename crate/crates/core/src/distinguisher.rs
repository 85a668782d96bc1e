//! Distinguisher functions over the feature space, and random candidate
//! families of mixture structures that generate them.
//!
//! A distinguisher maps features into `[0, 1]` and reweights rounds inside a
//! calibration sum. The two structured kinds come from a candidate mixture:
//! hard cluster-assignment indicators (`1[g = argmax_j f̃(j|x)]`) and soft
//! posterior memberships (`x ↦ f̃(g|x)`).

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exp_family::{Component, FamilyKind, GaussianParams, ModelError};
use crate::mixture::Mixture;

#[derive(Debug, Clone)]
pub enum Distinguisher {
    /// `x ↦ 1[group = argmax_j f̃(j|x)]` under the candidate mixture.
    DiscriminantIndicator { model: Arc<Mixture>, group: usize },
    /// `x ↦ f̃(group|x)` under the candidate mixture.
    Posterior { model: Arc<Mixture>, group: usize },
    Constant(f64),
    /// Values on a fixed sample, addressable by index only.
    Tabulated { values: Arc<Vec<f64>> },
}

impl Distinguisher {
    /// Evaluate at a feature vector. `scratch` avoids a posterior allocation
    /// per call on hot paths.
    ///
    /// Panics for [`Distinguisher::Tabulated`], which is only defined on its
    /// construction sample; use [`Distinguisher::eval_at`] there.
    pub fn eval_with(&self, x: &[f64], scratch: &mut Vec<f64>) -> f64 {
        match self {
            Distinguisher::DiscriminantIndicator { model, group } => {
                f64::from(model.discriminant(x) == *group)
            }
            Distinguisher::Posterior { model, group } => {
                scratch.clear();
                scratch.resize(model.k(), 0.0);
                model.posterior_into(x, scratch);
                scratch[*group]
            }
            Distinguisher::Constant(c) => *c,
            Distinguisher::Tabulated { .. } => {
                panic!("tabulated distinguishers are only defined on their sample")
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut scratch = Vec::new();
        self.eval_with(x, &mut scratch)
    }

    /// Value at sample index `t` for tabulated distinguishers.
    pub fn eval_at(&self, t: usize) -> Option<f64> {
        match self {
            Distinguisher::Tabulated { values } => values.get(t).copied(),
            _ => None,
        }
    }

    pub fn is_tabulated(&self) -> bool {
        matches!(self, Distinguisher::Tabulated { .. })
    }
}

/// Which distinguisher family to build from candidate mixtures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistinguisherMode {
    /// Hard cluster-assignment indicators.
    Dce,
    /// Soft posterior memberships.
    Lce,
}

impl std::str::FromStr for DistinguisherMode {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dce" => Ok(DistinguisherMode::Dce),
            "lce" => Ok(DistinguisherMode::Lce),
            other => Err(ModelError::InvalidParameter(format!(
                "unknown distinguisher mode `{other}`"
            ))),
        }
    }
}

/// Parameter ranges for sampling plausible mixture structures: a mean box, a
/// scale range (isotropic variance, covariance eigenvalues, or Poisson
/// rates), and a weight floor on the mixing simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFamily {
    pub k: usize,
    pub d: usize,
    pub family: FamilyKind,
    pub mean_low: Vec<f64>,
    pub mean_high: Vec<f64>,
    pub scale_range: (f64, f64),
    pub weight_floor: f64,
    pub count: usize,
    pub seed: u64,
}

impl CandidateFamily {
    fn validate(&self) -> Result<(), ModelError> {
        if self.k == 0 || self.d == 0 || self.count == 0 {
            return Err(ModelError::InvalidParameter(
                "candidate family needs k, d, count >= 1".into(),
            ));
        }
        if self.mean_low.len() != self.d || self.mean_high.len() != self.d {
            return Err(ModelError::DimensionMismatch {
                expected: self.d,
                got: self.mean_low.len(),
            });
        }
        if self
            .mean_low
            .iter()
            .zip(&self.mean_high)
            .any(|(lo, hi)| lo > hi || lo.is_nan() || hi.is_nan())
        {
            return Err(ModelError::InvalidParameter("degenerate mean box".into()));
        }
        let (lo, hi) = self.scale_range;
        if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi) {
            return Err(ModelError::InvalidParameter(
                "scale range must be positive and ordered".into(),
            ));
        }
        if !(0.0..1.0 / self.k as f64).contains(&self.weight_floor) {
            return Err(ModelError::InvalidParameter(format!(
                "weight floor {} incompatible with k = {}",
                self.weight_floor, self.k
            )));
        }
        Ok(())
    }

    /// Sample `count` candidate mixtures; deterministic in `seed`.
    pub fn sample_candidates(&self) -> Result<Vec<Arc<Mixture>>, ModelError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::with_capacity(self.count);
        for _ in 0..self.count {
            out.push(Arc::new(self.sample_one(&mut rng)?));
        }
        Ok(out)
    }

    fn sample_one(&self, rng: &mut ChaCha8Rng) -> Result<Mixture, ModelError> {
        // Uniform simplex point pushed away from the boundary by the floor.
        let raw: Vec<f64> = (0..self.k).map(|_| -rng.random::<f64>().ln()).collect();
        let total: f64 = raw.iter().sum();
        let free = 1.0 - self.k as f64 * self.weight_floor;
        let weights: Vec<f64> = raw
            .iter()
            .map(|r| self.weight_floor + free * r / total)
            .collect();

        let mut components = Vec::with_capacity(self.k);
        for _ in 0..self.k {
            let mean: Vec<f64> = (0..self.d)
                .map(|i| rng.random_range(self.mean_low[i]..=self.mean_high[i]))
                .collect();
            let (lo, hi) = self.scale_range;
            let c = match self.family {
                FamilyKind::GaussianIsotropic => {
                    Component::gaussian_isotropic(mean, rng.random_range(lo..=hi))?
                }
                FamilyKind::GaussianFull => {
                    let cov = random_spd(self.d, lo, hi, rng);
                    Component::gaussian_full(GaussianParams::new(
                        nalgebra::DVector::from_vec(mean),
                        cov,
                    )?)?
                }
                FamilyKind::PoissonProduct => {
                    let rates = (0..self.d).map(|_| rng.random_range(lo..=hi)).collect();
                    Component::poisson_product(rates)?
                }
            };
            components.push(c);
        }
        Mixture::with_weight_floor(weights, components, self.weight_floor * (1.0 - 1e-12))
    }
}

/// Random SPD matrix with eigenvalues uniform in `[lo, hi]`: `Q diag(e) Qᵀ`
/// with `Q` from the QR factorization of a Gaussian matrix.
fn random_spd(d: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> nalgebra::DMatrix<f64> {
    use rand_distr::StandardNormal;
    let g = nalgebra::DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    let eigs = nalgebra::DVector::from_fn(d, |_, _| rng.random_range(lo..=hi));
    let scaled = &q * nalgebra::DMatrix::from_diagonal(&eigs);
    let m = scaled * q.transpose();
    // Symmetrize away factorization roundoff.
    (&m + m.transpose()) * 0.5
}

/// Build the distinguisher class for a sampled candidate family: one
/// distinguisher per (candidate, group). With `include_truth`, the true
/// model's own distinguishers are appended at the end (indices
/// `count*k ..`), keeping the exact dominance checks testable downstream.
pub fn build_distinguisher_class(
    family: &CandidateFamily,
    mode: DistinguisherMode,
    include_truth: Option<&Mixture>,
) -> Result<Vec<Distinguisher>, ModelError> {
    let candidates = family.sample_candidates()?;
    let mut out = Vec::with_capacity((candidates.len() + 1) * family.k);
    let push_for = |model: Arc<Mixture>, k: usize, out: &mut Vec<Distinguisher>| {
        for group in 0..k {
            out.push(match mode {
                DistinguisherMode::Dce => Distinguisher::DiscriminantIndicator {
                    model: model.clone(),
                    group,
                },
                DistinguisherMode::Lce => Distinguisher::Posterior {
                    model: model.clone(),
                    group,
                },
            });
        }
    };
    for c in &candidates {
        push_for(c.clone(), family.k, &mut out);
    }
    if let Some(truth) = include_truth {
        push_for(Arc::new(truth.clone()), truth.k(), &mut out);
    }
    Ok(out)
}
