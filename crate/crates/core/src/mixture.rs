//! Mixtures of exponential-family components with a component-independent
//! label rule: the ground-truth generative model.
//!
//! A [`Mixture`] carries weights and components only (what a structure
//! estimator can recover); a [`MixtureModel`] adds the label rule used to
//! generate outcomes. All density arithmetic runs in log space so posteriors
//! stay finite far into the tails.
//!
//! # JSON schema
//!
//! ```json
//! {
//!   "k": 2, "d": 2, "family": "gaussian_isotropic",
//!   "weights": [0.5, 0.5],
//!   "components": [{"mean": [-0.5, 0.0], "sigma2": 1.0},
//!                  {"mean": [0.5, 0.0], "sigma2": 1.0}],
//!   "label_rule": {"kind": "logistic", "params": {"weights": [1.5, 0.0], "bias": 0.0}}
//! }
//! ```
//!
//! `components[i]` uses `cov` (row-major nested arrays) for `gaussian_full`,
//! `sigma2` for `gaussian_isotropic`, and `rates` for `poisson_product`.
//! A [`Mixture`] round-trips through the same schema minus `label_rule`.
//! Serialization preserves every parameter at full double precision.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exp_family::{Component, FamilyKind, GaussianParams, ModelError};
use crate::util::{derive_seed, log_sum_exp};

/// Default lower bound on mixing weights for generative models.
pub const DEFAULT_WEIGHT_FLOOR: f64 = 0.05;

/// Permissive floor used for learned mixtures, where estimates may
/// legitimately fall below the generative floor.
pub const LEARNED_WEIGHT_FLOOR: f64 = 1e-9;

/// Weights plus components; no label rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    components: Vec<Component>,
}

impl Mixture {
    pub fn new(weights: Vec<f64>, components: Vec<Component>) -> Result<Self, ModelError> {
        Self::with_weight_floor(weights, components, DEFAULT_WEIGHT_FLOOR)
    }

    pub fn with_weight_floor(
        weights: Vec<f64>,
        components: Vec<Component>,
        floor: f64,
    ) -> Result<Self, ModelError> {
        if components.is_empty() || weights.len() != components.len() {
            return Err(ModelError::MixedComponents);
        }
        let kind = components[0].kind();
        let dim = components[0].dim();
        if components.iter().any(|c| c.kind() != kind || c.dim() != dim) {
            return Err(ModelError::MixedComponents);
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ModelError::WeightSum(sum));
        }
        if let Some(&w) = weights.iter().find(|w| **w < floor) {
            return Err(ModelError::WeightFloor { weight: w, floor });
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            weights,
            log_weights,
            components,
        })
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn family(&self) -> FamilyKind {
        self.components[0].kind()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn component(&self, g: usize) -> &Component {
        &self.components[g]
    }

    /// `log w_g + log f(x|g)` for every `g`.
    pub fn log_joint_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(out.len(), self.k());
        for (g, c) in self.components.iter().enumerate() {
            out[g] = self.log_weights[g] + c.log_density(x);
        }
    }

    /// Posterior membership probabilities `f(g|x)`, normalized in log space.
    /// Off the support of every component (possible for discrete families)
    /// the posterior falls back to the prior weights.
    pub fn posterior_into(&self, x: &[f64], out: &mut [f64]) {
        self.log_joint_into(x, out);
        let lse = log_sum_exp(out);
        if lse == f64::NEG_INFINITY {
            out.copy_from_slice(&self.weights);
            return;
        }
        for v in out.iter_mut() {
            *v = (*v - lse).exp();
        }
    }

    pub fn posterior(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k()];
        self.posterior_into(x, &mut out);
        out
    }

    /// `argmax_g f(g|x)`; ties break toward the smallest index. Ties have
    /// probability zero under continuous families, so the fixed rule is
    /// observationally irrelevant there.
    pub fn discriminant(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_val = self.log_weights[0] + self.components[0].log_density(x);
        for g in 1..self.k() {
            let v = self.log_weights[g] + self.components[g].log_density(x);
            if v > best_val {
                best = g;
                best_val = v;
            }
        }
        best
    }

    /// `log (f(g|x) / f(j|x))`, evaluated through the exponential-family form
    /// `(w_g/w_j) · exp(A_j - A_g) · exp(<theta_g - theta_j, T(x)>)`; the base
    /// measure h(x) cancels and is never evaluated.
    pub fn log_likelihood_ratio(&self, g: usize, j: usize, x: &[f64]) -> f64 {
        assert!(g < self.k() && j < self.k());
        if g == j {
            return 0.0;
        }
        let cg = &self.components[g];
        let cj = &self.components[j];
        (self.log_weights[g] - self.log_weights[j]) + (cj.log_partition() - cg.log_partition())
            + (cg.theta_dot_stat(x) - cj.theta_dot_stat(x))
    }

    /// `f(g|x) / f(j|x)`; may overflow to `+inf`, in which case callers can
    /// fall back to [`Self::log_likelihood_ratio`].
    pub fn likelihood_ratio(&self, g: usize, j: usize, x: &[f64]) -> f64 {
        self.log_likelihood_ratio(g, j, x).exp()
    }

    /// Draw one `x`, returning the component that generated it.
    pub fn sample_x_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut g = self.k() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                g = i;
                break;
            }
        }
        self.components[g].sample_into(rng, out);
        g
    }
}

/// Axis-aligned box, closed on both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl BoxRegion {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.low.iter().zip(&self.high))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

/// Conditional label distribution `f(y=1|x)`. Depends on `x` only, never on
/// the generating component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum LabelRule {
    Constant { p: f64 },
    Logistic { weights: Vec<f64>, bias: f64 },
    Piecewise {
        regions: Vec<BoxRegion>,
        probs: Vec<f64>,
        default: f64,
    },
}

impl LabelRule {
    pub fn validate(&self, dim: usize) -> Result<(), ModelError> {
        let check_p = |p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(ModelError::ProbabilityRange(p))
            }
        };
        match self {
            LabelRule::Constant { p } => check_p(*p),
            LabelRule::Logistic { weights, .. } => {
                if weights.len() != dim {
                    return Err(ModelError::DimensionMismatch {
                        expected: dim,
                        got: weights.len(),
                    });
                }
                Ok(())
            }
            LabelRule::Piecewise {
                regions,
                probs,
                default,
            } => {
                if regions.len() != probs.len() {
                    return Err(ModelError::InvalidParameter(
                        "piecewise regions and probs must have equal length".into(),
                    ));
                }
                for r in regions {
                    if r.low.len() != dim || r.high.len() != dim {
                        return Err(ModelError::DimensionMismatch {
                            expected: dim,
                            got: r.low.len(),
                        });
                    }
                }
                probs.iter().try_for_each(|p| check_p(*p))?;
                check_p(*default)
            }
        }
    }

    /// `f(y=1|x)`, always in [0, 1].
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        match self {
            LabelRule::Constant { p } => *p,
            LabelRule::Logistic { weights, bias } => {
                let z: f64 = weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + bias;
                1.0 / (1.0 + (-z).exp())
            }
            LabelRule::Piecewise {
                regions,
                probs,
                default,
            } => regions
                .iter()
                .position(|r| r.contains(x))
                .map(|i| probs[i])
                .unwrap_or(*default),
        }
    }
}

/// One generated observation. `true_component` is simulation-side ground
/// truth and is never shown to learners.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub y: u8,
    pub true_component: usize,
}

/// The full generative model: `f(x,y) ∝ f(y|x) f(x|g) f(g)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    mixture: Mixture,
    label_rule: LabelRule,
}

impl MixtureModel {
    pub fn new(mixture: Mixture, label_rule: LabelRule) -> Result<Self, ModelError> {
        label_rule.validate(mixture.dim())?;
        Ok(Self {
            mixture,
            label_rule,
        })
    }

    pub fn mixture(&self) -> &Mixture {
        &self.mixture
    }

    pub fn label_rule(&self) -> &LabelRule {
        &self.label_rule
    }

    /// Posterior with the observed label in the signature. The label rule is
    /// component-independent, so `f(g|x,y) = f(g|x)` and `y` is ignored.
    pub fn posterior_given_label(&self, x: &[f64], _y: u8) -> Vec<f64> {
        self.mixture.posterior(x)
    }

    /// Draw `n` labeled samples: `g ~ w`, `x ~ f(·|g)`, `y ~ Bernoulli(f(y|x))`.
    /// Bitwise deterministic given `(model, n, seed)`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<LabeledSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5a17));
        let mut out = Vec::with_capacity(n);
        let mut x = vec![0.0; self.dim()];
        for _ in 0..n {
            let g = self.mixture.sample_x_into(&mut rng, &mut x);
            let p = self.label_rule.evaluate(&x);
            let y = u8::from(rng.random::<f64>() < p);
            out.push(LabeledSample {
                x: x.clone(),
                y,
                true_component: g,
            });
        }
        out
    }
}

impl std::ops::Deref for MixtureModel {
    type Target = Mixture;
    fn deref(&self) -> &Mixture {
        &self.mixture
    }
}

// ---------------------------------------------------------------------------
// JSON schema
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ComponentDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    mean: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cov: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rates: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct MixtureDoc {
    k: usize,
    d: usize,
    family: FamilyKind,
    weights: Vec<f64>,
    components: Vec<ComponentDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    label_rule: Option<LabelRule>,
}

fn component_doc(c: &Component) -> ComponentDoc {
    match c.kind() {
        FamilyKind::GaussianFull => {
            let cov = c.covariance().expect("full gaussian stores covariance");
            let rows = (0..c.dim())
                .map(|i| (0..c.dim()).map(|j| cov[(i, j)]).collect())
                .collect();
            ComponentDoc {
                mean: Some(c.mean().to_vec()),
                cov: Some(rows),
                sigma2: None,
                rates: None,
            }
        }
        FamilyKind::GaussianIsotropic => ComponentDoc {
            mean: Some(c.mean().to_vec()),
            cov: None,
            sigma2: c.sigma2(),
            rates: None,
        },
        FamilyKind::PoissonProduct => ComponentDoc {
            mean: None,
            cov: None,
            sigma2: None,
            rates: Some(c.mean().to_vec()),
        },
    }
}

fn component_from_doc(family: FamilyKind, d: usize, doc: &ComponentDoc) -> Result<Component, ModelError> {
    let schema = |msg: &str| ModelError::Schema(msg.to_string());
    match family {
        FamilyKind::GaussianFull => {
            let mean = doc.mean.as_ref().ok_or_else(|| schema("missing mean"))?;
            let cov = doc.cov.as_ref().ok_or_else(|| schema("missing cov"))?;
            if mean.len() != d || cov.len() != d || cov.iter().any(|r| r.len() != d) {
                return Err(schema("component dimensions disagree with d"));
            }
            let cov_m = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
            Component::gaussian_full(GaussianParams::new(
                DVector::from_column_slice(mean),
                cov_m,
            )?)
        }
        FamilyKind::GaussianIsotropic => {
            let mean = doc.mean.as_ref().ok_or_else(|| schema("missing mean"))?;
            let sigma2 = doc.sigma2.ok_or_else(|| schema("missing sigma2"))?;
            if mean.len() != d {
                return Err(schema("component dimensions disagree with d"));
            }
            Component::gaussian_isotropic(mean.clone(), sigma2)
        }
        FamilyKind::PoissonProduct => {
            let rates = doc.rates.as_ref().ok_or_else(|| schema("missing rates"))?;
            if rates.len() != d {
                return Err(schema("component dimensions disagree with d"));
            }
            Component::poisson_product(rates.clone())
        }
    }
}

fn mixture_doc(m: &Mixture, label_rule: Option<&LabelRule>) -> MixtureDoc {
    MixtureDoc {
        k: m.k(),
        d: m.dim(),
        family: m.family(),
        weights: m.weights().to_vec(),
        components: m.components().iter().map(component_doc).collect(),
        label_rule: label_rule.cloned(),
    }
}

fn mixture_from_doc(doc: &MixtureDoc, floor: f64) -> Result<Mixture, ModelError> {
    if doc.components.len() != doc.k || doc.weights.len() != doc.k {
        return Err(ModelError::Schema(
            "k disagrees with weights/components length".into(),
        ));
    }
    let components = doc
        .components
        .iter()
        .map(|c| component_from_doc(doc.family, doc.d, c))
        .collect::<Result<Vec<_>, _>>()?;
    Mixture::with_weight_floor(doc.weights.clone(), components, floor)
}

impl Serialize for Mixture {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        mixture_doc(self, None).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Mixture {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = MixtureDoc::deserialize(deserializer)?;
        mixture_from_doc(&doc, LEARNED_WEIGHT_FLOOR).map_err(serde::de::Error::custom)
    }
}

impl Serialize for MixtureModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        mixture_doc(&self.mixture, Some(&self.label_rule)).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for MixtureModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = MixtureDoc::deserialize(deserializer)?;
        let mixture = mixture_from_doc(&doc, DEFAULT_WEIGHT_FLOOR).map_err(serde::de::Error::custom)?;
        let label_rule = doc
            .label_rule
            .ok_or_else(|| serde::de::Error::custom("model json: missing label_rule"))?;
        MixtureModel::new(mixture, label_rule).map_err(serde::de::Error::custom)
    }
}
