//! Exponential-family components: natural parameters, sufficient statistics,
//! log-partitions, densities, and sampling.
//!
//! Every component density has the form `h(x) · exp(<theta, T(x)> - A(theta))`.
//! Three families are supported:
//!
//! * `gaussian_full` — multivariate normal with a full covariance matrix;
//!   `T(x) = (x, (x_i x_j)_{i<=j})`, packed linear block first, then the upper
//!   triangle of `x xᵀ` in row-major order. `dim T = d + d(d+1)/2`.
//! * `gaussian_isotropic` — normal with covariance `σ²·I`;
//!   `T(x) = (x, |x|²)`, `dim T = d + 1`.
//! * `poisson_product` — independent Poisson coordinates; `T(x) = x`.
//!
//! Densities are always evaluated through the natural-parameter form above, so
//! the closed-form Gaussian pdf stays available as an independent test oracle.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

use crate::util::ln_factorial;

/// Errors from model construction and evaluation.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("covariance must be symmetric positive definite")]
    NotPositiveDefinite,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("weights must sum to 1, got {0}")]
    WeightSum(f64),
    #[error("weight {weight} below configured floor {floor}")]
    WeightFloor { weight: f64, floor: f64 },
    #[error("mixture components must share one family and dimension")]
    MixedComponents,
    #[error("probability {0} outside [0, 1]")]
    ProbabilityRange(f64),
    #[error("monte carlo sample count {got} below minimum {min}")]
    TooFewMcSamples { got: usize, min: usize },
    #[error("model json: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    GaussianFull,
    GaussianIsotropic,
    PoissonProduct,
}

impl FamilyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FamilyKind::GaussianFull => "gaussian_full",
            FamilyKind::GaussianIsotropic => "gaussian_isotropic",
            FamilyKind::PoissonProduct => "poisson_product",
        }
    }
}

impl std::fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FamilyKind {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gaussian_full" => Ok(FamilyKind::GaussianFull),
            "gaussian_isotropic" => Ok(FamilyKind::GaussianIsotropic),
            "poisson_product" => Ok(FamilyKind::PoissonProduct),
            other => Err(ModelError::InvalidParameter(format!(
                "unknown family `{other}`"
            ))),
        }
    }
}

pub fn ln_2pi() -> f64 {
    (2.0 * std::f64::consts::PI).ln()
}

/// Index of the packed quadratic entry (i, j), i <= j, after the linear block.
fn quad_index(d: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < d);
    d + i * d - i * (i + 1) / 2 + j
}

/// Mean/covariance form of a full Gaussian, with conversions to and from the
/// natural parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianParams {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self, ModelError> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(ModelError::DimensionMismatch {
                expected: d,
                got: cov.nrows(),
            });
        }
        let scale = cov.amax().max(1.0);
        for i in 0..d {
            for j in (i + 1)..d {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-9 * scale {
                    return Err(ModelError::NotPositiveDefinite);
                }
            }
        }
        // Symmetrize before factoring so tiny asymmetries do not leak through.
        let cov = (&cov + cov.transpose()) * 0.5;
        if cov.clone().cholesky().is_none() {
            return Err(ModelError::NotPositiveDefinite);
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Natural parameter in the packing described in the module docs:
    /// `theta = (Σ⁻¹μ, [-½Σ⁻¹_ii on the diagonal, -Σ⁻¹_ij above it])`.
    pub fn to_natural(&self) -> Vec<f64> {
        let d = self.dim();
        let precision = self
            .cov
            .clone()
            .cholesky()
            .expect("validated at construction")
            .inverse();
        let lin = &precision * &self.mean;
        let mut theta = vec![0.0; d + d * (d + 1) / 2];
        theta[..d].copy_from_slice(lin.as_slice());
        for i in 0..d {
            for j in i..d {
                theta[quad_index(d, i, j)] = if i == j {
                    -0.5 * precision[(i, i)]
                } else {
                    -precision[(i, j)]
                };
            }
        }
        theta
    }

    pub fn from_natural(d: usize, theta: &[f64]) -> Result<Self, ModelError> {
        let expected = d + d * (d + 1) / 2;
        if theta.len() != expected {
            return Err(ModelError::DimensionMismatch {
                expected,
                got: theta.len(),
            });
        }
        let mut precision = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let q = theta[quad_index(d, i, j)];
                if i == j {
                    precision[(i, i)] = -2.0 * q;
                } else {
                    precision[(i, j)] = -q;
                    precision[(j, i)] = -q;
                }
            }
        }
        let chol = precision
            .clone()
            .cholesky()
            .ok_or(ModelError::NotPositiveDefinite)?;
        let cov = chol.inverse();
        let lin = DVector::from_column_slice(&theta[..d]);
        let mean = &cov * lin;
        GaussianParams::new(mean, cov)
    }
}

/// One exponential-family component, stored in natural form with the pieces
/// needed for sampling and (de)serialization cached alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    kind: FamilyKind,
    dim: usize,
    theta: Vec<f64>,
    log_partition: f64,
    /// Gaussian mean or Poisson rates.
    mean: Vec<f64>,
    /// Isotropic variance as given, and its root for sampling.
    sigma2: f64,
    sigma: f64,
    /// Packed lower-triangular Cholesky factor of the covariance (full Gaussian).
    chol: Vec<f64>,
    cov: Option<DMatrix<f64>>,
}

impl Component {
    pub fn gaussian_full(params: GaussianParams) -> Result<Self, ModelError> {
        let d = params.dim();
        let theta = params.to_natural();
        let chol_m = params
            .cov
            .clone()
            .cholesky()
            .ok_or(ModelError::NotPositiveDefinite)?;
        let l = chol_m.l();
        let mut chol = Vec::with_capacity(d * (d + 1) / 2);
        let mut log_det = 0.0;
        for i in 0..d {
            for j in 0..=i {
                chol.push(l[(i, j)]);
            }
            log_det += 2.0 * l[(i, i)].ln();
        }
        // A = ½ μᵀΣ⁻¹μ + ½ log|Σ| + (d/2) log 2π
        let mu_p_mu: f64 = (0..d).map(|i| params.mean[i] * theta[i]).sum();
        let log_partition = 0.5 * mu_p_mu + 0.5 * log_det + 0.5 * d as f64 * ln_2pi();
        Ok(Self {
            kind: FamilyKind::GaussianFull,
            dim: d,
            theta,
            log_partition,
            mean: params.mean.as_slice().to_vec(),
            sigma2: 0.0,
            sigma: 0.0,
            chol,
            cov: Some(params.cov),
        })
    }

    pub fn gaussian_isotropic(mean: Vec<f64>, sigma2: f64) -> Result<Self, ModelError> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "sigma2 must be positive, got {sigma2}"
            )));
        }
        let d = mean.len();
        let mut theta = Vec::with_capacity(d + 1);
        theta.extend(mean.iter().map(|m| m / sigma2));
        theta.push(-0.5 / sigma2);
        let norm2: f64 = mean.iter().map(|m| m * m).sum();
        let log_partition =
            0.5 * norm2 / sigma2 + 0.5 * d as f64 * sigma2.ln() + 0.5 * d as f64 * ln_2pi();
        Ok(Self {
            kind: FamilyKind::GaussianIsotropic,
            dim: d,
            theta,
            log_partition,
            mean,
            sigma2,
            sigma: sigma2.sqrt(),
            chol: Vec::new(),
            cov: None,
        })
    }

    pub fn poisson_product(rates: Vec<f64>) -> Result<Self, ModelError> {
        if rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(ModelError::InvalidParameter(
                "poisson rates must be positive".into(),
            ));
        }
        let theta: Vec<f64> = rates.iter().map(|r| r.ln()).collect();
        let log_partition: f64 = rates.iter().sum();
        Ok(Self {
            kind: FamilyKind::PoissonProduct,
            dim: rates.len(),
            theta,
            log_partition,
            mean: rates,
            sigma2: 0.0,
            sigma: 0.0,
            chol: Vec::new(),
            cov: None,
        })
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Dimension of the sufficient statistic `T(x)`.
    pub fn suff_dim(&self) -> usize {
        self.theta.len()
    }

    pub fn natural_param(&self) -> &[f64] {
        &self.theta
    }

    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    /// Gaussian mean, or Poisson rate vector.
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn sigma2(&self) -> Option<f64> {
        (self.kind == FamilyKind::GaussianIsotropic).then_some(self.sigma2)
    }

    pub fn covariance(&self) -> Option<&DMatrix<f64>> {
        self.cov.as_ref()
    }

    pub fn sufficient_stat(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "feature dimension mismatch");
        let mut t = Vec::with_capacity(self.suff_dim());
        t.extend_from_slice(x);
        match self.kind {
            FamilyKind::GaussianFull => {
                for i in 0..self.dim {
                    for j in i..self.dim {
                        t.push(x[i] * x[j]);
                    }
                }
            }
            FamilyKind::GaussianIsotropic => {
                t.push(x.iter().map(|v| v * v).sum());
            }
            FamilyKind::PoissonProduct => {}
        }
        t
    }

    /// `<theta, T(x)>` without materializing `T(x)`.
    pub fn theta_dot_stat(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match self.kind {
            FamilyKind::GaussianFull => {
                let d = self.dim;
                let mut acc: f64 = self.theta.iter().zip(x).map(|(t, v)| t * v).sum();
                let mut q = d;
                for i in 0..d {
                    for j in i..d {
                        acc += self.theta[q] * x[i] * x[j];
                        q += 1;
                    }
                }
                acc
            }
            FamilyKind::GaussianIsotropic => {
                let d = self.dim;
                let acc: f64 = self.theta[..d].iter().zip(x).map(|(t, v)| t * v).sum();
                let norm2: f64 = x.iter().map(|v| v * v).sum();
                acc + self.theta[d] * norm2
            }
            FamilyKind::PoissonProduct => self.theta.iter().zip(x).map(|(t, v)| t * v).sum(),
        }
    }

    /// `log h(x)`. Zero for Gaussians; for Poisson products this is
    /// `-Σ log(x_j!)`, and points off the non-negative integer lattice get
    /// `-inf` (zero density).
    pub fn log_base_measure(&self, x: &[f64]) -> f64 {
        match self.kind {
            FamilyKind::GaussianFull | FamilyKind::GaussianIsotropic => 0.0,
            FamilyKind::PoissonProduct => {
                let mut acc = 0.0;
                for &v in x {
                    if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
                        return f64::NEG_INFINITY;
                    }
                    acc -= ln_factorial(v as u64);
                }
                acc
            }
        }
    }

    /// `log h(x) + <theta, T(x)> - A(theta)`.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim, "feature dimension mismatch");
        self.log_base_measure(x) + self.theta_dot_stat(x) - self.log_partition
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        assert_eq!(out.len(), self.dim);
        match self.kind {
            FamilyKind::GaussianFull => {
                let d = self.dim;
                let mut z: SmallVec<[f64; 8]> = SmallVec::with_capacity(d);
                for _ in 0..d {
                    z.push(rng.sample(StandardNormal));
                }
                let mut idx = 0;
                for (i, o) in out.iter_mut().enumerate().take(d) {
                    let mut acc = self.mean[i];
                    for item in z.iter().take(i + 1) {
                        acc += self.chol[idx] * item;
                        idx += 1;
                    }
                    *o = acc;
                }
            }
            FamilyKind::GaussianIsotropic => {
                for (o, m) in out.iter_mut().zip(&self.mean) {
                    let z: f64 = rng.sample(StandardNormal);
                    *o = m + self.sigma * z;
                }
            }
            FamilyKind::PoissonProduct => {
                for (o, rate) in out.iter_mut().zip(&self.mean) {
                    let p = Poisson::new(*rate).expect("positive rate");
                    *o = p.sample(rng);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn standard_normal_log_partition_is_half_ln_2pi() {
        let c = Component::gaussian_isotropic(vec![0.0], 1.0).unwrap();
        assert!((c.log_partition() - 0.5 * ln_2pi()).abs() < 1e-15);
        let full = Component::gaussian_full(GaussianParams::new(
            dvector![0.0],
            dmatrix![1.0],
        )
        .unwrap())
        .unwrap();
        assert!((full.log_partition() - 0.5 * ln_2pi()).abs() < 1e-12);
    }

    #[test]
    fn standard_normal_density_at_mode() {
        let c = Component::gaussian_isotropic(vec![0.0], 1.0).unwrap();
        assert!((c.log_density(&[0.0]) - (-0.9189385332046727)).abs() < 1e-12);
    }

    #[test]
    fn sufficient_stat_dimensions() {
        let full = Component::gaussian_full(GaussianParams::new(
            dvector![0.0, 1.0],
            dmatrix![2.0, 0.3; 0.3, 1.0],
        )
        .unwrap())
        .unwrap();
        // d(d+1)/2 + d = 5 for d = 2
        assert_eq!(full.suff_dim(), 5);
        let iso = Component::gaussian_isotropic(vec![0.0, 0.0, 0.0], 2.0).unwrap();
        assert_eq!(iso.suff_dim(), 4);
        assert!(iso.suff_dim() <= 2 * iso.dim());
        let pp = Component::poisson_product(vec![1.0, 2.0]).unwrap();
        assert_eq!(pp.suff_dim(), 2);
    }

    #[test]
    fn natural_round_trip() {
        let params = GaussianParams::new(
            dvector![0.3, -1.2, 0.9],
            dmatrix![2.0, 0.4, 0.1; 0.4, 1.5, -0.2; 0.1, -0.2, 0.8],
        )
        .unwrap();
        let theta = params.to_natural();
        let back = GaussianParams::from_natural(3, &theta).unwrap();
        for i in 0..3 {
            let rel = (back.mean[i] - params.mean[i]).abs() / params.mean[i].abs().max(1.0);
            assert!(rel <= 1e-9, "mean[{i}] off by {rel}");
            for j in 0..3 {
                let rel = (back.cov[(i, j)] - params.cov[(i, j)]).abs()
                    / params.cov[(i, j)].abs().max(1.0);
                assert!(rel <= 1e-9, "cov[{i},{j}] off by {rel}");
            }
        }
    }

    #[test]
    fn rejects_non_pd_covariance() {
        let r = GaussianParams::new(dvector![0.0, 0.0], dmatrix![1.0, 2.0; 2.0, 1.0]);
        assert!(matches!(r, Err(ModelError::NotPositiveDefinite)));
    }

    #[test]
    fn poisson_pmf_normalizes() {
        let c = Component::poisson_product(vec![2.5]).unwrap();
        let total: f64 = (0..60).map(|k| c.log_density(&[k as f64]).exp()).sum();
        assert!((total - 1.0).abs() < 1e-10);
        assert_eq!(c.log_density(&[0.5]), f64::NEG_INFINITY);
    }

    #[test]
    fn full_gaussian_sampling_matches_moments() {
        use rand::SeedableRng;
        let params = GaussianParams::new(dvector![1.0, -2.0], dmatrix![1.0, 0.6; 0.6, 2.0]).unwrap();
        let c = Component::gaussian_full(params).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let mut mean = [0.0f64; 2];
        let mut cross = 0.0;
        let mut x = [0.0f64; 2];
        for _ in 0..n {
            c.sample_into(&mut rng, &mut x);
            mean[0] += x[0];
            mean[1] += x[1];
            cross += (x[0] - 1.0) * (x[1] + 2.0);
        }
        let nf = n as f64;
        assert!((mean[0] / nf - 1.0).abs() < 0.02);
        assert!((mean[1] / nf + 2.0).abs() < 0.02);
        assert!((cross / nf - 0.6).abs() < 0.03);
    }
}
