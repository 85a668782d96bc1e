//! End-to-end online learners: cluster-then-predict in two flavors, the
//! multi-objective cover-then-multicalibrate learner, and plain marginal
//! calibration.
//!
//! Every pipeline plays exactly `t_total` rounds against a freshly sampled
//! i.i.d. stream. Two-phase pipelines spend the first `T'` rounds making a
//! fixed prediction while collecting features, learn structure from them,
//! then run the online engine for the rest. Error reports against the true
//! model are maintained incrementally round by round; batch recomputation
//! from the transcript agrees exactly and is asserted in tests.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::buckets::{BucketGrid, MetricsError, Transcript};
use crate::cover::{greedy_cover, select_distinguishers, CoverDocument, CoverError, FunctionTable};
use crate::distinguisher::{
    build_distinguisher_class, CandidateFamily, Distinguisher, DistinguisherMode,
};
use crate::engine::{EngineError, EtaPolicy, McEngine, PredGridPolicy};
use crate::estimators::{learn_discriminant_2iso, learn_mixture_em, EstimatorError};
use crate::exp_family::{FamilyKind, ModelError};
use crate::metrics::{CellAccumulator, ErrorReport};
use crate::mixture::MixtureModel;
use crate::util::derive_seed;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("pipeline {pipeline} requires {requirement}")]
    UnsupportedModel {
        pipeline: &'static str,
        requirement: &'static str,
    },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("estimator failed: {0}")]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Cover(#[from] CoverError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineKind {
    CtpDce,
    CtpLce,
    MoDce,
    MoLce,
    Marginal,
}

impl PipelineKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PipelineKind::CtpDce => "ctp_dce",
            PipelineKind::CtpLce => "ctp_lce",
            PipelineKind::MoDce => "mo_dce",
            PipelineKind::MoLce => "mo_lce",
            PipelineKind::Marginal => "marginal",
        }
    }
}

impl std::fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PipelineKind {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ctp_dce" => Ok(PipelineKind::CtpDce),
            "ctp_lce" => Ok(PipelineKind::CtpLce),
            "mo_dce" => Ok(PipelineKind::MoDce),
            "mo_lce" => Ok(PipelineKind::MoLce),
            "marginal" => Ok(PipelineKind::Marginal),
            other => Err(PipelineError::InvalidConfig(format!(
                "unknown pipeline `{other}`"
            ))),
        }
    }
}

/// How long the structure-learning phase lasts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TPrimePolicy {
    /// `ceil(T^(2/3))` — the two-phase tuning.
    T23,
    /// `ceil(T^(12/13))` — the no-separation parameter-learning regime.
    T1213,
    /// `ceil(sqrt(T·(pdim_hint·ln T + ln(1/delta))))` — the covering tuning.
    SqrtFormula,
    Fixed(usize),
}

impl std::fmt::Display for TPrimePolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TPrimePolicy::T23 => f.write_str("t23"),
            TPrimePolicy::T1213 => f.write_str("t1213"),
            TPrimePolicy::SqrtFormula => f.write_str("sqrt"),
            TPrimePolicy::Fixed(n) => write!(f, "fixed:{n}"),
        }
    }
}

impl std::str::FromStr for TPrimePolicy {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "t23" => Ok(TPrimePolicy::T23),
            "t1213" => Ok(TPrimePolicy::T1213),
            "sqrt" => Ok(TPrimePolicy::SqrtFormula),
            other => {
                if let Some(n) = other.strip_prefix("fixed:") {
                    let n = n.parse().map_err(|_| {
                        PipelineError::InvalidConfig(format!("bad fixed tprime `{other}`"))
                    })?;
                    return Ok(TPrimePolicy::Fixed(n));
                }
                Err(PipelineError::InvalidConfig(format!(
                    "unknown tprime policy `{other}`"
                )))
            }
        }
    }
}

impl Serialize for TPrimePolicy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for TPrimePolicy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Candidate-family settings without the pieces the run fills in
/// (k, d, family from the model; seed from the run seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSettings {
    pub mean_low: Vec<f64>,
    pub mean_high: Vec<f64>,
    pub scale_range: (f64, f64),
    pub weight_floor: f64,
    pub count: usize,
}

impl CandidateSettings {
    pub fn default_for_dim(d: usize) -> Self {
        Self {
            mean_low: vec![-4.0; d],
            mean_high: vec![4.0; d],
            scale_range: (0.25, 4.0),
            weight_floor: 0.05,
            count: 500,
        }
    }
}

pub const DEFAULT_DELTA: f64 = 0.05;
pub const DEFAULT_EM_ITERS: usize = 100;
pub const DEFAULT_COVER_BUDGET: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub pipeline: PipelineKind,
    pub t_total: usize,
    pub tprime: TPrimePolicy,
    /// Prediction made during the structure-learning phase.
    pub phase1_prediction: f64,
    pub lambda: u32,
    #[serde(default)]
    pub candidates: Option<CandidateSettings>,
    pub em_iters: usize,
    /// Pseudodimension stand-in for the covering `T'` formula; defaults to
    /// `dim T(x) + 1` of the model family.
    #[serde(default)]
    pub pdim_hint: Option<usize>,
    pub delta: f64,
    pub include_truth: bool,
    pub cover_budget: usize,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(pipeline: PipelineKind, t_total: usize, seed: u64) -> Self {
        let tprime = match pipeline {
            PipelineKind::MoDce | PipelineKind::MoLce => TPrimePolicy::SqrtFormula,
            _ => TPrimePolicy::T23,
        };
        Self {
            pipeline,
            t_total,
            tprime,
            phase1_prediction: 0.5,
            lambda: 10,
            candidates: None,
            em_iters: DEFAULT_EM_ITERS,
            pdim_hint: None,
            delta: DEFAULT_DELTA,
            include_truth: false,
            cover_budget: DEFAULT_COVER_BUDGET,
            seed,
        }
    }

    /// Resolve the phase boundary, clamped into `[1, T-1]`.
    pub fn resolve_tprime(&self, model: &MixtureModel) -> Result<usize, PipelineError> {
        if self.t_total < 2 {
            return Err(PipelineError::InvalidConfig(
                "two-phase pipelines need t_total >= 2".into(),
            ));
        }
        let t = self.t_total as f64;
        let raw = match self.tprime {
            TPrimePolicy::T23 => t.powf(2.0 / 3.0).ceil(),
            TPrimePolicy::T1213 => t.powf(12.0 / 13.0).ceil(),
            TPrimePolicy::SqrtFormula => {
                let pdim = self
                    .pdim_hint
                    .unwrap_or_else(|| model.component(0).suff_dim() + 1)
                    as f64;
                (t * (pdim * t.ln() + (1.0 / self.delta).ln())).sqrt().ceil()
            }
            TPrimePolicy::Fixed(n) => n as f64,
        };
        Ok((raw as usize).clamp(1, self.t_total - 1))
    }
}

/// Everything a run produces. The transcript stays in memory for metric
/// recomputation but is not serialized; summaries carry the reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub pipeline: PipelineKind,
    pub t_total: usize,
    pub seed: u64,
    pub tprime: usize,
    pub cover_size: Option<usize>,
    /// Serialized cover description for the multi-objective pipelines; the
    /// candidate class is regenerable from it.
    pub cover: Option<CoverDocument>,
    pub dce: ErrorReport,
    pub lce: ErrorReport,
    pub mce: Option<ErrorReport>,
    pub wall_ms: u64,
    #[serde(skip_serializing)]
    pub transcript: Transcript,
}

/// Incremental true-model report pair, updated in round order.
struct TruthAccumulators {
    grid: BucketGrid,
    dce: CellAccumulator,
    lce: CellAccumulator,
    post: Vec<f64>,
}

impl TruthAccumulators {
    fn new(model: &MixtureModel, grid: BucketGrid) -> Self {
        Self {
            grid,
            dce: CellAccumulator::new(model.k(), &grid),
            lce: CellAccumulator::new(model.k(), &grid),
            post: vec![0.0; model.k()],
        }
    }

    fn observe(
        &mut self,
        model: &MixtureModel,
        x: &[f64],
        y: u8,
        yhat: f64,
    ) -> Result<(), MetricsError> {
        let v = self.grid.bucket_of(yhat)?;
        let residual = yhat - y as f64;
        self.dce.update(model.discriminant(x), v, residual);
        model.posterior_into(x, &mut self.post);
        for (g, p) in self.post.iter().enumerate() {
            self.lce.update(g, v, p * residual);
        }
        Ok(())
    }
}

/// Run the configured pipeline against the model.
pub fn run(model: &MixtureModel, config: &PipelineConfig) -> Result<RunResult, PipelineError> {
    if !(0.0..=1.0).contains(&config.phase1_prediction) {
        return Err(PipelineError::InvalidConfig(
            "phase1_prediction must lie in [0, 1]".into(),
        ));
    }
    let started = Instant::now();
    let mut result = match config.pipeline {
        PipelineKind::CtpDce => run_ctp_dce(model, config),
        PipelineKind::CtpLce => run_ctp_lce(model, config),
        PipelineKind::MoDce => run_multiobjective(model, config, DistinguisherMode::Dce),
        PipelineKind::MoLce => run_multiobjective(model, config, DistinguisherMode::Lce),
        PipelineKind::Marginal => run_marginal(model, config),
    }?;
    result.wall_ms = started.elapsed().as_millis() as u64;
    Ok(result)
}

fn sampled_stream(model: &MixtureModel, config: &PipelineConfig) -> Vec<crate::mixture::LabeledSample> {
    model.sample(config.t_total, derive_seed(config.seed, 0x5a))
}

fn run_ctp_dce(model: &MixtureModel, config: &PipelineConfig) -> Result<RunResult, PipelineError> {
    if model.k() != 2 || model.family() != FamilyKind::GaussianIsotropic {
        return Err(PipelineError::UnsupportedModel {
            pipeline: "ctp_dce",
            requirement: "two isotropic gaussian components",
        });
    }
    let tprime = config.resolve_tprime(model)?;
    let samples = sampled_stream(model, config);
    let grid = BucketGrid::new(config.lambda);
    let mut acc = TruthAccumulators::new(model, grid);
    let mut transcript = Transcript {
        rounds: Vec::with_capacity(config.t_total),
        phase_split: Some(tprime),
    };

    for s in samples.iter().take(tprime) {
        let yhat = config.phase1_prediction;
        acc.observe(model, &s.x, s.y, yhat)?;
        transcript.push(s.x.clone(), s.y, yhat);
    }
    let phase1_xs: Vec<Vec<f64>> = samples[..tprime].iter().map(|s| s.x.clone()).collect();
    let learned = learn_discriminant_2iso(&phase1_xs)?;

    // Each per-cluster engine sees about half the remaining rounds under
    // equal mixing weights; tune its learning rate for that horizon.
    let horizon = ((config.t_total - tprime) / 2).max(1);
    let mut engines = [
        McEngine::new(
            vec![Distinguisher::Constant(1.0)],
            config.lambda,
            horizon,
            derive_seed(config.seed, 0x10),
            PredGridPolicy::LambdaSqrtT,
            EtaPolicy::SqrtLnNOverT,
        )?,
        McEngine::new(
            vec![Distinguisher::Constant(1.0)],
            config.lambda,
            horizon,
            derive_seed(config.seed, 0x11),
            PredGridPolicy::LambdaSqrtT,
            EtaPolicy::SqrtLnNOverT,
        )?,
    ];
    for s in samples.iter().skip(tprime) {
        let cluster = learned.assign(&s.x);
        let step = engines[cluster].step(&s.x, s.y);
        acc.observe(model, &s.x, s.y, step.yhat)?;
        transcript.push(s.x.clone(), s.y, step.yhat);
    }

    Ok(RunResult {
        pipeline: PipelineKind::CtpDce,
        t_total: config.t_total,
        seed: config.seed,
        tprime,
        cover_size: None,
        cover: None,
        dce: acc.dce.into_report(),
        lce: acc.lce.into_report(),
        mce: None,
        wall_ms: 0,
        transcript,
    })
}

fn run_ctp_lce(model: &MixtureModel, config: &PipelineConfig) -> Result<RunResult, PipelineError> {
    let gaussian = matches!(
        model.family(),
        FamilyKind::GaussianFull | FamilyKind::GaussianIsotropic
    );
    if !gaussian || model.k() > 2 {
        return Err(PipelineError::UnsupportedModel {
            pipeline: "ctp_lce",
            requirement: "at most two gaussian components",
        });
    }
    let tprime = config.resolve_tprime(model)?;
    let samples = sampled_stream(model, config);
    let grid = BucketGrid::new(config.lambda);
    let mut acc = TruthAccumulators::new(model, grid);
    let mut transcript = Transcript {
        rounds: Vec::with_capacity(config.t_total),
        phase_split: Some(tprime),
    };

    for s in samples.iter().take(tprime) {
        let yhat = config.phase1_prediction;
        acc.observe(model, &s.x, s.y, yhat)?;
        transcript.push(s.x.clone(), s.y, yhat);
    }
    let phase1_xs: Vec<Vec<f64>> = samples[..tprime].iter().map(|s| s.x.clone()).collect();
    let learned = std::sync::Arc::new(learn_mixture_em(
        &phase1_xs,
        model.k(),
        model.family(),
        config.em_iters,
        derive_seed(config.seed, 0x12),
    )?);
    let dists: Vec<Distinguisher> = (0..model.k())
        .map(|group| Distinguisher::Posterior {
            model: learned.clone(),
            group,
        })
        .collect();

    let mut engine = McEngine::new(
        dists,
        config.lambda,
        config.t_total - tprime,
        derive_seed(config.seed, 0x13),
        PredGridPolicy::LambdaSqrtT,
        EtaPolicy::SqrtLnNOverT,
    )?;
    engine.seed_mce_rounds(&transcript.rounds)?;
    for s in samples.iter().skip(tprime) {
        let step = engine.step(&s.x, s.y);
        acc.observe(model, &s.x, s.y, step.yhat)?;
        transcript.push(s.x.clone(), s.y, step.yhat);
    }

    Ok(RunResult {
        pipeline: PipelineKind::CtpLce,
        t_total: config.t_total,
        seed: config.seed,
        tprime,
        cover_size: None,
        cover: None,
        dce: acc.dce.into_report(),
        lce: acc.lce.into_report(),
        mce: Some(engine.mce_report()),
        wall_ms: 0,
        transcript,
    })
}

fn run_multiobjective(
    model: &MixtureModel,
    config: &PipelineConfig,
    mode: DistinguisherMode,
) -> Result<RunResult, PipelineError> {
    let tprime = config.resolve_tprime(model)?;
    let samples = sampled_stream(model, config);
    let grid = BucketGrid::new(config.lambda);
    let mut acc = TruthAccumulators::new(model, grid);
    let mut transcript = Transcript {
        rounds: Vec::with_capacity(config.t_total),
        phase_split: Some(tprime),
    };

    for s in samples.iter().take(tprime) {
        let yhat = config.phase1_prediction;
        acc.observe(model, &s.x, s.y, yhat)?;
        transcript.push(s.x.clone(), s.y, yhat);
    }
    let phase1_xs: Vec<Vec<f64>> = samples[..tprime].iter().map(|s| s.x.clone()).collect();

    let settings = config
        .candidates
        .clone()
        .unwrap_or_else(|| CandidateSettings::default_for_dim(model.dim()));
    let family = CandidateFamily {
        k: model.k(),
        d: model.dim(),
        family: model.family(),
        mean_low: settings.mean_low,
        mean_high: settings.mean_high,
        scale_range: settings.scale_range,
        weight_floor: settings.weight_floor,
        count: settings.count,
        seed: derive_seed(config.seed, 0x20),
    };
    let truth = config.include_truth.then(|| model.mixture().clone());
    let class = build_distinguisher_class(&family, mode, truth.as_ref())?;
    let table = FunctionTable::evaluate(&class, &phase1_xs)?;
    let epsilon = 1.0 / tprime as f64;
    // Truth distinguishers sit at the end of the class; force them into the
    // cover so the dominance inequalities stay exact in diagnostic mode.
    let preselected: Vec<usize> = if config.include_truth {
        (family.count * family.k..class.len()).collect()
    } else {
        Vec::new()
    };
    let cover = greedy_cover(&table, epsilon, &preselected)?;
    if cover.len() > config.cover_budget {
        log::warn!(
            "cover size {} exceeds budget {}; continuing",
            cover.len(),
            config.cover_budget
        );
    }
    let dists = select_distinguishers(&class, &cover);
    let cover_doc = CoverDocument {
        family: family.clone(),
        mode,
        truth,
        epsilon: cover.epsilon,
        selected: cover.selected.clone(),
    };
    drop(table);

    let mut engine = McEngine::new(
        dists,
        config.lambda,
        config.t_total - tprime,
        derive_seed(config.seed, 0x21),
        PredGridPolicy::LambdaSqrtT,
        EtaPolicy::SqrtLnNOverT,
    )?;
    engine.seed_mce_rounds(&transcript.rounds)?;
    for s in samples.iter().skip(tprime) {
        let step = engine.step(&s.x, s.y);
        acc.observe(model, &s.x, s.y, step.yhat)?;
        transcript.push(s.x.clone(), s.y, step.yhat);
    }

    Ok(RunResult {
        pipeline: match mode {
            DistinguisherMode::Dce => PipelineKind::MoDce,
            DistinguisherMode::Lce => PipelineKind::MoLce,
        },
        t_total: config.t_total,
        seed: config.seed,
        tprime,
        cover_size: Some(cover.len()),
        cover: Some(cover_doc),
        dce: acc.dce.into_report(),
        lce: acc.lce.into_report(),
        mce: Some(engine.mce_report()),
        wall_ms: 0,
        transcript,
    })
}

fn run_marginal(model: &MixtureModel, config: &PipelineConfig) -> Result<RunResult, PipelineError> {
    let samples = sampled_stream(model, config);
    let grid = BucketGrid::new(config.lambda);
    let mut acc = TruthAccumulators::new(model, grid);
    let mut transcript = Transcript {
        rounds: Vec::with_capacity(config.t_total),
        phase_split: None,
    };
    let mut engine = McEngine::new(
        vec![Distinguisher::Constant(1.0)],
        config.lambda,
        config.t_total.max(1),
        derive_seed(config.seed, 0x30),
        PredGridPolicy::LambdaSqrtT,
        EtaPolicy::SqrtLnNOverT,
    )?;
    for s in &samples {
        let step = engine.step(&s.x, s.y);
        acc.observe(model, &s.x, s.y, step.yhat)?;
        transcript.push(s.x.clone(), s.y, step.yhat);
    }
    Ok(RunResult {
        pipeline: PipelineKind::Marginal,
        t_total: config.t_total,
        seed: config.seed,
        tprime: 0,
        cover_size: None,
        cover: None,
        dce: acc.dce.into_report(),
        lce: acc.lce.into_report(),
        mce: Some(engine.mce_report()),
        wall_ms: 0,
        transcript,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exp_family::Component;
    use crate::metrics;
    use crate::mixture::{LabelRule, Mixture};

    fn iso_model(sep: f64, label: LabelRule) -> MixtureModel {
        let m = Mixture::new(
            vec![0.5, 0.5],
            vec![
                Component::gaussian_isotropic(vec![-sep / 2.0, 0.0], 1.0).unwrap(),
                Component::gaussian_isotropic(vec![sep / 2.0, 0.0], 1.0).unwrap(),
            ],
        )
        .unwrap();
        MixtureModel::new(m, label).unwrap()
    }

    #[test]
    fn tprime_policies_resolve_and_clamp() {
        let model = iso_model(2.0, LabelRule::Constant { p: 0.5 });
        let mut cfg = PipelineConfig::new(PipelineKind::CtpDce, 4096, 0);
        cfg.tprime = TPrimePolicy::T23;
        assert_eq!(cfg.resolve_tprime(&model).unwrap(), 256);
        cfg.tprime = TPrimePolicy::Fixed(999_999);
        assert_eq!(cfg.resolve_tprime(&model).unwrap(), 4095);
        cfg.tprime = TPrimePolicy::Fixed(0);
        assert_eq!(cfg.resolve_tprime(&model).unwrap(), 1);
    }

    #[test]
    fn tprime_policy_string_round_trip() {
        for p in [
            TPrimePolicy::T23,
            TPrimePolicy::T1213,
            TPrimePolicy::SqrtFormula,
            TPrimePolicy::Fixed(37),
        ] {
            let s = p.to_string();
            let back: TPrimePolicy = s.parse().unwrap();
            assert_eq!(p, back);
        }
    }

    #[test]
    fn ctp_dce_rejects_unsupported_models() {
        let m = Mixture::new(
            vec![1.0],
            vec![Component::gaussian_isotropic(vec![0.0], 1.0).unwrap()],
        )
        .unwrap();
        let model = MixtureModel::new(m, LabelRule::Constant { p: 0.5 }).unwrap();
        let cfg = PipelineConfig::new(PipelineKind::CtpDce, 256, 0);
        assert!(matches!(
            run(&model, &cfg),
            Err(PipelineError::UnsupportedModel { .. })
        ));
    }

    #[test]
    fn runs_are_bitwise_reproducible() {
        let model = iso_model(
            2.0,
            LabelRule::Logistic {
                weights: vec![1.5, 0.0],
                bias: 0.0,
            },
        );
        let mut cfg = PipelineConfig::new(PipelineKind::MoDce, 512, 7);
        cfg.candidates = Some(CandidateSettings {
            count: 40,
            ..CandidateSettings::default_for_dim(2)
        });
        let a = run(&model, &cfg).unwrap();
        let b = run(&model, &cfg).unwrap();
        assert_eq!(a.transcript, b.transcript);
        assert_eq!(a.dce, b.dce);
        assert_eq!(a.lce, b.lce);
        assert_eq!(a.mce, b.mce);
        assert_eq!(a.cover_size, b.cover_size);
    }

    #[test]
    fn incremental_reports_match_batch_recomputation_exactly() {
        let model = iso_model(
            2.0,
            LabelRule::Logistic {
                weights: vec![1.0, 0.0],
                bias: 0.1,
            },
        );
        let mut cfg = PipelineConfig::new(PipelineKind::CtpDce, 1024, 3);
        cfg.tprime = TPrimePolicy::T23;
        let res = run(&model, &cfg).unwrap();
        let grid = BucketGrid::new(cfg.lambda);
        let batch_d = metrics::dce(&model, &res.transcript, &grid).unwrap();
        let batch_l = metrics::lce(&model, &res.transcript, &grid).unwrap();
        assert_eq!(res.dce.cells, batch_d.cells);
        assert_eq!(res.lce.cells, batch_l.cells);
        assert_eq!(res.transcript.len(), 1024);
        assert!(res.transcript.rounds.iter().all(|r| (0.0..=1.0).contains(&r.yhat)));
    }

    #[test]
    fn mo_anytime_mce_equals_batch_over_rebuilt_cover() {
        let model = iso_model(
            2.0,
            LabelRule::Logistic {
                weights: vec![1.5, 0.0],
                bias: 0.0,
            },
        );
        let mut cfg = PipelineConfig::new(PipelineKind::MoLce, 700, 13);
        cfg.candidates = Some(CandidateSettings {
            count: 25,
            ..CandidateSettings::default_for_dim(2)
        });
        let res = run(&model, &cfg).unwrap();
        let doc = res.cover.as_ref().unwrap();
        let class = doc.rebuild_class().unwrap();
        let dists = crate::cover::select_distinguishers(&class, &doc.cover());
        let batch = metrics::mce(&dists, &res.transcript, &BucketGrid::new(cfg.lambda)).unwrap();
        assert_eq!(res.mce.as_ref().unwrap().cells, batch.cells);
    }

    #[test]
    fn mo_mce_matches_batch_and_dominates_with_truth() {
        let model = iso_model(
            1.0,
            LabelRule::Logistic {
                weights: vec![1.5, 0.0],
                bias: 0.0,
            },
        );
        let mut cfg = PipelineConfig::new(PipelineKind::MoDce, 768, 5);
        cfg.include_truth = true;
        cfg.candidates = Some(CandidateSettings {
            count: 30,
            ..CandidateSettings::default_for_dim(2)
        });
        let res = run(&model, &cfg).unwrap();
        let mce = res.mce.as_ref().unwrap();
        assert!(mce.max_abs >= res.dce.max_abs - 1e-9);
    }

    #[test]
    fn degenerate_tprime_leaves_constant_prediction_bias() {
        // With T' = T-1 and labels at p = 0.8, the error is dominated by the
        // fixed 0.5 predictions: about |0.5 - 0.8| * (T-1) * max_g w_g.
        let model = iso_model(8.0, LabelRule::Constant { p: 0.8 });
        let t = 4097;
        let mut cfg = PipelineConfig::new(PipelineKind::CtpDce, t, 11);
        cfg.tprime = TPrimePolicy::Fixed(t - 1);
        let res = run(&model, &cfg).unwrap();
        let expected = 0.3 * (t - 1) as f64 * 0.5;
        assert!(
            (res.dce.max_abs - expected).abs() < 0.05 * t as f64,
            "dce {} expected about {expected}",
            res.dce.max_abs
        );
    }

    #[test]
    fn marginal_pipeline_reports_mce() {
        let m = Mixture::new(
            vec![1.0],
            vec![Component::gaussian_isotropic(vec![0.0, 0.0], 1.0).unwrap()],
        )
        .unwrap();
        let model = MixtureModel::new(m, LabelRule::Constant { p: 0.7 }).unwrap();
        let cfg = PipelineConfig::new(PipelineKind::Marginal, 2048, 1);
        let res = run(&model, &cfg).unwrap();
        let mce = res.mce.unwrap();
        // k = 1 makes DCE the plain bucketed calibration error, which is the
        // constant-distinguisher MCE row.
        assert_eq!(mce.cells[0], res.dce.cells[0]);
        assert!(mce.max_abs / 2048.0 < 0.05);
    }
}
