//! Per-subgroup online calibration over mixture models.
//!
//! The library simulates populations whose subgroups emerge endogenously from
//! a mixture of exponential-family components with a component-independent
//! label rule, and implements the learners and error measures for calibrating
//! predictions per subgroup when the structure is unknown:
//!
//! * [`mixture`] / [`exp_family`] — the generative model: sampling,
//!   log-space posteriors, discriminants, and likelihood ratios.
//! * [`buckets`] / [`metrics`] — the bucket grid and the three transcript
//!   error functionals (discriminant, likelihood, and multicalibration
//!   error), batch and incremental.
//! * [`hedge`] / [`engine`] — the online multicalibration engine: a Hedge
//!   distribution over (sign, distinguisher, bucket) experts with an exact
//!   per-round minimax prediction step.
//! * [`distinguisher`] / [`cover`] — candidate structure classes and
//!   empirical ε-covers with held-out verification.
//! * [`shatter`] — brute-force pseudo-shattering checks at tiny scale.
//! * [`estimators`] — phase-one structure estimators (principal-direction
//!   discriminant learning and EM).
//! * [`pipeline`] — the end-to-end learners: cluster-then-predict,
//!   multi-objective covering + multicalibration, and marginal calibration.
//!
//! Heavy inner loops (function-table evaluation, cover construction and
//! verification, Monte Carlo integration) parallelize through [`par`] behind
//! the default `parallel` feature; every parallel path is an ordered map, so
//! results are bitwise identical to the sequential fallback.

pub mod buckets;
pub mod cover;
pub mod distinguisher;
pub mod engine;
pub mod estimators;
pub mod exp_family;
pub mod hedge;
pub mod metrics;
pub mod mixture;
pub mod oracles;
pub mod par;
pub mod pipeline;
pub mod shatter;
pub mod tv;
pub mod util;

pub use buckets::{BucketGrid, MetricsError, Round, Transcript};
pub use cover::{
    cover_invariant_gap, exact_cover, greedy_cover, verify_cover, Cover, CoverDocument,
    CoverError, FunctionTable, VerifyReport,
};
pub use distinguisher::{
    build_distinguisher_class, CandidateFamily, Distinguisher, DistinguisherMode,
};
pub use engine::{
    run_multicalibration, EngineConfig, EngineError, EtaPolicy, ExpertIndex, McEngine,
    MinimaxOutcome, MinimaxSolver, PredGridPolicy, PredictionGrid, RandomizedPrediction,
    StepResult,
};
pub use estimators::{
    learn_discriminant_2iso, learn_mixture_em, EstimatorError, LearnedDiscriminant,
};
pub use exp_family::{Component, FamilyKind, GaussianParams, ModelError};
pub use hedge::{HedgeError, HedgeState};
pub use metrics::{dce, lce, mce, CellAccumulator, ErrorReport};
pub use mixture::{BoxRegion, LabelRule, LabeledSample, Mixture, MixtureModel};
pub use pipeline::{
    run, CandidateSettings, PipelineConfig, PipelineError, PipelineKind, RunResult, TPrimePolicy,
};
pub use shatter::{empirical_shatter_dim, pseudo_shatters, ShatterError};
pub use tv::{tv_distance_mc, Density, TvEstimate};
