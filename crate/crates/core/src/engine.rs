//! The online multicalibration engine: a Hedge distribution over
//! (sign, distinguisher, bucket) experts drives a per-round minimax
//! prediction step.
//!
//! Per round the engine aggregates the current expert distribution into one
//! signed coefficient per bucket, solves the prediction game exactly over
//! point masses and adjacent zero-bias mixtures on a fine prediction grid,
//! samples the realized prediction, and charges every expert its cost
//! `½ - ½·i·g(x_t)·E[1[ŷ∈v](ŷ - y_t)]`.
//!
//! Costs equal ½ for every expert whose bucket the prediction distribution
//! does not touch, so the weight update factors into a global constant
//! (Hedge is shift invariant) times per-(g, v) multipliers on at most two
//! buckets. The engine maintains weights multiplicatively that way and
//! renormalizes on a fixed schedule; a test pins it to the plain
//! cumulative-cost form in [`crate::hedge`].
//!
//! Engines are strictly sequential and self-seeded: one run is bitwise
//! reproducible regardless of thread count.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::buckets::{BucketGrid, MetricsError, Round, Transcript};
use crate::distinguisher::Distinguisher;
use crate::metrics::{CellAccumulator, ErrorReport};
use crate::util::{derive_seed, feature_hash};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("engine needs at least one distinguisher")]
    EmptyDistinguishers,
    #[error("tabulated distinguishers cannot be evaluated online")]
    TabulatedDistinguisher,
    #[error("data stream exhausted after {got} of {needed} rounds")]
    StreamExhausted { needed: usize, got: usize },
    #[error("prediction grid leaves bucket {0} without a grid point")]
    PredGridTooCoarse(usize),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Spacing floor 1e-4: never more than this many grid intervals.
pub const MAX_PRED_INTERVALS: usize = 10_000;

const RENORM_PERIOD: u64 = 1024;

/// How the prediction-grid spacing is chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredGridPolicy {
    /// `1/(4λ·ceil(sqrt(T)))`, capped below at 1e-4. The spacing has to
    /// vanish with the horizon for the per-round game value to be o(1).
    #[default]
    LambdaSqrtT,
    Fixed { intervals: usize },
}

/// How the Hedge learning rate is chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EtaPolicy {
    /// `sqrt(8 ln N / T)` with the horizon known per run.
    #[default]
    SqrtLnNOverT,
    Fixed { eta: f64 },
}

/// Engine configuration as serialized to JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub lambda: u32,
    pub t: usize,
    #[serde(default)]
    pub eta_policy: EtaPolicy,
    #[serde(default)]
    pub pred_grid_policy: PredGridPolicy,
    pub seed: u64,
}

/// The uniform grid `{0, 1/M, ..., 1}` predictions are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictionGrid {
    intervals: usize,
}

impl PredictionGrid {
    pub fn from_policy(policy: PredGridPolicy, lambda: u32, horizon: usize) -> Self {
        let intervals = match policy {
            PredGridPolicy::LambdaSqrtT => {
                let sqrt_t = (horizon.max(1) as f64).sqrt().ceil() as usize;
                (4 * lambda as usize * sqrt_t).min(MAX_PRED_INTERVALS)
            }
            PredGridPolicy::Fixed { intervals } => intervals.min(MAX_PRED_INTERVALS),
        };
        Self {
            intervals: intervals.max(1),
        }
    }

    pub fn n_points(&self) -> usize {
        self.intervals + 1
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.intervals as f64
    }

    pub fn value(&self, j: usize) -> f64 {
        debug_assert!(j <= self.intervals);
        j as f64 / self.intervals as f64
    }
}

/// A distribution over at most two adjacent prediction-grid values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomizedPrediction {
    pub lo: f64,
    pub hi: f64,
    /// Probability of `hi`; 0 encodes a point mass at `lo`.
    pub p_hi: f64,
    pub lo_bucket: usize,
    pub hi_bucket: usize,
}

impl RandomizedPrediction {
    pub fn point(value: f64, bucket: usize) -> Self {
        Self {
            lo: value,
            hi: value,
            p_hi: 0.0,
            lo_bucket: bucket,
            hi_bucket: bucket,
        }
    }

    pub fn support_size(&self) -> usize {
        if self.p_hi > 0.0 && self.p_hi < 1.0 && self.lo != self.hi {
            2
        } else {
            1
        }
    }

    pub fn mean(&self) -> f64 {
        self.lo + self.p_hi * (self.hi - self.lo)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, usize) {
        if self.p_hi > 0.0 && rng.random::<f64>() < self.p_hi {
            (self.hi, self.hi_bucket)
        } else {
            (self.lo, self.lo_bucket)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimaxOutcome {
    pub prediction: RandomizedPrediction,
    /// Worst-case (over y) expected signed objective of the returned
    /// prediction; never exceeds the prediction-grid spacing.
    pub value: f64,
}

/// Exact minimizer of the per-round prediction game over point masses and
/// adjacent zero-bias mixtures.
///
/// The bucket aggregate `a_v` makes the objective of a point mass `p`
/// equal to `max(a_v·p, a_v·(p-1))`, constant-sign within a bucket, so per
/// bucket only one extreme grid point can be optimal; and a two-point
/// mixture can only improve on its endpoints where the label coefficient
/// can be zeroed, which needs opposite signs across a bucket boundary.
/// Minimizing over those candidates is exactly minimizing over every point
/// mass and every adjacent-pair mixture on the grid.
#[derive(Debug, Clone)]
pub struct MinimaxSolver {
    grid: BucketGrid,
    pred: PredictionGrid,
    first_j: Vec<usize>,
    last_j: Vec<usize>,
}

impl MinimaxSolver {
    pub fn new(grid: BucketGrid, pred: PredictionGrid) -> Result<Self, EngineError> {
        let nb = grid.n_buckets();
        let mut first_j = vec![usize::MAX; nb];
        let mut last_j = vec![0usize; nb];
        for j in 0..pred.n_points() {
            let b = grid
                .bucket_of(pred.value(j))
                .expect("grid values lie in [0,1]");
            if first_j[b] == usize::MAX {
                first_j[b] = j;
            }
            last_j[b] = j;
        }
        if let Some(empty) = first_j.iter().position(|&j| j == usize::MAX) {
            return Err(EngineError::PredGridTooCoarse(empty));
        }
        Ok(Self {
            grid,
            pred,
            first_j,
            last_j,
        })
    }

    pub fn grid(&self) -> &BucketGrid {
        &self.grid
    }

    pub fn pred_grid(&self) -> &PredictionGrid {
        &self.pred
    }

    /// Solve for bucket aggregates `a` (one signed coefficient per bucket).
    pub fn solve(&self, a: &[f64]) -> MinimaxOutcome {
        debug_assert_eq!(a.len(), self.grid.n_buckets());
        let mut best_value = f64::INFINITY;
        let mut best = RandomizedPrediction::point(0.0, 0);
        // Best point mass per bucket.
        for (v, &av) in a.iter().enumerate() {
            let (p, val) = if av >= 0.0 {
                let p = self.pred.value(self.first_j[v]);
                (p, av * p)
            } else {
                let p = self.pred.value(self.last_j[v]);
                (p, av * (p - 1.0))
            };
            if val < best_value {
                best_value = val;
                best = RandomizedPrediction::point(p, v);
            }
        }
        // Zero-bias mixtures across bucket boundaries with a sign change.
        for v in 0..a.len() - 1 {
            let (al, ar) = (a[v], a[v + 1]);
            if !((al < 0.0 && ar > 0.0) || (al > 0.0 && ar < 0.0)) {
                continue;
            }
            let q = al / (al - ar);
            let lo = self.pred.value(self.last_j[v]);
            let hi = self.pred.value(self.first_j[v + 1]);
            let val = (1.0 - q) * al * lo + q * ar * hi;
            if val < best_value {
                best_value = val;
                best = RandomizedPrediction {
                    lo,
                    hi,
                    p_hi: q,
                    lo_bucket: v,
                    hi_bucket: v + 1,
                };
            }
        }
        MinimaxOutcome {
            prediction: best,
            value: best_value,
        }
    }
}

/// One expert of the multicalibration game: a sign, a distinguisher index,
/// and a bucket. The full roster has `N = 2·|G|·(λ+1)` experts, flattened in
/// canonical order: the sign +1 block then the sign -1 block, each `[g][v]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpertIndex {
    /// +1 or -1.
    pub sign: i8,
    pub dist: usize,
    pub bucket: usize,
}

impl ExpertIndex {
    pub fn count(n_dists: usize, n_buckets: usize) -> usize {
        2 * n_dists * n_buckets
    }

    pub fn flat(&self, n_dists: usize, n_buckets: usize) -> usize {
        debug_assert!(self.dist < n_dists && self.bucket < n_buckets);
        let block = if self.sign >= 0 { 0 } else { n_dists * n_buckets };
        block + self.dist * n_buckets + self.bucket
    }

    pub fn from_flat(idx: usize, n_dists: usize, n_buckets: usize) -> Self {
        let half = n_dists * n_buckets;
        let (sign, rest) = if idx < half { (1, idx) } else { (-1, idx - half) };
        ExpertIndex {
            sign,
            dist: rest / n_buckets,
            bucket: rest % n_buckets,
        }
    }
}

/// Per-expert costs for one round, in canonical order (the sign +1 block then
/// the sign -1 block, each `[g][v]`):
/// `c(i, g, v) = ½ - ½·i·g(x_t)·E_{ŷ}[1[ŷ∈v]·(ŷ - y_t)]`.
///
/// Always lands in `[0, 1]`, and sign-flipped experts' costs sum to exactly 1.
/// The engine applies the same update in factored multiplicative form; a test
/// pins the two together through [`crate::hedge::HedgeState`].
pub fn expert_costs(
    dist_values: &[f64],
    prediction: &RandomizedPrediction,
    y: u8,
    n_buckets: usize,
) -> Vec<f64> {
    let yf = y as f64;
    let mut bw = vec![0.0; n_buckets];
    bw[prediction.lo_bucket] += (1.0 - prediction.p_hi) * (prediction.lo - yf);
    bw[prediction.hi_bucket] += prediction.p_hi * (prediction.hi - yf);
    let n = dist_values.len() * n_buckets;
    let mut costs = vec![0.0; 2 * n];
    for (g, &gv) in dist_values.iter().enumerate() {
        for (v, &b) in bw.iter().enumerate() {
            let plus = 0.5 - 0.5 * gv * b;
            costs[g * n_buckets + v] = plus;
            costs[n + g * n_buckets + v] = 1.0 - plus;
        }
    }
    costs
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub yhat: f64,
    pub bucket: usize,
    pub minimax_value: f64,
    pub prediction: RandomizedPrediction,
}

/// One engine instance per run; no shared mutable state.
#[derive(Debug, Clone)]
pub struct McEngine {
    dists: Vec<Distinguisher>,
    grid: BucketGrid,
    solver: MinimaxSolver,
    eta: f64,
    /// Weights for sign +1 experts, laid out `[g * (λ+1) + v]`.
    w_plus: Vec<f64>,
    /// Weights for sign -1 experts, same layout.
    w_minus: Vec<f64>,
    z: f64,
    rounds: u64,
    rng: ChaCha8Rng,
    dist_values: Vec<f64>,
    scratch: Vec<f64>,
    a: Vec<f64>,
    mce_acc: CellAccumulator,
}

impl McEngine {
    pub fn new(
        dists: Vec<Distinguisher>,
        lambda: u32,
        horizon: usize,
        seed: u64,
        pred_policy: PredGridPolicy,
        eta_policy: EtaPolicy,
    ) -> Result<Self, EngineError> {
        if dists.is_empty() {
            return Err(EngineError::EmptyDistinguishers);
        }
        if dists.iter().any(|d| d.is_tabulated()) {
            return Err(EngineError::TabulatedDistinguisher);
        }
        let grid = BucketGrid::new(lambda);
        let pred = PredictionGrid::from_policy(pred_policy, lambda, horizon);
        let solver = MinimaxSolver::new(grid, pred)?;
        let nb = grid.n_buckets();
        let n_experts = 2 * dists.len() * nb;
        let eta = match eta_policy {
            EtaPolicy::SqrtLnNOverT => crate::hedge::HedgeState::eta_for_horizon(n_experts, horizon),
            EtaPolicy::Fixed { eta } => eta,
        };
        let n_dists = dists.len();
        Ok(Self {
            dists,
            grid,
            solver,
            eta,
            w_plus: vec![1.0; n_dists * nb],
            w_minus: vec![1.0; n_dists * nb],
            z: (2 * n_dists * nb) as f64,
            rounds: 0,
            rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xe71)),
            dist_values: vec![0.0; n_dists],
            scratch: Vec::new(),
            a: vec![0.0; nb],
            mce_acc: CellAccumulator::new(n_dists, &grid),
        })
    }

    pub fn n_distinguishers(&self) -> usize {
        self.dists.len()
    }

    pub fn n_experts(&self) -> usize {
        2 * self.dists.len() * self.grid.n_buckets()
    }

    pub fn grid(&self) -> &BucketGrid {
        &self.grid
    }

    pub fn pred_grid(&self) -> &PredictionGrid {
        self.solver.pred_grid()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    /// Normalized expert distribution in canonical order: the sign +1 block
    /// then the sign -1 block, each laid out `[g][v]`.
    pub fn expert_distribution(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_experts());
        out.extend_from_slice(&self.w_plus);
        out.extend_from_slice(&self.w_minus);
        let z: f64 = out.iter().sum();
        for w in &mut out {
            *w /= z;
        }
        out
    }

    fn eval_dists(&mut self, x: &[f64]) {
        for (i, d) in self.dists.iter().enumerate() {
            self.dist_values[i] = d.eval_with(x, &mut self.scratch);
        }
    }

    fn bucket_aggregates(&mut self) {
        let nb = self.grid.n_buckets();
        self.a.iter_mut().for_each(|v| *v = 0.0);
        for (g, &gv) in self.dist_values.iter().enumerate() {
            if gv == 0.0 {
                continue;
            }
            let row = g * nb;
            for v in 0..nb {
                self.a[v] += gv * (self.w_plus[row + v] - self.w_minus[row + v]);
            }
        }
        for v in self.a.iter_mut() {
            *v /= self.z;
        }
    }

    /// Play one round: observe `x_t`, commit a randomized prediction, then
    /// observe `y_t` and update every expert.
    pub fn step(&mut self, x: &[f64], y: u8) -> StepResult {
        self.eval_dists(x);
        self.bucket_aggregates();
        let outcome = self.solver.solve(&self.a);
        debug_assert!(outcome.value <= self.pred_grid().spacing() + 1e-9);
        let (yhat, bucket) = outcome.prediction.sample(&mut self.rng);

        // Expected residual mass per touched bucket, over the prediction
        // distribution (not the realization).
        let pred = outcome.prediction;
        let nb = self.grid.n_buckets();
        let yf = y as f64;
        let touched: [(usize, f64); 2] = [
            (pred.lo_bucket, (1.0 - pred.p_hi) * (pred.lo - yf)),
            (pred.hi_bucket, pred.p_hi * (pred.hi - yf)),
        ];
        // Merge duplicate buckets (point masses or both points in a bucket).
        let merged: Vec<(usize, f64)> = if pred.lo_bucket == pred.hi_bucket {
            vec![(pred.lo_bucket, touched[0].1 + touched[1].1)]
        } else {
            touched.to_vec()
        };
        for (b, bw) in merged {
            if bw == 0.0 {
                continue;
            }
            for g in 0..self.dists.len() {
                let gv = self.dist_values[g];
                if gv == 0.0 {
                    continue;
                }
                // Relative multiplier after factoring out the uniform
                // exp(-eta/2): cost_+ = 1/2 - 1/2 gv bw.
                let wt = 0.5 * self.eta * gv * bw;
                let idx = g * nb + b;
                let old_p = self.w_plus[idx];
                let old_m = self.w_minus[idx];
                let new_p = old_p * wt.exp();
                let new_m = old_m * (-wt).exp();
                self.w_plus[idx] = new_p;
                self.w_minus[idx] = new_m;
                self.z += (new_p - old_p) + (new_m - old_m);
            }
        }

        // Anytime multicalibration accumulator on the realization.
        let residual = yhat - yf;
        for g in 0..self.dists.len() {
            let gv = self.dist_values[g];
            if gv != 0.0 {
                self.mce_acc.update(g, bucket, gv * residual);
            }
        }

        self.rounds += 1;
        if self.rounds.is_multiple_of(RENORM_PERIOD) {
            self.renormalize();
        }
        StepResult {
            yhat,
            bucket,
            minimax_value: outcome.value,
            prediction: pred,
        }
    }

    fn renormalize(&mut self) {
        let z: f64 = self.w_plus.iter().sum::<f64>() + self.w_minus.iter().sum::<f64>();
        let inv = 1.0 / z;
        for w in self.w_plus.iter_mut().chain(self.w_minus.iter_mut()) {
            *w *= inv;
        }
        self.z = 1.0;
    }

    /// Fold already-played rounds (for example a pipeline's structure-learning
    /// phase) into the anytime multicalibration accumulator, in round order.
    pub fn seed_mce_rounds(&mut self, rounds: &[Round]) -> Result<(), EngineError> {
        for r in rounds {
            let b = self.grid.bucket_of(r.yhat)?;
            self.eval_dists(&r.x);
            let residual = r.yhat - r.y as f64;
            for g in 0..self.dists.len() {
                let gv = self.dist_values[g];
                if gv != 0.0 {
                    self.mce_acc.update(g, b, gv * residual);
                }
            }
        }
        Ok(())
    }

    /// Anytime multicalibration error over this engine's distinguishers.
    pub fn mce_report(&self) -> ErrorReport {
        self.mce_acc.report()
    }
}

/// Run the full engine loop for `t` rounds against an i.i.d. stream,
/// recording realized predictions. The optional trace receives one CSV row
/// per round: `t,x_hash,y,yhat,bucket,minimax_value`.
pub fn run_multicalibration<I>(
    distinguishers: Vec<Distinguisher>,
    stream: I,
    lambda: u32,
    t: usize,
    seed: u64,
    mut trace: Option<&mut dyn Write>,
) -> Result<(Transcript, ErrorReport), EngineError>
where
    I: IntoIterator<Item = (Vec<f64>, u8)>,
{
    let mut engine = McEngine::new(
        distinguishers,
        lambda,
        t.max(1),
        seed,
        PredGridPolicy::LambdaSqrtT,
        EtaPolicy::SqrtLnNOverT,
    )?;
    let mut transcript = Transcript::default();
    if let Some(w) = trace.as_mut() {
        writeln!(w, "t,x_hash,y,yhat,bucket,minimax_value")?;
    }
    let mut stream = stream.into_iter();
    for round in 0..t {
        let (x, y) = stream.next().ok_or(EngineError::StreamExhausted {
            needed: t,
            got: round,
        })?;
        let step = engine.step(&x, y);
        if let Some(w) = trace.as_mut() {
            writeln!(
                w,
                "{round},{:016x},{y},{},{},{}",
                feature_hash(&x),
                step.yhat,
                step.bucket,
                step.minimax_value
            )?;
        }
        transcript.push(x, y, step.yhat);
    }
    Ok((transcript, engine.mce_report()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solver(lambda: u32, intervals: usize) -> MinimaxSolver {
        MinimaxSolver::new(
            BucketGrid::new(lambda),
            PredictionGrid::from_policy(PredGridPolicy::Fixed { intervals }, lambda, 1),
        )
        .unwrap()
    }

    #[test]
    fn expert_index_round_trips_and_counts() {
        let (n_dists, nb) = (7, 11);
        assert_eq!(ExpertIndex::count(n_dists, nb), 2 * 7 * 11);
        for idx in 0..ExpertIndex::count(n_dists, nb) {
            let e = ExpertIndex::from_flat(idx, n_dists, nb);
            assert_eq!(e.flat(n_dists, nb), idx);
            assert!(e.sign == 1 || e.sign == -1);
        }
    }

    #[test]
    fn engine_config_json_shape() {
        let cfg = EngineConfig {
            lambda: 10,
            t: 4096,
            eta_policy: EtaPolicy::SqrtLnNOverT,
            pred_grid_policy: PredGridPolicy::LambdaSqrtT,
            seed: 9,
        };
        let js = serde_json::to_string(&cfg).unwrap();
        assert!(js.contains("\"lambda\":10"));
        assert!(js.contains("\"seed\":9"));
        let back: EngineConfig = serde_json::from_str(&js).unwrap();
        assert_eq!(cfg, back);
        // Policies default when omitted.
        let min: EngineConfig =
            serde_json::from_str(r#"{"lambda":5,"t":100,"seed":1}"#).unwrap();
        assert_eq!(min.eta_policy, EtaPolicy::SqrtLnNOverT);
    }

    #[test]
    fn uniform_state_returns_point_mass_at_zero() {
        let s = solver(5, 40);
        let out = s.solve(&[0.0; 6]);
        assert_eq!(out.value, 0.0);
        assert_eq!(out.prediction, RandomizedPrediction::point(0.0, 0));
    }

    #[test]
    fn weight_concentrated_on_one_positive_expert() {
        // All Hedge mass on (i = +1, g ≡ 1, v = 0): the aggregate is 1 on
        // bucket 0 and 0 elsewhere; a point mass at 0 attains value 0.
        let s = solver(5, 40);
        let mut a = vec![0.0; 6];
        a[0] = 1.0;
        let out = s.solve(&a);
        assert_eq!(out.prediction, RandomizedPrediction::point(0.0, 0));
        assert_eq!(out.value, 0.0);
        let reference = crate::oracles::minimax_brute_force(
            s.grid(),
            s.pred_grid(),
            &a,
        );
        assert!((out.value - reference).abs() <= 1e-12);
    }

    #[test]
    fn all_positive_aggregate_prefers_zero() {
        let s = solver(5, 40);
        let out = s.solve(&[1.0, 0.8, 0.6, 0.4, 0.2, 0.1]);
        assert_eq!(out.prediction.lo, 0.0);
        assert_eq!(out.value, 0.0);
    }

    #[test]
    fn all_negative_aggregate_prefers_one() {
        let s = solver(5, 40);
        let out = s.solve(&[-0.5; 6]);
        assert_eq!(out.prediction.lo, 1.0);
        assert_eq!(out.value, 0.0);
    }

    #[test]
    fn crossing_produces_adjacent_mixture_with_small_value() {
        let s = solver(5, 40);
        let out = s.solve(&[-0.6, -0.2, 0.3, 0.5, 0.7, 0.9]);
        let spacing = 1.0 / 40.0;
        assert!(out.value <= spacing + 1e-12);
        let p = out.prediction;
        if p.support_size() == 2 {
            assert!((p.hi - p.lo - spacing).abs() < 1e-12, "support not adjacent");
        }
    }

    #[test]
    fn engine_rejects_empty_and_tabulated() {
        assert!(matches!(
            McEngine::new(
                vec![],
                5,
                100,
                0,
                PredGridPolicy::LambdaSqrtT,
                EtaPolicy::SqrtLnNOverT
            ),
            Err(EngineError::EmptyDistinguishers)
        ));
        let tab = Distinguisher::Tabulated {
            values: std::sync::Arc::new(vec![0.5]),
        };
        assert!(matches!(
            McEngine::new(
                vec![tab],
                5,
                100,
                0,
                PredGridPolicy::LambdaSqrtT,
                EtaPolicy::SqrtLnNOverT
            ),
            Err(EngineError::TabulatedDistinguisher)
        ));
    }

    #[test]
    fn zero_rounds_gives_empty_transcript_and_zero_mce() {
        let (transcript, report) = run_multicalibration(
            vec![Distinguisher::Constant(1.0)],
            std::iter::empty(),
            10,
            0,
            1,
            None,
        )
        .unwrap();
        assert!(transcript.is_empty());
        assert_eq!(report.max_abs, 0.0);
    }

    #[test]
    fn stream_exhaustion_is_an_error() {
        let stream = vec![(vec![0.0], 1u8)];
        let err = run_multicalibration(
            vec![Distinguisher::Constant(1.0)],
            stream,
            10,
            5,
            1,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, EngineError::StreamExhausted { got: 1, .. }));
    }

    #[test]
    fn trace_rows_match_round_count() {
        let stream: Vec<(Vec<f64>, u8)> = (0..16).map(|i| (vec![i as f64], (i % 2) as u8)).collect();
        let mut buf = Vec::new();
        {
            let mut w: &mut dyn Write = &mut buf;
            run_multicalibration(
                vec![Distinguisher::Constant(1.0)],
                stream,
                10,
                16,
                3,
                Some(&mut w),
            )
            .unwrap();
        }
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 17); // header + 16 rounds
        assert!(text.starts_with("t,x_hash,y,yhat,bucket,minimax_value"));
    }
}
