//! The three transcript error functionals: discriminant calibration error,
//! likelihood calibration error, and multicalibration error.
//!
//! All three share one shape: a matrix of per-(row, bucket) signed residual
//! sums whose largest absolute cell is the reported error. They differ only
//! in the row weights given to each round — a one-hot discriminant indicator
//! for DCE, posterior membership probabilities for LCE, and arbitrary
//! `[0, 1]`-valued distinguishers for MCE.
//!
//! Accumulators update cell by cell in round order, so a metric maintained
//! incrementally during a run equals the batch recomputation exactly; the
//! batch MCE parallelizes over rows (never within a row) to preserve that.

use serde::{Deserialize, Serialize};

use crate::buckets::{BucketGrid, MetricsError, Transcript};
use crate::distinguisher::Distinguisher;
use crate::mixture::MixtureModel;
use crate::par;

/// Signed residual sums per (row, bucket) plus the max-abs cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Full cell matrix, `rows x (λ+1)`.
    pub cells: Vec<Vec<f64>>,
    pub max_abs: f64,
    /// `(row, bucket)` attaining `max_abs`; first such cell in scan order.
    pub argmax: (usize, usize),
}

impl ErrorReport {
    fn from_cells(cells: Vec<Vec<f64>>) -> Self {
        let mut max_abs = 0.0;
        let mut argmax = (0, 0);
        for (g, row) in cells.iter().enumerate() {
            for (v, cell) in row.iter().enumerate() {
                if cell.abs() > max_abs {
                    max_abs = cell.abs();
                    argmax = (g, v);
                }
            }
        }
        Self {
            cells,
            max_abs,
            argmax,
        }
    }

    /// Summary row `(metric, T, max_abs, argmax_g, argmax_v)`.
    pub fn csv_summary_row(&self, metric: &str, t: usize) -> String {
        format!(
            "{metric},{t},{},{},{}",
            self.max_abs, self.argmax.0, self.argmax.1
        )
    }
}

/// Incremental per-(row, bucket) signed-sum accumulator.
#[derive(Debug, Clone)]
pub struct CellAccumulator {
    cells: Vec<Vec<f64>>,
}

impl CellAccumulator {
    pub fn new(rows: usize, grid: &BucketGrid) -> Self {
        Self {
            cells: vec![vec![0.0; grid.n_buckets()]; rows],
        }
    }

    pub fn update(&mut self, row: usize, bucket: usize, delta: f64) {
        self.cells[row][bucket] += delta;
    }

    pub fn rows(&self) -> usize {
        self.cells.len()
    }

    /// Current report; callable at any round.
    pub fn report(&self) -> ErrorReport {
        ErrorReport::from_cells(self.cells.clone())
    }

    pub fn into_report(self) -> ErrorReport {
        ErrorReport::from_cells(self.cells)
    }
}

fn validate_round(y: u8, yhat: f64) -> Result<(), MetricsError> {
    if y > 1 {
        return Err(MetricsError::LabelRange(y));
    }
    if !(0.0..=1.0).contains(&yhat) {
        return Err(MetricsError::PredictionRange(yhat));
    }
    Ok(())
}

fn check_dims(model: &MixtureModel, transcript: &Transcript) -> Result<(), MetricsError> {
    for r in &transcript.rounds {
        if r.x.len() != model.dim() {
            return Err(MetricsError::DimensionMismatch {
                expected: model.dim(),
                got: r.x.len(),
            });
        }
    }
    Ok(())
}

/// Discriminant calibration error: each round is attributed wholly to the
/// component most likely to have generated it.
pub fn dce(
    model: &MixtureModel,
    transcript: &Transcript,
    grid: &BucketGrid,
) -> Result<ErrorReport, MetricsError> {
    if transcript.is_empty() {
        return Err(MetricsError::EmptyTranscript);
    }
    check_dims(model, transcript)?;
    let mut acc = CellAccumulator::new(model.k(), grid);
    for r in &transcript.rounds {
        validate_round(r.y, r.yhat)?;
        let g = model.discriminant(&r.x);
        let v = grid.bucket_of(r.yhat)?;
        acc.update(g, v, r.yhat - r.y as f64);
    }
    Ok(acc.into_report())
}

/// Likelihood calibration error: each round is attributed fractionally by
/// posterior membership probability.
pub fn lce(
    model: &MixtureModel,
    transcript: &Transcript,
    grid: &BucketGrid,
) -> Result<ErrorReport, MetricsError> {
    if transcript.is_empty() {
        return Err(MetricsError::EmptyTranscript);
    }
    check_dims(model, transcript)?;
    let mut acc = CellAccumulator::new(model.k(), grid);
    let mut post = vec![0.0; model.k()];
    for r in &transcript.rounds {
        validate_round(r.y, r.yhat)?;
        model.posterior_into(&r.x, &mut post);
        let v = grid.bucket_of(r.yhat)?;
        let residual = r.yhat - r.y as f64;
        for (g, p) in post.iter().enumerate() {
            acc.update(g, v, p * residual);
        }
    }
    Ok(acc.into_report())
}

/// Slack accepted on distinguisher outputs before declaring them malformed.
const DISTINGUISHER_RANGE_TOL: f64 = 1e-9;

/// Multicalibration error over an explicit distinguisher set; rows are
/// indexed by distinguisher. An empty transcript yields a zero report.
pub fn mce(
    distinguishers: &[Distinguisher],
    transcript: &Transcript,
    grid: &BucketGrid,
) -> Result<ErrorReport, MetricsError> {
    for r in &transcript.rounds {
        validate_round(r.y, r.yhat)?;
    }
    let buckets: Vec<usize> = transcript
        .rounds
        .iter()
        .map(|r| grid.bucket_of(r.yhat))
        .collect::<Result<_, _>>()?;
    let rows = par::map_indexed(distinguishers.len(), |i| -> Result<Vec<f64>, MetricsError> {
        let mut cells = vec![0.0; grid.n_buckets()];
        let mut scratch = Vec::new();
        for (r, &v) in transcript.rounds.iter().zip(&buckets) {
            let mut g = distinguishers[i].eval_with(&r.x, &mut scratch);
            if !((-DISTINGUISHER_RANGE_TOL..=1.0 + DISTINGUISHER_RANGE_TOL).contains(&g)) {
                return Err(MetricsError::DistinguisherRange { index: i, value: g });
            }
            g = g.clamp(0.0, 1.0);
            cells[v] += g * (r.yhat - r.y as f64);
        }
        Ok(cells)
    });
    let cells = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(ErrorReport::from_cells(cells))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exp_family::Component;
    use crate::mixture::{LabelRule, Mixture};
    use std::sync::Arc;

    fn two_iso_model() -> MixtureModel {
        let m = Mixture::new(
            vec![0.5, 0.5],
            vec![
                Component::gaussian_isotropic(vec![-1.0], 1.0).unwrap(),
                Component::gaussian_isotropic(vec![1.0], 1.0).unwrap(),
            ],
        )
        .unwrap();
        MixtureModel::new(m, LabelRule::Constant { p: 0.5 }).unwrap()
    }

    fn hand_transcript() -> Transcript {
        let mut t = Transcript::default();
        t.push(vec![-2.0], 1, 0.3);
        t.push(vec![2.0], 0, 0.35);
        t.push(vec![-1.5], 0, 0.8);
        t
    }

    #[test]
    fn dce_matches_hand_summation() {
        // Rounds: x=-2 -> comp 0, bucket 3, residual 0.3-1;
        //         x=+2 -> comp 1, bucket 3 (0.35 is a midpoint, lower rule);
        //         x=-1.5 -> comp 0, bucket 8, residual 0.8.
        let model = two_iso_model();
        let grid = BucketGrid::new(10);
        let rep = dce(&model, &hand_transcript(), &grid).unwrap();
        assert!((rep.cells[0][3] - (0.3 - 1.0)).abs() < 1e-12);
        assert!((rep.cells[1][3] - 0.35).abs() < 1e-12);
        assert!((rep.cells[0][8] - 0.8).abs() < 1e-12);
        assert!((rep.max_abs - 0.8).abs() < 1e-12);
        assert_eq!(rep.argmax, (0, 8));
    }

    #[test]
    fn perfect_predictions_have_zero_error() {
        let model = two_iso_model();
        let grid = BucketGrid::new(10);
        let mut t = Transcript::default();
        t.push(vec![-0.4], 1, 1.0);
        t.push(vec![0.9], 0, 0.0);
        assert_eq!(dce(&model, &t, &grid).unwrap().max_abs, 0.0);
        assert_eq!(lce(&model, &t, &grid).unwrap().max_abs, 0.0);
    }

    #[test]
    fn single_component_lce_equals_dce() {
        let m = Mixture::new(
            vec![1.0],
            vec![Component::gaussian_isotropic(vec![0.0], 1.0).unwrap()],
        )
        .unwrap();
        let model = MixtureModel::new(m, LabelRule::Constant { p: 0.5 }).unwrap();
        let grid = BucketGrid::new(5);
        let mut t = Transcript::default();
        t.push(vec![0.1], 1, 0.7);
        t.push(vec![-0.3], 0, 0.2);
        t.push(vec![0.9], 1, 0.65);
        let a = dce(&model, &t, &grid).unwrap();
        let b = lce(&model, &t, &grid).unwrap();
        assert_eq!(a.cells, b.cells);
    }

    #[test]
    fn lce_splits_evenly_at_the_midpoint() {
        let model = two_iso_model();
        let grid = BucketGrid::new(10);
        let mut t = Transcript::default();
        for _ in 0..8 {
            t.push(vec![0.0], 0, 0.4);
        }
        let rep = lce(&model, &t, &grid).unwrap();
        let pooled = 8.0 * 0.4;
        assert!((rep.cells[0][4] - pooled / 2.0).abs() < 1e-9);
        assert!((rep.cells[1][4] - pooled / 2.0).abs() < 1e-9);
    }

    #[test]
    fn empty_transcript_is_an_error_for_dce() {
        let model = two_iso_model();
        let grid = BucketGrid::new(10);
        let t = Transcript::default();
        assert!(matches!(
            dce(&model, &t, &grid),
            Err(MetricsError::EmptyTranscript)
        ));
        // MCE of nothing is zero, not an error.
        let rep = mce(&[Distinguisher::Constant(1.0)], &t, &grid).unwrap();
        assert_eq!(rep.max_abs, 0.0);
    }

    #[test]
    fn constant_distinguisher_row_is_plain_calibration_error() {
        let grid = BucketGrid::new(10);
        let t = hand_transcript();
        let rep = mce(&[Distinguisher::Constant(1.0)], &t, &grid).unwrap();
        // Pooled residuals per bucket: bucket 3 gets (0.3-1) + 0.35, bucket 8 gets 0.8.
        assert!((rep.cells[0][3] - ((0.3 - 1.0) + 0.35)).abs() < 1e-12);
        assert!((rep.cells[0][8] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn mce_dominates_dce_and_lce_with_true_distinguishers() {
        let model = two_iso_model();
        let grid = BucketGrid::new(10);
        let t = hand_transcript();
        let truth = Arc::new(model.mixture().clone());
        let dists = vec![
            Distinguisher::DiscriminantIndicator {
                model: truth.clone(),
                group: 0,
            },
            Distinguisher::DiscriminantIndicator {
                model: truth.clone(),
                group: 1,
            },
            Distinguisher::Posterior {
                model: truth.clone(),
                group: 0,
            },
            Distinguisher::Posterior {
                model: truth,
                group: 1,
            },
        ];
        let m = mce(&dists, &t, &grid).unwrap();
        let d = dce(&model, &t, &grid).unwrap();
        let l = lce(&model, &t, &grid).unwrap();
        assert!(m.max_abs >= d.max_abs);
        assert!(m.max_abs >= l.max_abs);
        // The indicator rows literally equal the DCE rows.
        assert_eq!(m.cells[0], d.cells[0]);
        assert_eq!(m.cells[1], d.cells[1]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let model = two_iso_model();
        let grid = BucketGrid::new(10);
        let mut t = Transcript::default();
        t.push(vec![0.0, 1.0], 0, 0.5);
        assert!(matches!(
            dce(&model, &t, &grid),
            Err(MetricsError::DimensionMismatch { expected: 1, got: 2 })
        ));
        assert!(matches!(
            lce(&model, &t, &grid),
            Err(MetricsError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn malformed_distinguisher_is_rejected() {
        let grid = BucketGrid::new(4);
        let mut t = Transcript::default();
        t.push(vec![0.0], 0, 0.5);
        let res = mce(&[Distinguisher::Constant(1.5)], &t, &grid);
        assert!(matches!(
            res,
            Err(MetricsError::DistinguisherRange { .. })
        ));
    }
}
