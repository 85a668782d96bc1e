//! Empirical ε-covers of distinguisher classes under the sample-averaged L1
//! distance, plus held-out cover verification.
//!
//! The scalable construction is a farthest-point greedy pass. The exact
//! labeling-enumeration construction is retained at tiny scale as a test
//! oracle; both outputs satisfy the same cover invariant.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::buckets::BucketGrid;
use crate::distinguisher::{CandidateFamily, Distinguisher, DistinguisherMode};
use crate::mixture::Mixture;
use crate::par;

#[derive(Debug, Error)]
pub enum CoverError {
    #[error("tabulated distinguisher length {got} does not match sample count {expected}")]
    TabulatedLength { expected: usize, got: usize },
    #[error("function table needs at least one function and one point")]
    Empty,
    #[error("exact cover limited to {max} points, got {got}")]
    TooManyPoints { max: usize, got: usize },
    #[error("exact cover needs 1/epsilon to be an integer at most {max}, got epsilon {eps}")]
    BadEpsilon { max: u32, eps: f64 },
    #[error("function values must lie in [0, 1]; found {0}")]
    ValueRange(f64),
    #[error("preselected index {0} out of range")]
    BadPreselected(usize),
}

/// Evaluations of a function set on a fixed sample; row-major
/// `n_funcs x n_points`.
#[derive(Debug, Clone)]
pub struct FunctionTable {
    values: Vec<f64>,
    n_funcs: usize,
    n_points: usize,
}

impl FunctionTable {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, CoverError> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(CoverError::Empty);
        }
        let n_points = rows[0].len();
        let n_funcs = rows.len();
        let mut values = Vec::with_capacity(n_funcs * n_points);
        for r in rows {
            if r.len() != n_points {
                return Err(CoverError::TabulatedLength {
                    expected: n_points,
                    got: r.len(),
                });
            }
            values.extend(r);
        }
        Ok(Self {
            values,
            n_funcs,
            n_points,
        })
    }

    /// Evaluate distinguishers on a sample; rows are computed independently
    /// and in parallel when the feature is enabled.
    pub fn evaluate(dists: &[Distinguisher], samples: &[Vec<f64>]) -> Result<Self, CoverError> {
        Self::evaluate_impl(dists, samples, false)
    }

    /// Sequential twin of [`FunctionTable::evaluate`].
    pub fn evaluate_seq(dists: &[Distinguisher], samples: &[Vec<f64>]) -> Result<Self, CoverError> {
        Self::evaluate_impl(dists, samples, true)
    }

    fn evaluate_impl(
        dists: &[Distinguisher],
        samples: &[Vec<f64>],
        sequential: bool,
    ) -> Result<Self, CoverError> {
        if dists.is_empty() || samples.is_empty() {
            return Err(CoverError::Empty);
        }
        let n_points = samples.len();
        let row = |i: usize| -> Result<Vec<f64>, CoverError> {
            let d = &dists[i];
            if d.is_tabulated() {
                let vals: Vec<f64> = (0..n_points)
                    .map(|t| d.eval_at(t))
                    .collect::<Option<_>>()
                    .ok_or(CoverError::TabulatedLength {
                        expected: n_points,
                        got: 0,
                    })?;
                return Ok(vals);
            }
            let mut scratch = Vec::new();
            Ok(samples
                .iter()
                .map(|x| d.eval_with(x, &mut scratch))
                .collect())
        };
        let rows = if sequential {
            par::map_indexed_seq(dists.len(), row)
        } else {
            par::map_indexed(dists.len(), row)
        };
        let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
        Self::from_rows(rows)
    }

    pub fn n_funcs(&self) -> usize {
        self.n_funcs
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_points..(i + 1) * self.n_points]
    }

    /// Sample-averaged L1 distance between two rows.
    pub fn l1(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.row(i), self.row(j));
        let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
        sum / self.n_points as f64
    }
}

/// A selected subset of function indices forming an empirical ε-cover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cover {
    pub selected: Vec<usize>,
    pub epsilon: f64,
}

impl Cover {
    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }
}

/// Farthest-point greedy cover: repeatedly select the function farthest from
/// the current centers while that distance exceeds ε. With `preselected`
/// centers the result is still a valid cover; selection is deterministic
/// (ties break to the smallest index).
pub fn greedy_cover(
    table: &FunctionTable,
    epsilon: f64,
    preselected: &[usize],
) -> Result<Cover, CoverError> {
    greedy_cover_impl(table, epsilon, preselected, false)
}

/// Sequential twin of [`greedy_cover`]; identical output.
pub fn greedy_cover_seq(
    table: &FunctionTable,
    epsilon: f64,
    preselected: &[usize],
) -> Result<Cover, CoverError> {
    greedy_cover_impl(table, epsilon, preselected, true)
}

fn greedy_cover_impl(
    table: &FunctionTable,
    epsilon: f64,
    preselected: &[usize],
    sequential: bool,
) -> Result<Cover, CoverError> {
    let n = table.n_funcs();
    for &i in preselected {
        if i >= n {
            return Err(CoverError::BadPreselected(i));
        }
    }
    let mut selected: Vec<usize> = preselected.to_vec();
    let mut dist = vec![f64::INFINITY; n];
    let update = |dist: &mut Vec<f64>, center: usize, sequential: bool| {
        let new = {
            let dist = &*dist;
            let f = |i: usize| dist[i].min(table.l1(i, center));
            if sequential {
                par::map_indexed_seq(n, f)
            } else {
                par::map_indexed(n, f)
            }
        };
        *dist = new;
    };
    for &c in preselected {
        update(&mut dist, c, sequential);
    }
    loop {
        let (mut far, mut far_d) = (0, f64::NEG_INFINITY);
        for (i, &d) in dist.iter().enumerate() {
            if d > far_d {
                far = i;
                far_d = d;
            }
        }
        if far_d <= epsilon {
            break;
        }
        selected.push(far);
        update(&mut dist, far, sequential);
    }
    Ok(Cover {
        selected,
        epsilon,
    })
}

pub const EXACT_COVER_MAX_POINTS: usize = 8;
pub const EXACT_COVER_MAX_INV_EPS: u32 = 4;

/// Exact tiny-scale cover: bucket every function's values on the ε-grid and
/// keep the first function realizing each labeling. Only labelings realized
/// by some function contribute, which is the labeling enumeration collapsed
/// to its nonempty cells.
pub fn exact_cover(table: &FunctionTable, epsilon: f64) -> Result<Cover, CoverError> {
    if table.n_points() > EXACT_COVER_MAX_POINTS {
        return Err(CoverError::TooManyPoints {
            max: EXACT_COVER_MAX_POINTS,
            got: table.n_points(),
        });
    }
    let inv = 1.0 / epsilon;
    let lambda = inv.round();
    if epsilon <= 0.0
        || !epsilon.is_finite()
        || (inv - lambda).abs() > 1e-9
        || lambda < 1.0
        || lambda > EXACT_COVER_MAX_INV_EPS as f64
    {
        return Err(CoverError::BadEpsilon {
            max: EXACT_COVER_MAX_INV_EPS,
            eps: epsilon,
        });
    }
    let grid = BucketGrid::new(lambda as u32);
    let mut seen: HashMap<Vec<u8>, usize> = HashMap::new();
    let mut selected = Vec::new();
    for i in 0..table.n_funcs() {
        let mut sig = Vec::with_capacity(table.n_points());
        for &v in table.row(i) {
            if !(0.0..=1.0).contains(&v) {
                return Err(CoverError::ValueRange(v));
            }
            sig.push(grid.bucket_of(v).expect("validated range") as u8);
        }
        if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(sig) {
            e.insert(i);
            selected.push(i);
        }
    }
    Ok(Cover {
        selected,
        epsilon,
    })
}

/// Does every function sit within `epsilon` of some selected center on this
/// table? Returns the worst gap too.
pub fn cover_invariant_gap(table: &FunctionTable, cover: &Cover) -> (f64, usize) {
    let per_func = par::map_indexed(table.n_funcs(), |i| {
        cover
            .selected
            .iter()
            .map(|&c| table.l1(i, c))
            .fold(f64::INFINITY, f64::min)
    });
    let mut worst = (0.0, 0usize);
    for (i, d) in per_func.into_iter().enumerate() {
        if d > worst.0 {
            worst = (d, i);
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub pass: bool,
    pub radius: f64,
    pub worst_gap: f64,
    pub worst_func: usize,
}

/// Held-out verification: on a fresh sample, every input function must be
/// within `4ε` of some cover center.
pub fn verify_cover(cover: &Cover, holdout: &FunctionTable, epsilon: f64) -> VerifyReport {
    verify_cover_impl(cover, holdout, epsilon, false)
}

/// Sequential twin of [`verify_cover`].
pub fn verify_cover_seq(cover: &Cover, holdout: &FunctionTable, epsilon: f64) -> VerifyReport {
    verify_cover_impl(cover, holdout, epsilon, true)
}

fn verify_cover_impl(
    cover: &Cover,
    holdout: &FunctionTable,
    epsilon: f64,
    sequential: bool,
) -> VerifyReport {
    let f = |i: usize| {
        cover
            .selected
            .iter()
            .map(|&c| holdout.l1(i, c))
            .fold(f64::INFINITY, f64::min)
    };
    let per_func = if sequential {
        par::map_indexed_seq(holdout.n_funcs(), f)
    } else {
        par::map_indexed(holdout.n_funcs(), f)
    };
    let mut worst_gap = 0.0;
    let mut worst_func = 0;
    for (i, d) in per_func.into_iter().enumerate() {
        if d > worst_gap {
            worst_gap = d;
            worst_func = i;
        }
    }
    let radius = 4.0 * epsilon;
    VerifyReport {
        pass: worst_gap <= radius,
        radius,
        worst_gap,
        worst_func,
    }
}

/// Serializable cover description: the candidate family (regenerable from its
/// seed), the distinguisher mode, an optional force-included truth model, the
/// radius, and the selected indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverDocument {
    pub family: CandidateFamily,
    pub mode: DistinguisherMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<Mixture>,
    pub epsilon: f64,
    pub selected: Vec<usize>,
}

impl CoverDocument {
    /// Rebuild the distinguisher class this cover was selected from.
    pub fn rebuild_class(&self) -> Result<Vec<Distinguisher>, crate::exp_family::ModelError> {
        crate::distinguisher::build_distinguisher_class(
            &self.family,
            self.mode,
            self.truth.as_ref(),
        )
    }

    pub fn cover(&self) -> Cover {
        Cover {
            selected: self.selected.clone(),
            epsilon: self.epsilon,
        }
    }
}

/// Convenience: selected distinguishers of a cover, cloned out of the class.
pub fn select_distinguishers(class: &[Distinguisher], cover: &Cover) -> Vec<Distinguisher> {
    cover.selected.iter().map(|&i| class[i].clone()).collect()
}
