//! Brute-force pseudo-shattering checks for tabulated function sets.
//!
//! A point set is pseudo-shattered when some witness threshold vector makes
//! all `2^m` above/below sign patterns realizable by the set. Witnesses can
//! always be moved to midpoints between consecutive distinct values without
//! changing any sign, so the search over thresholds is finite and exact.
//! Subsets of size up to three use sweep-based deciders; larger subsets fall
//! back to a pruned depth-first search over per-point midpoint candidates.
//!
//! The reported dimension is the largest shattered subset size: a lower bound
//! on the pseudodimension of whatever class the functions were sampled from.

use thiserror::Error;

use crate::cover::FunctionTable;
use crate::par;

/// Hard cap on candidate points; the subset enumeration is exponential.
pub const MAX_SHATTER_POINTS: usize = 12;

#[derive(Debug, Error)]
pub enum ShatterError {
    #[error("at most {max} candidate points supported, got {got}")]
    TooManyPoints { max: usize, got: usize },
}

/// Midpoints between consecutive distinct values.
fn midpoints(col: &[f64]) -> Vec<f64> {
    let mut vals: Vec<f64> = col.to_vec();
    vals.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    vals.dedup();
    vals.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

fn decide_m1(col: &[f64]) -> bool {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in col {
        min = min.min(v);
        max = max.max(v);
    }
    min < max
}

/// Running (count, min, max) triples over a scan.
#[derive(Clone, Copy)]
struct Extent {
    count: usize,
    min: f64,
    max: f64,
}

impl Extent {
    const EMPTY: Extent = Extent {
        count: 0,
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
    };

    fn add(mut self, v: f64) -> Self {
        self.count += 1;
        self.min = self.min.min(v);
        self.max = self.max.max(v);
        self
    }
}

/// Common witness exists for groups iff every group spans the threshold:
/// `max_g(min_g) < min_g(max_g)` leaves an open interval for it.
fn common_split(groups: &[Extent]) -> bool {
    if groups.iter().any(|g| g.count == 0) {
        return false;
    }
    let lo = groups.iter().map(|g| g.min).fold(f64::NEG_INFINITY, f64::max);
    let hi = groups.iter().map(|g| g.max).fold(f64::INFINITY, f64::min);
    lo < hi
}

fn decide_m2(c1: &[f64], c2: &[f64]) -> bool {
    let n = c1.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| c1[a].partial_cmp(&c1[b]).expect("finite values"));
    // prefix[s] covers order[0..s]; suffix[s] covers order[s..].
    let mut prefix = vec![Extent::EMPTY; n + 1];
    let mut suffix = vec![Extent::EMPTY; n + 1];
    for s in 0..n {
        prefix[s + 1] = prefix[s].add(c2[order[s]]);
        suffix[n - 1 - s] = suffix[n - s].add(c2[order[n - 1 - s]]);
    }
    for s in 1..n {
        if c1[order[s - 1]] >= c1[order[s]] {
            continue; // not a distinct-value boundary
        }
        if common_split(&[prefix[s], suffix[s]]) {
            return true;
        }
    }
    false
}

fn decide_m3(c1: &[f64], c2: &[f64], c3: &[f64]) -> bool {
    let n = c1.len();
    let mut order1: Vec<usize> = (0..n).collect();
    order1.sort_by(|&a, &b| c1[a].partial_cmp(&c1[b]).expect("finite values"));
    let mut order3: Vec<usize> = (0..n).collect();
    order3.sort_by(|&a, &b| c3[a].partial_cmp(&c3[b]).expect("finite values"));

    let mut is_upper = vec![false; n];
    for t in 1..n {
        if c3[order3[t - 1]] >= c3[order3[t]] {
            continue;
        }
        // Upper set: c3 above the midpoint after position t.
        for (i, &f) in order3.iter().enumerate() {
            is_upper[f] = i >= t;
        }
        // Prefix/suffix extents of c2 along the c1 order, split by set.
        let mut pre_u = vec![Extent::EMPTY; n + 1];
        let mut pre_l = vec![Extent::EMPTY; n + 1];
        let mut suf_u = vec![Extent::EMPTY; n + 1];
        let mut suf_l = vec![Extent::EMPTY; n + 1];
        for s in 0..n {
            let f = order1[s];
            pre_u[s + 1] = if is_upper[f] {
                pre_u[s].add(c2[f])
            } else {
                pre_u[s]
            };
            pre_l[s + 1] = if is_upper[f] {
                pre_l[s]
            } else {
                pre_l[s].add(c2[f])
            };
            let b = order1[n - 1 - s];
            suf_u[n - 1 - s] = if is_upper[b] {
                suf_u[n - s].add(c2[b])
            } else {
                suf_u[n - s]
            };
            suf_l[n - 1 - s] = if is_upper[b] {
                suf_l[n - s]
            } else {
                suf_l[n - s].add(c2[b])
            };
        }
        for s in 1..n {
            if c1[order1[s - 1]] >= c1[order1[s]] {
                continue;
            }
            if common_split(&[pre_u[s], pre_l[s], suf_u[s], suf_l[s]]) {
                return true;
            }
        }
    }
    false
}

/// Pruned DFS for subsets of four or more points: pick a midpoint threshold
/// per point in turn; every current group must split nonempty both ways.
fn decide_general(cols: &[Vec<f64>]) -> bool {
    fn recurse(cols: &[Vec<f64>], level: usize, groups: &[Vec<u32>]) -> bool {
        if level == cols.len() {
            return true;
        }
        for r in midpoints(&cols[level]) {
            let mut next: Vec<Vec<u32>> = Vec::with_capacity(groups.len() * 2);
            let mut ok = true;
            'outer: for g in groups {
                let (mut above, mut below) = (Vec::new(), Vec::new());
                for &f in g {
                    if cols[level][f as usize] > r {
                        above.push(f);
                    } else {
                        below.push(f);
                    }
                }
                if above.is_empty() || below.is_empty() {
                    ok = false;
                    break 'outer;
                }
                next.push(above);
                next.push(below);
            }
            if ok && recurse(cols, level + 1, &next) {
                return true;
            }
        }
        false
    }
    let all: Vec<u32> = (0..cols[0].len() as u32).collect();
    recurse(cols, 0, &[all])
}

fn decide(cols: &[Vec<f64>]) -> bool {
    match cols.len() {
        0 => true,
        1 => decide_m1(&cols[0]),
        2 => decide_m2(&cols[0], &cols[1]),
        3 => decide_m3(&cols[0], &cols[1], &cols[2]),
        _ => decide_general(cols),
    }
}

fn extract_cols(table: &FunctionTable, points: &[usize]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|&p| (0..table.n_funcs()).map(|f| table.row(f)[p]).collect())
        .collect()
}

/// Is the given point subset pseudo-shattered by the tabulated functions?
pub fn pseudo_shatters(table: &FunctionTable, points: &[usize]) -> bool {
    if (1usize << points.len().min(63)) > table.n_funcs() {
        return false; // fewer functions than sign patterns
    }
    decide(&extract_cols(table, points))
}

fn combinations(n: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..m).collect();
    if m == 0 || m > n {
        return out;
    }
    loop {
        out.push(idx.clone());
        // advance
        let mut i = m;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - m {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..m {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Largest `m` such that some `m`-subset of the table's points is
/// pseudo-shattered. Columns of the table are the candidate points.
pub fn empirical_shatter_dim(table: &FunctionTable) -> Result<usize, ShatterError> {
    let n = table.n_points();
    if n > MAX_SHATTER_POINTS {
        return Err(ShatterError::TooManyPoints {
            max: MAX_SHATTER_POINTS,
            got: n,
        });
    }
    for m in (1..=n).rev() {
        if (1usize << m) > table.n_funcs() {
            continue;
        }
        let subsets = combinations(n, m);
        let hits = par::map_indexed(subsets.len(), |i| {
            decide(&extract_cols(table, &subsets[i]))
        });
        if hits.into_iter().any(|h| h) {
            return Ok(m);
        }
    }
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: Vec<Vec<f64>>) -> FunctionTable {
        FunctionTable::from_rows(rows).unwrap()
    }

    #[test]
    fn single_constant_function_has_dim_zero() {
        // One sign pattern per point: nothing is shattered.
        let t = table(vec![vec![0.4, 0.4, 0.4]]);
        assert_eq!(empirical_shatter_dim(&t).unwrap(), 0);
        let dup = table(vec![vec![0.4, 0.4], vec![0.4, 0.4]]);
        assert_eq!(empirical_shatter_dim(&dup).unwrap(), 0);
    }

    #[test]
    fn distinct_constants_shatter_exactly_one_point() {
        // Constants take the same value everywhere, so they can realize both
        // signs at one point but never opposite patterns at two.
        let t = table(vec![vec![0.2, 0.2], vec![0.8, 0.8]]);
        assert_eq!(empirical_shatter_dim(&t).unwrap(), 1);
    }

    #[test]
    fn two_points_shattered_by_four_patterns() {
        let t = table(vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
        ]);
        assert_eq!(empirical_shatter_dim(&t).unwrap(), 2);
    }

    #[test]
    fn affine_functions_cannot_shatter_three_collinear_evaluations() {
        // f(x) = a + b x on points x = 0, 1, 2; pdim of affine 1-d is 2.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                let a: f64 = rng.random_range(-1.0..1.0);
                let b: f64 = rng.random_range(-1.0..1.0);
                vec![a, a + b, a + 2.0 * b]
            })
            .collect();
        let t = table(rows);
        let d = empirical_shatter_dim(&t).unwrap();
        assert!(d <= 2, "affine class certified {d}");
        assert!(!pseudo_shatters(&t, &[0, 1, 2]));
    }

    #[test]
    fn general_decider_agrees_with_m3_sweep() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for trial in 0..30 {
            let n = 12;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
                .collect();
            let cols: Vec<Vec<f64>> = (0..3)
                .map(|p| rows.iter().map(|r| r[p]).collect())
                .collect();
            let fast = decide_m3(&cols[0], &cols[1], &cols[2]);
            let slow = decide_general(&cols);
            assert_eq!(fast, slow, "trial {trial}");
        }
    }

    #[test]
    fn monotone_in_the_function_set() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..4).map(|_| rng.random::<f64>()).collect())
            .collect();
        let small = table(rows[..10].to_vec());
        let big = table(rows);
        let a = empirical_shatter_dim(&small).unwrap();
        let b = empirical_shatter_dim(&big).unwrap();
        assert!(b >= a);
    }

    #[test]
    fn too_many_points_rejected() {
        let t = table(vec![vec![0.0; 13]]);
        assert!(empirical_shatter_dim(&t).is_err());
    }
}
