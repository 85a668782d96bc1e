//! The prediction bucket grid and the per-round transcript record.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("prediction {0} outside [0, 1]")]
    PredictionRange(f64),
    #[error("label {0} is not binary")]
    LabelRange(u8),
    #[error("transcript is empty")]
    EmptyTranscript,
    #[error("feature dimension {got} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("distinguisher {index} produced {value} outside [0, 1]")]
    DistinguisherRange { index: usize, value: f64 },
}

/// The grid `{0, 1/λ, ..., 1}`. A prediction belongs to the grid value within
/// `1/(2λ)`; exact midpoints go to the lower bucket so every prediction lands
/// in exactly one bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketGrid {
    lambda: u32,
}

impl BucketGrid {
    pub fn new(lambda: u32) -> Self {
        assert!(lambda >= 1, "lambda must be at least 1");
        Self { lambda }
    }

    pub fn lambda(&self) -> u32 {
        self.lambda
    }

    /// Number of grid values, `λ + 1`.
    pub fn n_buckets(&self) -> usize {
        self.lambda as usize + 1
    }

    /// Grid value of bucket `i`.
    pub fn value(&self, i: usize) -> f64 {
        debug_assert!(i <= self.lambda as usize);
        i as f64 / self.lambda as f64
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_buckets()).map(|i| self.value(i))
    }

    /// Bucket index of a prediction. The initial guess from arithmetic is
    /// corrected against the neighboring grid values so the nearest-value +
    /// lower-tie rule holds exactly on the stored f64s.
    pub fn bucket_of(&self, yhat: f64) -> Result<usize, MetricsError> {
        if !(0.0..=1.0).contains(&yhat) {
            return Err(MetricsError::PredictionRange(yhat));
        }
        let lam = self.lambda as f64;
        let guess = (yhat * lam - 0.5).ceil();
        let guess = if guess < 0.0 {
            0
        } else {
            (guess as usize).min(self.lambda as usize)
        };
        let lo = guess.saturating_sub(1);
        let hi = (guess + 1).min(self.lambda as usize);
        let mut best = lo;
        let mut best_dist = (yhat - self.value(lo)).abs();
        for i in (lo + 1)..=hi {
            let d = (yhat - self.value(i)).abs();
            if d < best_dist {
                best = i;
                best_dist = d;
            }
        }
        Ok(best)
    }
}

/// One prediction round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub x: Vec<f64>,
    pub y: u8,
    pub yhat: f64,
}

/// The full record of a run: `(x_t, y_t, ŷ_t)` per round, plus the boundary
/// between the structure-learning phase and the prediction phase when the
/// producing pipeline had one.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub rounds: Vec<Round>,
    pub phase_split: Option<usize>,
}

impl Transcript {
    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn push(&mut self, x: Vec<f64>, y: u8, yhat: f64) {
        self.rounds.push(Round { x, y, yhat });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bucket_rule_examples() {
        let g = BucketGrid::new(10);
        // |0.14 - 0.1| = 0.04 <= 0.05
        assert_eq!(g.bucket_of(0.14).unwrap(), 1);
        // exact midpoint goes to the lower bucket
        assert_eq!(g.bucket_of(0.15).unwrap(), 1);
        assert_eq!(g.bucket_of(1.0).unwrap(), 10);
        assert_eq!(g.bucket_of(0.0).unwrap(), 0);
        assert_eq!(g.bucket_of(0.05).unwrap(), 0);
        assert_eq!(g.bucket_of(0.051).unwrap(), 1);
    }

    #[test]
    fn bucket_rejects_out_of_range() {
        let g = BucketGrid::new(10);
        assert!(g.bucket_of(-0.01).is_err());
        assert!(g.bucket_of(1.01).is_err());
        assert!(g.bucket_of(f64::NAN).is_err());
    }

    #[test]
    fn every_prediction_lands_in_exactly_one_bucket() {
        // Scan a dense grid and check the membership rule directly.
        for lambda in [1u32, 3, 7, 10] {
            let g = BucketGrid::new(lambda);
            for i in 0..=10_000 {
                let y = i as f64 / 10_000.0;
                let b = g.bucket_of(y).unwrap();
                let dist = (y - g.value(b)).abs();
                assert!(
                    dist <= 0.5 / lambda as f64 + 1e-12,
                    "lambda={lambda} y={y} bucket={b}"
                );
                // No lower bucket may be strictly closer, and equal distance
                // must resolve to the lower index.
                if b > 0 {
                    assert!((y - g.value(b - 1)).abs() > dist - 1e-15);
                }
            }
        }
    }
}
