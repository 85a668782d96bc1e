//! Exponentially-weighted expert aggregation over cumulative costs.
//!
//! Weights are derived on demand as normalized `exp(-eta * cumcost)`; the
//! engine keeps its own multiplicative representation of the same update, and
//! is cross-checked against this one in tests.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HedgeError {
    #[error("cost vector length {got} does not match expert count {expected}")]
    CostLength { expected: usize, got: usize },
    #[error("cost {0} outside [0, 1]")]
    CostRange(f64),
}

#[derive(Debug, Clone)]
pub struct HedgeState {
    cum_costs: Vec<f64>,
    eta: f64,
    rounds: u64,
}

impl HedgeState {
    pub fn new(n_experts: usize, eta: f64) -> Self {
        assert!(n_experts >= 1, "need at least one expert");
        assert!(eta > 0.0 && eta.is_finite(), "eta must be positive");
        Self {
            cum_costs: vec![0.0; n_experts],
            eta,
            rounds: 0,
        }
    }

    /// The standard horizon tuning `eta = sqrt(8 ln N / T)`.
    pub fn eta_for_horizon(n_experts: usize, horizon: usize) -> f64 {
        let n = n_experts.max(2) as f64;
        let t = horizon.max(1) as f64;
        (8.0 * n.ln() / t).sqrt()
    }

    pub fn n_experts(&self) -> usize {
        self.cum_costs.len()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn cum_costs(&self) -> &[f64] {
        &self.cum_costs
    }

    /// Current expert distribution, normalized in a shifted exponential form
    /// so large cumulative costs cannot underflow everything at once.
    pub fn distribution_into(&self, out: &mut [f64]) {
        assert_eq!(out.len(), self.cum_costs.len());
        let min = self
            .cum_costs
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let mut z = 0.0;
        for (o, c) in out.iter_mut().zip(&self.cum_costs) {
            *o = (-self.eta * (c - min)).exp();
            z += *o;
        }
        for o in out.iter_mut() {
            *o /= z;
        }
    }

    pub fn distribution(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_experts()];
        self.distribution_into(&mut out);
        out
    }

    /// Accumulate one round of per-expert costs in `[0, 1]`.
    pub fn update(&mut self, costs: &[f64]) -> Result<(), HedgeError> {
        if costs.len() != self.cum_costs.len() {
            return Err(HedgeError::CostLength {
                expected: self.cum_costs.len(),
                got: costs.len(),
            });
        }
        for &c in costs {
            if !(-1e-12..=1.0 + 1e-12).contains(&c) {
                return Err(HedgeError::CostRange(c));
            }
        }
        for (acc, &c) in self.cum_costs.iter_mut().zip(costs) {
            *acc += c;
        }
        self.rounds += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn distribution_sums_to_one() {
        let mut h = HedgeState::new(8, 0.3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let costs: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
            h.update(&costs).unwrap();
            let q = h.distribution();
            assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shift_invariance() {
        // Adding a constant to every expert's cost in a round leaves the
        // distribution unchanged.
        let mut a = HedgeState::new(4, 0.5);
        let mut b = HedgeState::new(4, 0.5);
        a.update(&[0.1, 0.4, 0.0, 0.9]).unwrap();
        b.update(&[0.2, 0.5, 0.1, 1.0]).unwrap();
        let (qa, qb) = (a.distribution(), b.distribution());
        for (x, y) in qa.iter().zip(&qb) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn concentrates_on_the_best_expert() {
        let mut h = HedgeState::new(3, 0.8);
        for _ in 0..200 {
            h.update(&[1.0, 0.0, 1.0]).unwrap();
        }
        let q = h.distribution();
        assert!(q[1] > 0.999);
    }

    #[test]
    fn rejects_bad_costs() {
        let mut h = HedgeState::new(2, 0.5);
        assert!(h.update(&[0.5]).is_err());
        assert!(h.update(&[0.5, 1.5]).is_err());
    }
}
