//! Small numeric and seeding helpers shared across the crate.

/// Stable log(sum(exp(v))) over a slice.
///
/// Returns `-inf` for an empty slice or a slice of `-inf` entries.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = values.iter().map(|v| (v - m).exp()).sum();
    m + s.ln()
}

/// splitmix64 finalizer; used to derive independent sub-seeds from one run seed.
pub fn mix_seed(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the seed for a named sub-stream (sampling, candidate draws, engines, ...).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    mix_seed(base ^ mix_seed(stream))
}

/// FNV-1a over the raw bits of a feature vector; used for trace rows only.
pub fn feature_hash(x: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in x {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// ln(n!) by direct summation; exact enough for the Poisson counts seen here.
pub fn ln_factorial(n: u64) -> f64 {
    let mut acc = 0.0;
    for k in 2..=n {
        acc += (k as f64).ln();
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_matches_direct() {
        let v = [0.1, -2.0, 3.5];
        let direct: f64 = v.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&v) - direct).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_handles_underflow() {
        let v = [-1000.0, -1000.0];
        let out = log_sum_exp(&v);
        assert!((out - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn derive_seed_varies_by_stream() {
        assert_ne!(derive_seed(7, 0), derive_seed(7, 1));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }

    #[test]
    fn ln_factorial_small_values() {
        assert_eq!(ln_factorial(0), 0.0);
        assert_eq!(ln_factorial(1), 0.0);
        assert!((ln_factorial(5) - 120f64.ln()).abs() < 1e-12);
    }
}
