//! Empirical distributions of per-user results.

use serde::{Deserialize, Serialize};

/// Quantile of sorted data, linearly interpolated between order statistics
/// at positions `q (n − 1)`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Sorted sample with plotting positions `i / n`, `i = 1..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cdf {
    pub values: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    /// 5th percentile ("95%-likely" value).
    pub p05: f64,
}

pub fn aggregate_cdf(values: &[f64]) -> Cdf {
    assert!(!values.is_empty(), "empirical CDF of an empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let probabilities = (1..=n).map(|i| i as f64 / n as f64).collect();
    Cdf {
        mean: sorted.iter().sum::<f64>() / n as f64,
        median: quantile(&sorted, 0.5),
        p05: quantile(&sorted, 0.05),
        values: sorted,
        probabilities,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_three() {
        assert_eq!(aggregate_cdf(&[3.0, 1.0, 2.0]).median, 2.0);
    }

    #[test]
    fn constant_sample_is_a_single_step() {
        let c = aggregate_cdf(&[0.7; 5]);
        assert!(c.values.iter().all(|&v| v == 0.7));
        assert_eq!(c.probabilities.last(), Some(&1.0));
        assert_eq!((c.median, c.p05), (0.7, 0.7));
    }

    #[test]
    fn interpolates_between_order_statistics() {
        let c = aggregate_cdf(&[0.0, 10.0]);
        assert_eq!(c.median, 5.0);
        assert!((c.p05 - 0.5).abs() < 1e-15);
        assert_eq!(c.probabilities, vec![0.5, 1.0]);
    }
}
