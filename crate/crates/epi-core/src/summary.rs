//! Summaries of equally weighted particle clouds.

/// Empirical quantile with type-7 (linear) interpolation on sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Mean and equal-tailed quantiles of one scalar quantity across particles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarSummary {
    pub mean: f64,
    pub q025: f64,
    pub q975: f64,
}

pub fn summarize(values: &[f64]) -> ScalarSummary {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ScalarSummary {
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        q025: quantile_sorted(&sorted, 0.025),
        q975: quantile_sorted(&sorted, 0.975),
    }
}

/// Five-number summary plus equal-tailed 95% bounds, for forecast box plots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxSummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub q025: f64,
    pub q975: f64,
}

pub fn box_summary(values: &[f64]) -> BoxSummary {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    BoxSummary {
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        max: *sorted.last().unwrap(),
        q025: quantile_sorted(&sorted, 0.025),
        q975: quantile_sorted(&sorted, 0.975),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn degenerate_cloud() {
        let s = summarize(&[3.0; 8]);
        assert_eq!((s.mean, s.q025, s.q975), (3.0, 3.0, 3.0));
    }

    #[test]
    fn type7_hand_values() {
        let v: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let s = summarize(&v);
        assert_relative_eq!(s.q025, 3.475, max_relative = 1e-12);
        assert_relative_eq!(s.q975, 97.525, max_relative = 1e-12);
        assert_relative_eq!(s.mean, 50.5);
    }
}
