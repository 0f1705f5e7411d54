//! Resampling schemes and weight-vector diagnostics.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EpiError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resampler {
    Systematic,
    Multinomial,
}

/// Normalize log weights in place with max subtraction; returns the log of
/// the mean unnormalized weight (the marginal-likelihood increment) or an
/// error if every weight is zero.
pub fn normalize_log_weights(log_weights: &mut [f64]) -> Result<f64> {
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(EpiError::WeightCollapse { window: 0, time: f64::NAN });
    }
    let mut sum = 0.0;
    for w in log_weights.iter_mut() {
        *w = (*w - max).exp();
        sum += *w;
    }
    for w in log_weights.iter_mut() {
        *w /= sum;
    }
    Ok(max + (sum / log_weights.len() as f64).ln())
}

/// Effective sample size `1 / sum w^2` of a normalized weight vector.
pub fn ess(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Systematic resampling: one uniform draw, stratified positions `u + k/N`.
/// The count of index k deviates from `N w_k` by less than one.
pub fn systematic_resample<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<Vec<usize>> {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(EpiError::Domain("all-zero weight vector".into()));
    }
    let u0: f64 = rng.gen::<f64>() / n as f64;
    let mut indices = Vec::with_capacity(n);
    let mut cum = weights[0] / total;
    let mut i = 0;
    for k in 0..n {
        let u = u0 + k as f64 / n as f64;
        while u > cum && i + 1 < n {
            i += 1;
            cum += weights[i] / total;
        }
        indices.push(i);
    }
    Ok(indices)
}

/// Multinomial resampling, kept behind a flag for oracle comparisons.
pub fn multinomial_resample<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<Vec<usize>> {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(EpiError::Domain("all-zero weight vector".into()));
    }
    let mut cdf = Vec::with_capacity(n);
    let mut acc = 0.0;
    for w in weights {
        acc += w / total;
        cdf.push(acc);
    }
    let mut indices = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.gen();
        let i = cdf.partition_point(|&c| c < u).min(n - 1);
        indices.push(i);
    }
    Ok(indices)
}

pub fn resample<R: Rng + ?Sized>(
    scheme: Resampler,
    weights: &[f64],
    rng: &mut R,
) -> Result<Vec<usize>> {
    match scheme {
        Resampler::Systematic => systematic_resample(weights, rng),
        Resampler::Multinomial => multinomial_resample(weights, rng),
    }
}
