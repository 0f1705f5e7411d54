//! Sufficient statistics and tractable conditional posteriors for the rate
//! parameters, the SDE precisions and the Binomial reporting rate.
//!
//! Gamma distributions are in shape-rate form throughout: density
//! proportional to `x^(a-1) exp(-b x)`.

use rand::Rng;
use rand_distr::{Beta as BetaDist, Distribution, Gamma as GammaDist};

use crate::model::{ModelKind, ModelSpec, RVec};

/// Shape/rate accumulators for a Poisson-Gamma rate parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateStats {
    pub shape: f64,
    pub rate: f64,
}

impl RateStats {
    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }
}

/// Accumulators for a scaled-Brownian-motion precision: the conditional is
/// `Gamma(prior_shape + n_increments/2, prior_rate + sum_sq/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionStats {
    pub prior_shape: f64,
    pub prior_rate: f64,
    pub n_increments: u64,
    pub sum_sq: f64,
}

impl PrecisionStats {
    pub fn shape(&self) -> f64 {
        self.prior_shape + self.n_increments as f64 / 2.0
    }

    pub fn rate(&self) -> f64 {
        self.prior_rate + self.sum_sq / 2.0
    }
}

/// Accumulators for the Binomial reporting rate: the conditional is
/// `Beta(prior_a + sum_y, prior_b + sum_pdn - sum_y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportingStats {
    pub prior_a: f64,
    pub prior_b: f64,
    pub sum_y: u64,
    pub sum_pdn: u64,
}

/// The per-particle sufficient statistic vector; blocks are active per the
/// model configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SufficientStats {
    /// Constant contact rate (conjugate only when the contact rate is static).
    pub beta: Option<RateStats>,
    /// Infection rate (SEIR only).
    pub kappa: Option<RateStats>,
    /// Removal rate.
    pub gamma: RateStats,
    pub lambda_beta: Option<PrecisionStats>,
    pub lambda_rho: Option<PrecisionStats>,
    /// Binomial reporting rate.
    pub rho: Option<ReportingStats>,
}

/// Gamma prior hyper-parameters (shape, rate).
#[derive(Debug, Clone, Copy)]
pub struct GammaHyper {
    pub shape: f64,
    pub rate: f64,
}

/// Prior hyper-parameters for every active conjugate block.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConjugatePriors {
    pub beta: Option<GammaHyper>,
    pub kappa: Option<GammaHyper>,
    pub gamma: Option<GammaHyper>,
    pub lambda_beta: Option<GammaHyper>,
    pub lambda_rho: Option<GammaHyper>,
    /// Beta(a, b) prior for the Binomial reporting rate.
    pub rho: Option<(f64, f64)>,
}

/// Initialise the statistic vector at the prior hyper-parameters.
pub fn init_stats(priors: &ConjugatePriors) -> SufficientStats {
    let rate = |h: GammaHyper| RateStats { shape: h.shape, rate: h.rate };
    let prec = |h: GammaHyper| PrecisionStats {
        prior_shape: h.shape,
        prior_rate: h.rate,
        n_increments: 0,
        sum_sq: 0.0,
    };
    SufficientStats {
        beta: priors.beta.map(rate),
        kappa: priors.kappa.map(rate),
        gamma: rate(priors.gamma.expect("gamma prior is always required")),
        lambda_beta: priors.lambda_beta.map(prec),
        lambda_rho: priors.lambda_rho.map(prec),
        rho: priors.rho.map(|(a, b)| ReportingStats {
            prior_a: a,
            prior_b: b,
            sum_y: 0,
            sum_pdn: 0,
        }),
    }
}

/// Per-window inputs to the statistic update.
#[derive(Debug, Clone, Copy)]
pub struct WindowStats {
    /// Total events per reaction over the window.
    pub events: [u64; crate::model::MAX_DIM],
    /// Integrated combinatorial factors per reaction.
    pub exposures: RVec,
    /// Number of sub-intervals in the window.
    pub m: u64,
    /// `sum_j (beta_{j-1} - beta_j)^2 / dtau` over the window's log-beta path.
    pub beta_sum_sq: f64,
    /// Same for the logit reporting-rate path, when dynamic.
    pub rho_sum_sq: Option<f64>,
    /// The observation and the observed incidence component.
    pub y: u64,
    pub p_dn: u64,
}

/// Fold one window into the statistic vector. The accumulation is
/// associative over windows.
pub fn update_stats(stats: &SufficientStats, spec: &ModelSpec, w: &WindowStats) -> SufficientStats {
    let mut out = *stats;
    // Reaction -> rate-parameter block mapping.
    let (beta_r, kappa_r, gamma_r) = match spec.kind {
        ModelKind::Sir => (0usize, None, 1usize),
        ModelKind::Seir => (0usize, Some(1usize), 2usize),
    };
    if let Some(b) = out.beta.as_mut() {
        b.shape += w.events[beta_r] as f64;
        b.rate += w.exposures[beta_r];
    }
    if let (Some(k), Some(r)) = (out.kappa.as_mut(), kappa_r) {
        k.shape += w.events[r] as f64;
        k.rate += w.exposures[r];
    }
    out.gamma.shape += w.events[gamma_r] as f64;
    out.gamma.rate += w.exposures[gamma_r];

    if let Some(l) = out.lambda_beta.as_mut() {
        l.n_increments += w.m;
        l.sum_sq += w.beta_sum_sq;
    }
    if let (Some(l), Some(ss)) = (out.lambda_rho.as_mut(), w.rho_sum_sq) {
        l.n_increments += w.m;
        l.sum_sq += ss;
    }
    if let Some(r) = out.rho.as_mut() {
        r.sum_y += w.y;
        r.sum_pdn += w.p_dn;
    }
    out
}

/// Values drawn from the conditional posteriors.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConjugateDraw {
    pub beta: Option<f64>,
    pub kappa: Option<f64>,
    pub gamma: f64,
    pub lambda_beta: Option<f64>,
    pub lambda_rho: Option<f64>,
    pub rho: Option<f64>,
}

fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    GammaDist::new(shape, 1.0 / rate).expect("valid Gamma parameters").sample(rng)
}

/// Draw every active parameter from its conditional given the statistics.
pub fn sample_conjugate<R: Rng + ?Sized>(stats: &SufficientStats, rng: &mut R) -> ConjugateDraw {
    ConjugateDraw {
        beta: stats.beta.map(|b| sample_gamma(b.shape, b.rate, rng)),
        kappa: stats.kappa.map(|k| sample_gamma(k.shape, k.rate, rng)),
        gamma: sample_gamma(stats.gamma.shape, stats.gamma.rate, rng),
        lambda_beta: stats.lambda_beta.map(|l| sample_gamma(l.shape(), l.rate(), rng)),
        lambda_rho: stats.lambda_rho.map(|l| sample_gamma(l.shape(), l.rate(), rng)),
        rho: stats.rho.map(|r| {
            BetaDist::new(r.prior_a + r.sum_y as f64, r.prior_b + (r.sum_pdn - r.sum_y) as f64)
                .expect("valid Beta parameters")
                .sample(rng)
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ContactMode, ModelKind, ModelSpec, ReportingMode};
    use crate::rng::{stream, StreamRole};
    use approx::assert_relative_eq;

    fn sir_spec() -> ModelSpec {
        ModelSpec {
            kind: ModelKind::Sir,
            pop_size: 767,
            contact_mode: ContactMode::BrownianLog,
            reporting_mode: ReportingMode::Constant,
        }
    }

    fn synthetic_priors() -> ConjugatePriors {
        ConjugatePriors {
            gamma: Some(GammaHyper { shape: 11.0, rate: 20.0 }),
            lambda_beta: Some(GammaHyper { shape: 15.0, rate: 0.14 }),
            rho: Some((90.0, 15.0)),
            ..Default::default()
        }
    }

    #[test]
    fn init_matches_priors() {
        let t = init_stats(&synthetic_priors());
        assert_eq!(t.gamma, RateStats { shape: 11.0, rate: 20.0 });
        let l = t.lambda_beta.unwrap();
        assert_eq!((l.prior_shape, l.prior_rate), (15.0, 0.14));
        assert_eq!((l.n_increments, l.sum_sq), (0, 0.0));
        let r = t.rho.unwrap();
        assert_eq!((r.prior_a, r.prior_b), (90.0, 15.0));
    }

    #[test]
    fn update_hand_accumulation() {
        // One window, m = 10, constant i = 5, 3 removals, dtau = 0.1.
        let spec = sir_spec();
        let t = init_stats(&synthetic_priors());
        let w = WindowStats {
            events: [7, 3, 0],
            exposures: [0.0, 5.0 * 10.0 * 0.1, 0.0],
            m: 10,
            beta_sum_sq: 0.0,
            rho_sum_sq: None,
            y: 6,
            p_dn: 7,
        };
        let t2 = update_stats(&t, &spec, &w);
        assert_relative_eq!(t2.gamma.shape, 11.0 + 3.0);
        assert_relative_eq!(t2.gamma.rate, 20.0 + 5.0);
        assert_eq!(t2.lambda_beta.unwrap().n_increments, 10);
        assert_eq!(t2.rho.unwrap().sum_y, 6);
        assert_eq!(t2.rho.unwrap().sum_pdn, 7);
    }

    #[test]
    fn constant_beta_path_adds_m_c_squared_over_dtau() {
        // Path increments all equal c: sum_sq contribution m c^2 / dtau.
        let m = 10usize;
        let c = 0.03;
        let dtau = 0.1;
        let path: Vec<f64> = (0..=m).map(|j| -6.0 + c * j as f64).collect();
        let ss = crate::bridge::RatePath::sum_sq_over_dtau(&path, dtau);
        assert_relative_eq!(ss, m as f64 * c * c / dtau, max_relative = 1e-10);
    }

    #[test]
    fn update_is_associative_over_windows() {
        let spec = sir_spec();
        let t0 = init_stats(&synthetic_priors());
        let w1 = WindowStats {
            events: [4, 2, 0],
            exposures: [120.0, 0.9, 0.0],
            m: 10,
            beta_sum_sq: 0.004,
            rho_sum_sq: None,
            y: 3,
            p_dn: 4,
        };
        let w2 = WindowStats {
            events: [9, 5, 0],
            exposures: [260.0, 2.1, 0.0],
            m: 10,
            beta_sum_sq: 0.011,
            rho_sum_sq: None,
            y: 8,
            p_dn: 9,
        };
        let seq = update_stats(&update_stats(&t0, &spec, &w1), &spec, &w2);
        let batch = WindowStats {
            events: [13, 7, 0],
            exposures: [380.0, 3.0, 0.0],
            m: 20,
            beta_sum_sq: 0.015,
            rho_sum_sq: None,
            y: 11,
            p_dn: 13,
        };
        let one = update_stats(&t0, &spec, &batch);
        assert_relative_eq!(seq.gamma.shape, one.gamma.shape);
        assert_relative_eq!(seq.gamma.rate, one.gamma.rate, max_relative = 1e-12);
        assert_eq!(seq.lambda_beta.unwrap().n_increments, one.lambda_beta.unwrap().n_increments);
        assert_relative_eq!(seq.lambda_beta.unwrap().sum_sq, one.lambda_beta.unwrap().sum_sq);
    }

    #[test]
    fn prior_sampling_moments() {
        let t = init_stats(&synthetic_priors());
        let mut rng = stream(40, 0, 0, StreamRole::Scratch);
        let n = 1_000_000usize;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += sample_conjugate(&t, &mut rng).gamma;
        }
        let mean = sum / n as f64;
        // Gamma(11, 20): mean 0.55, sd 0.1658; SE = sd/sqrt(n).
        let se = (11.0f64).sqrt() / 20.0 / (n as f64).sqrt();
        assert!((mean - 0.55).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn lambda_conditional_with_zero_increments() {
        // i*m = 100 increments all zero: shape a + 50, rate b.
        let mut t = init_stats(&synthetic_priors());
        let l = t.lambda_beta.as_mut().unwrap();
        l.n_increments = 100;
        l.sum_sq = 0.0;
        assert_relative_eq!(t.lambda_beta.unwrap().shape(), 65.0);
        assert_relative_eq!(t.lambda_beta.unwrap().rate(), 0.14);
        // Conditional mean (15 + 50) / 0.14.
        let mean = t.lambda_beta.unwrap().shape() / t.lambda_beta.unwrap().rate();
        assert_relative_eq!(mean, 65.0 / 0.14, max_relative = 1e-12);
    }

    #[test]
    fn sampled_values_respect_sign_constraints() {
        let spec = sir_spec();
        let mut t = init_stats(&synthetic_priors());
        let w = WindowStats {
            events: [40, 22, 0],
            exposures: [900.0, 14.0, 0.0],
            m: 10,
            beta_sum_sq: 0.02,
            rho_sum_sq: None,
            y: 35,
            p_dn: 40,
        };
        t = update_stats(&t, &spec, &w);
        let mut rng = stream(41, 0, 0, StreamRole::Scratch);
        for _ in 0..10_000 {
            let d = sample_conjugate(&t, &mut rng);
            assert!(d.gamma > 0.0);
            assert!(d.lambda_beta.unwrap() > 0.0);
            let rho = d.rho.unwrap();
            assert!(rho > 0.0 && rho < 1.0);
        }
    }
}
