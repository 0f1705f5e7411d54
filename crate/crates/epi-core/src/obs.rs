//! Binomial and Negative-Binomial observation models linking latent
//! cumulative incidence to counts, plus the Gaussian moment approximations
//! used by the bridge.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{EpiError, Result};

/// Floor applied to the Gaussian observation variance so the bridge's scalar
/// inverse stays defined when rho hits {0, 1} or all counts are zero.
pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObsFamily {
    Binomial,
    NegativeBinomial,
}

/// Observation family plus whether the reporting rate is static or follows
/// a logit-scale SDE. The Binomial family requires a static rate.
#[derive(Debug, Clone, Copy)]
pub struct ObsModelSpec {
    pub family: ObsFamily,
    pub dynamic_rho: bool,
}

impl ObsModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.family == ObsFamily::Binomial && self.dynamic_rho {
            return Err(EpiError::Config {
                key: "observation.family".into(),
                message: "a dynamic reporting rate requires the negative-binomial family".into(),
            });
        }
        Ok(())
    }
}

/// A single observed count at a grid time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub time: f64,
    pub count: u64,
}

fn check_rho_nu(rho: f64, nu: Option<f64>) -> Result<()> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(EpiError::Domain(format!("rho = {rho} outside [0, 1]")));
    }
    if let Some(nu) = nu {
        if nu <= 0.0 {
            return Err(EpiError::Domain(format!("nu = {nu} must be positive")));
        }
    }
    Ok(())
}

fn ln_binomial_coeff(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Log-mass of the observation `y` given the observed window incidence
/// component `p_dn = P' dN`. Returns `-inf` for impossible observations.
///
/// Negative-Binomial uses mean `mu = rho * p_dn` and variance `mu + mu^2/nu`,
/// i.e. the (r, p) parameterisation `r = nu`, `p = nu / (nu + mu)`.
pub fn obs_logpmf(
    y: u64,
    p_dn: u64,
    rho: f64,
    nu: Option<f64>,
    family: ObsFamily,
) -> Result<f64> {
    check_rho_nu(rho, nu)?;
    match family {
        ObsFamily::Binomial => {
            if y > p_dn {
                return Ok(f64::NEG_INFINITY);
            }
            if rho == 0.0 {
                return Ok(if y == 0 { 0.0 } else { f64::NEG_INFINITY });
            }
            if rho == 1.0 {
                return Ok(if y == p_dn { 0.0 } else { f64::NEG_INFINITY });
            }
            Ok(ln_binomial_coeff(p_dn, y)
                + y as f64 * rho.ln()
                + (p_dn - y) as f64 * (1.0 - rho).ln())
        }
        ObsFamily::NegativeBinomial => {
            let nu = nu.ok_or_else(|| {
                EpiError::Domain("negative-binomial observation requires nu".into())
            })?;
            let mu = rho * p_dn as f64;
            if mu == 0.0 {
                return Ok(if y == 0 { 0.0 } else { f64::NEG_INFINITY });
            }
            let r = nu;
            let p = nu / (nu + mu);
            Ok(ln_gamma(y as f64 + r) - ln_gamma(r) - ln_gamma(y as f64 + 1.0)
                + r * p.ln()
                + y as f64 * (1.0 - p).ln())
        }
    }
}

/// Exact sampler from the observation model.
pub fn sample_obs<R: Rng + ?Sized>(
    p_dn: u64,
    rho: f64,
    nu: Option<f64>,
    family: ObsFamily,
    rng: &mut R,
) -> Result<u64> {
    check_rho_nu(rho, nu)?;
    match family {
        ObsFamily::Binomial => Ok(Binomial::new(p_dn, rho).unwrap().sample(rng)),
        ObsFamily::NegativeBinomial => {
            let nu = nu.ok_or_else(|| {
                EpiError::Domain("negative-binomial observation requires nu".into())
            })?;
            let mu = rho * p_dn as f64;
            if mu == 0.0 {
                return Ok(0);
            }
            // Gamma-Poisson mixture: lambda ~ Gamma(nu, scale mu/nu), y ~ Po(lambda).
            let lambda = Gamma::new(nu, mu / nu).unwrap().sample(rng);
            if lambda <= 0.0 {
                return Ok(0);
            }
            Ok(Poisson::new(lambda).unwrap().sample(rng) as u64)
        }
    }
}

/// Gaussian approximation of the observation given incidence accumulated so
/// far plus the predicted remaining events over the rest of the window.
///
/// `incidence_so_far` and `predicted_remaining` are the observed component
/// `P' (.)` of each. Returns `(mu_hat, sigma2)` with `sigma2` floored.
pub fn obs_gaussian_moments(
    incidence_so_far: f64,
    predicted_remaining: f64,
    rho: f64,
    nu: Option<f64>,
    family: ObsFamily,
) -> (f64, f64) {
    let total = incidence_so_far + predicted_remaining;
    let mu_hat = rho * total;
    let sigma2 = match family {
        ObsFamily::Binomial => rho * (1.0 - rho) * total,
        ObsFamily::NegativeBinomial => {
            let nu = nu.expect("negative-binomial requires nu");
            mu_hat + mu_hat * mu_hat / nu
        }
    };
    (mu_hat, sigma2.max(VARIANCE_FLOOR))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamRole};
    use approx::assert_relative_eq;

    #[test]
    fn binomial_logpmf_hand_values() {
        let lp = obs_logpmf(10, 10, 0.9, None, ObsFamily::Binomial).unwrap();
        assert_relative_eq!(lp, 10.0 * 0.9f64.ln(), max_relative = 1e-12);
        assert_eq!(
            obs_logpmf(11, 10, 0.9, None, ObsFamily::Binomial).unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn negbin_degenerate_mean() {
        assert_eq!(obs_logpmf(0, 0, 0.5, Some(5.0), ObsFamily::NegativeBinomial).unwrap(), 0.0);
        assert_eq!(
            obs_logpmf(1, 0, 0.5, Some(5.0), ObsFamily::NegativeBinomial).unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn negbin_matches_direct_series() {
        // mu = 10, nu = 5 => r = 5, p = 1/3; mass at y = 10 by direct evaluation.
        let lp = obs_logpmf(10, 20, 0.5, Some(5.0), ObsFamily::NegativeBinomial).unwrap();
        // C(y + r - 1, y) p^r (1-p)^y with r = 5, p = 1/3, y = 10.
        let r = 5.0f64;
        let p = 1.0f64 / 3.0;
        let direct = ln_gamma(10.0 + r) - ln_gamma(r) - ln_gamma(11.0)
            + r * p.ln()
            + 10.0 * (1.0 - p).ln();
        assert_relative_eq!(lp, direct, max_relative = 1e-12);
    }

    #[test]
    fn domain_errors() {
        assert!(obs_logpmf(1, 2, 1.5, None, ObsFamily::Binomial).is_err());
        assert!(obs_logpmf(1, 2, 0.5, Some(-1.0), ObsFamily::NegativeBinomial).is_err());
    }

    #[test]
    fn pmf_sums_to_one() {
        // Binomial: exact finite support. NegBin: sum until tail < 1e-12.
        let total: f64 = (0..=20)
            .map(|y| obs_logpmf(y, 20, 0.35, None, ObsFamily::Binomial).unwrap().exp())
            .sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-10);

        let mut total = 0.0;
        for y in 0..100_000 {
            let p = obs_logpmf(y, 20, 0.5, Some(5.0), ObsFamily::NegativeBinomial)
                .unwrap()
                .exp();
            total += p;
            if total > 1.0 - 1e-13 {
                break;
            }
        }
        assert_relative_eq!(total, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn deterministic_reporting_sampler() {
        let mut rng = stream(20, 0, 0, StreamRole::Scratch);
        for _ in 0..50 {
            assert_eq!(sample_obs(37, 1.0, None, ObsFamily::Binomial, &mut rng).unwrap(), 37);
        }
    }

    #[test]
    fn binomial_sampler_mean() {
        let mut rng = stream(21, 0, 0, StreamRole::Scratch);
        let n = 100_000;
        let total: u64 = (0..n)
            .map(|_| sample_obs(100, 0.9, None, ObsFamily::Binomial, &mut rng).unwrap())
            .sum();
        let mean = total as f64 / n as f64;
        let se = (100.0f64 * 0.9 * 0.1 / n as f64).sqrt();
        assert!((mean - 90.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn negbin_poisson_limit() {
        // nu = 1e6: variance within 5% of the mean.
        let mut rng = stream(22, 0, 0, StreamRole::Scratch);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let y =
                sample_obs(40, 0.5, Some(1e6), ObsFamily::NegativeBinomial, &mut rng).unwrap()
                    as f64;
            sum += y;
            sumsq += y * y;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!((var / mean - 1.0).abs() < 0.05, "mean {mean}, var {var}");
    }

    #[test]
    fn sampler_matches_pmf_chi_square() {
        let mut rng = stream(23, 0, 0, StreamRole::Scratch);
        let n = 100_000usize;
        let mut counts = [0usize; 16];
        for _ in 0..n {
            let y = sample_obs(10, 0.5, Some(4.0), ObsFamily::NegativeBinomial, &mut rng)
                .unwrap() as usize;
            counts[y.min(15)] += 1;
        }
        let mut chi2 = 0.0;
        let mut tail = 1.0;
        for (y, c) in counts.iter().enumerate().take(15) {
            let p = obs_logpmf(y as u64, 10, 0.5, Some(4.0), ObsFamily::NegativeBinomial)
                .unwrap()
                .exp();
            tail -= p;
            let e = p * n as f64;
            chi2 += (*c as f64 - e).powi(2) / e;
        }
        let e = tail * n as f64;
        chi2 += (counts[15] as f64 - e).powi(2) / e;
        // 16 cells, 15 dof; inv-cdf at p = 0.999 ~ 37.7.
        assert!(chi2 < 37.7, "chi2 = {chi2}");
    }

    #[test]
    fn gaussian_moments_hand_values() {
        let (mu, s2) = obs_gaussian_moments(10.0, 0.0, 0.9, None, ObsFamily::Binomial);
        assert_relative_eq!(mu, 9.0);
        assert_relative_eq!(s2, 0.9);

        let (mu, s2) = obs_gaussian_moments(10.0, 0.0, 1.0, None, ObsFamily::Binomial);
        assert_relative_eq!(mu, 10.0);
        assert_relative_eq!(s2, VARIANCE_FLOOR);

        // mu_hat = 5, nu = 5 -> sigma2 = 5 + 25/5 = 10.
        let (mu, s2) = obs_gaussian_moments(10.0, 0.0, 0.5, Some(5.0), ObsFamily::NegativeBinomial);
        assert_relative_eq!(mu, 5.0);
        assert_relative_eq!(s2, 10.0);
    }

    #[test]
    fn negbin_moment_identity_on_grid() {
        // mean and variance of the (r, p) form match (mu, mu + mu^2/nu).
        for &mu in &[0.5, 2.0, 17.0, 130.0] {
            for &nu in &[0.3, 1.0, 5.0, 50.0] {
                let r = nu;
                let p = nu / (nu + mu);
                let mean = r * (1.0 - p) / p;
                let var = r * (1.0 - p) / (p * p);
                assert_relative_eq!(mean, mu, max_relative = 1e-10);
                assert_relative_eq!(var, mu + mu * mu / nu, max_relative = 1e-10);
            }
        }
    }
}
