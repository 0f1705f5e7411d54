//! Particle marginal Metropolis-Hastings over the static parameters, with
//! the marginal likelihood estimated by a bootstrap particle filter.
//!
//! The random-walk proposal operates on transformed scales (log for positive
//! parameters, logit for probabilities) with the Jacobian folded into the
//! target, so the chain targets the prior-times-likelihood posterior on the
//! natural scale.

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

use crate::error::{EpiError, Result};
use crate::model::{logit, sigmoid};
use crate::obs::Observation;
use crate::rng::{mix, stream, StreamRole};
use crate::smc::{run_filter, FilterSettings, InferenceModel, ScalarPrior};

/// Bijection from the natural parameter scale to the unconstrained
/// random-walk scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    Identity,
    Log,
    Logit,
}

impl Transform {
    pub fn forward(&self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Log => x.ln(),
            Transform::Logit => logit(x),
        }
    }

    pub fn backward(&self, theta: f64) -> f64 {
        match self {
            Transform::Identity => theta,
            Transform::Log => theta.exp(),
            Transform::Logit => sigmoid(theta),
        }
    }

    /// `log |dx/dtheta|` at the natural-scale value `x`.
    pub fn log_jacobian(&self, x: f64) -> f64 {
        match self {
            Transform::Identity => 0.0,
            Transform::Log => x.ln(),
            Transform::Logit => x.ln() + (1.0 - x).ln(),
        }
    }
}

/// Natural-scale log prior density; `-inf` outside the support.
pub fn prior_log_density(prior: &ScalarPrior, x: f64) -> f64 {
    match *prior {
        ScalarPrior::Gamma { shape, rate } => {
            if x <= 0.0 {
                f64::NEG_INFINITY
            } else {
                shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
            }
        }
        ScalarPrior::Beta { a, b } => {
            if x <= 0.0 || x >= 1.0 {
                f64::NEG_INFINITY
            } else {
                ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
                    + (a - 1.0) * x.ln()
                    + (b - 1.0) * (1.0 - x).ln()
            }
        }
        ScalarPrior::Normal { mean, sd } => {
            let z = (x - mean) / sd;
            -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
        }
        ScalarPrior::LogitNormal { mean, sd } => {
            if x <= 0.0 || x >= 1.0 {
                f64::NEG_INFINITY
            } else {
                let z = (logit(x) - mean) / sd;
                -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
                    - x.ln()
                    - (1.0 - x).ln()
            }
        }
        ScalarPrior::Uniform { lo, hi } => {
            if x < lo || x > hi {
                f64::NEG_INFINITY
            } else {
                -(hi - lo).ln()
            }
        }
        ScalarPrior::InvSqrtUniform { lo, hi } => {
            // u = 1/sqrt(x) ~ U(lo, hi): p(x) = x^{-3/2} / (2 (hi - lo)) on
            // (hi^{-2}, lo^{-2}).
            let u = 1.0 / x.sqrt();
            if x <= 0.0 || u < lo || u > hi {
                f64::NEG_INFINITY
            } else {
                -1.5 * x.ln() - (2.0 * (hi - lo)).ln()
            }
        }
        ScalarPrior::Fixed { .. } => 0.0,
    }
}

/// One sampled parameter: its name (a `ParamPriors` field), prior and
/// random-walk transform.
#[derive(Debug, Clone)]
pub struct MhParam {
    pub name: String,
    pub prior: ScalarPrior,
    pub transform: Transform,
}

/// Random-walk proposal covariance on the transformed scale.
#[derive(Debug, Clone)]
pub enum Proposal {
    Diagonal(Vec<f64>),
    /// Full covariance; typically a pilot-run estimate scaled by
    /// `2.38^2 / d`.
    Full(Vec<Vec<f64>>),
}

impl Proposal {
    fn cholesky(&self, d: usize) -> Result<nalgebra::DMatrix<f64>> {
        let cov = match self {
            Proposal::Diagonal(v) => {
                if v.len() != d {
                    return Err(EpiError::Config {
                        key: "pmmh.proposal".into(),
                        message: format!("expected {d} variances, got {}", v.len()),
                    });
                }
                nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(v))
            }
            Proposal::Full(rows) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(EpiError::Config {
                        key: "pmmh.proposal".into(),
                        message: format!("expected a {d}x{d} covariance matrix"),
                    });
                }
                nalgebra::DMatrix::from_fn(d, d, |i, j| rows[i][j])
            }
        };
        cov.cholesky()
            .map(|c| c.l())
            .ok_or_else(|| EpiError::Numerical("proposal covariance is not PD".into()))
    }
}

#[derive(Debug, Clone)]
pub struct MhSettings {
    pub n_iters: usize,
    pub seed: u64,
    /// Initial natural-scale values, one per parameter.
    pub init: Vec<f64>,
    pub proposal: Proposal,
    /// Keep every `thin`-th draw (1 = keep all).
    pub thin: usize,
}

/// A Metropolis-Hastings chain over natural-scale parameter values.
#[derive(Debug, Clone)]
pub struct MhChain {
    pub names: Vec<String>,
    /// Thinned draws, one row per kept iteration.
    pub draws: Vec<Vec<f64>>,
    pub log_lik: Vec<f64>,
    pub accept_rate: f64,
}

/// Generic pseudo-marginal random-walk MH driver. `log_lik` receives the
/// natural-scale values and an iteration-specific seed; for a deterministic
/// likelihood the seed can be ignored. The current state's likelihood value
/// is retained, never recomputed, as pseudo-marginal correctness requires.
pub fn run_mh<F>(params: &[MhParam], settings: &MhSettings, mut log_lik: F) -> Result<MhChain>
where
    F: FnMut(&[f64], u64) -> Result<f64>,
{
    let d = params.len();
    if settings.init.len() != d {
        return Err(EpiError::Config {
            key: "pmmh.init".into(),
            message: format!("expected {d} initial values, got {}", settings.init.len()),
        });
    }
    if settings.thin == 0 {
        return Err(EpiError::Config {
            key: "pmmh.thin".into(),
            message: "thin must be at least 1".into(),
        });
    }
    let l = settings.proposal.cholesky(d)?;
    let mut rng = stream(settings.seed, 0, 0, StreamRole::Scratch);

    let log_target = |x: &[f64]| -> f64 {
        params
            .iter()
            .zip(x)
            .map(|(p, &v)| prior_log_density(&p.prior, v) + p.transform.log_jacobian(v))
            .sum()
    };

    let mut x = settings.init.clone();
    let mut theta: Vec<f64> =
        params.iter().zip(&x).map(|(p, &v)| p.transform.forward(v)).collect();
    let mut cur_prior = log_target(&x);
    if !cur_prior.is_finite() {
        return Err(EpiError::Config {
            key: "pmmh.init".into(),
            message: "initial values have zero prior density".into(),
        });
    }
    let mut cur_lik = log_lik(&x, mix(&[settings.seed, 0]))?;

    let mut draws = Vec::with_capacity(settings.n_iters / settings.thin + 1);
    let mut lik_trace = Vec::with_capacity(settings.n_iters / settings.thin + 1);
    let mut accepted = 0usize;

    for iter in 1..=settings.n_iters {
        let z: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let theta_prop: Vec<f64> = (0..d)
            .map(|i| theta[i] + (0..=i).map(|j| l[(i, j)] * z[j]).sum::<f64>())
            .collect();
        let x_prop: Vec<f64> =
            params.iter().zip(&theta_prop).map(|(p, &t)| p.transform.backward(t)).collect();
        let prop_prior = log_target(&x_prop);

        if prop_prior.is_finite() {
            let prop_lik = log_lik(&x_prop, mix(&[settings.seed, iter as u64]))?;
            let log_alpha = prop_prior + prop_lik - cur_prior - cur_lik;
            if rng.gen::<f64>().ln() < log_alpha {
                theta = theta_prop;
                x = x_prop;
                cur_prior = prop_prior;
                cur_lik = prop_lik;
                accepted += 1;
            }
        }
        if iter % settings.thin == 0 {
            draws.push(x.clone());
            lik_trace.push(cur_lik);
        }
    }

    Ok(MhChain {
        names: params.iter().map(|p| p.name.clone()).collect(),
        draws,
        log_lik: lik_trace,
        accept_rate: accepted as f64 / settings.n_iters as f64,
    })
}

/// Fix the named priors of `model` to the given values, leaving everything
/// else (including latent-state initial priors) untouched.
pub fn fix_params(model: &InferenceModel, names: &[String], values: &[f64]) -> Result<InferenceModel> {
    let mut out = model.clone();
    for (name, &value) in names.iter().zip(values) {
        let slot: &mut Option<ScalarPrior> = match name.as_str() {
            "beta" => &mut out.priors.beta,
            "kappa" => &mut out.priors.kappa,
            "gamma" => &mut out.priors.gamma,
            "lambda_beta" => &mut out.priors.lambda_beta,
            "lambda_rho" => &mut out.priors.lambda_rho,
            "rho" => &mut out.priors.rho,
            "rho0" => &mut out.priors.rho0,
            "nu" => &mut out.priors.nu,
            "log_beta0" => &mut out.priors.log_beta0,
            other => {
                return Err(EpiError::Config {
                    key: format!("pmmh.params.{other}"),
                    message: "unknown parameter name".into(),
                })
            }
        };
        *slot = Some(ScalarPrior::Fixed { value });
    }
    Ok(out)
}

/// Bootstrap-filter estimate of the log marginal likelihood at fixed static
/// parameters: bridge off, rejuvenation off. Weight collapse maps to `-inf`
/// (the proposal is rejected) rather than an error.
pub fn estimate_loglik(
    model: &InferenceModel,
    filter: &FilterSettings,
    data: &[Observation],
    seed: u64,
) -> Result<f64> {
    let settings = FilterSettings { bridge: false, rejuvenate: false, seed, ..*filter };
    match run_filter(model, &settings, data) {
        Ok(run) => Ok(run.log_marginal),
        Err(EpiError::WeightCollapse { .. }) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone)]
pub struct PmmhSettings {
    pub mh: MhSettings,
    /// Inner-filter settings; `bridge` and `rejuvenate` are forced off.
    pub filter: FilterSettings,
}

/// Run PMMH over the named static parameters of `model`.
pub fn run_pmmh(
    model: &InferenceModel,
    params: &[MhParam],
    settings: &PmmhSettings,
    data: &[Observation],
) -> Result<MhChain> {
    let names: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
    run_mh(params, &settings.mh, |values, seed| {
        let fixed = fix_params(model, &names, values)?;
        estimate_loglik(&fixed, &settings.filter, data, seed)
    })
}

/// Sample covariance of the transformed draws of a pilot chain, scaled by
/// `2.38^2 / d`, as a full-covariance proposal for the main run.
pub fn pilot_proposal(chain: &MhChain, params: &[MhParam]) -> Result<Proposal> {
    let d = params.len();
    let n = chain.draws.len();
    if n < d + 2 {
        return Err(EpiError::Config {
            key: "pmmh.pilot".into(),
            message: format!("pilot chain too short ({n} draws) for {d} parameters"),
        });
    }
    let theta: Vec<Vec<f64>> = chain
        .draws
        .iter()
        .map(|row| params.iter().zip(row).map(|(p, &v)| p.transform.forward(v)).collect())
        .collect();
    let mut mean = vec![0.0; d];
    for row in &theta {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n as f64;
        }
    }
    let scale = 2.38f64.powi(2) / d as f64;
    let mut cov = vec![vec![0.0; d]; d];
    for row in &theta {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (row[i] - mean[i]) * (row[j] - mean[j]) / (n - 1) as f64 * scale;
            }
        }
    }
    // Regularize in case a pilot dimension barely moved.
    for (i, row) in cov.iter_mut().enumerate() {
        row[i] += 1e-12;
        let _ = i;
    }
    Ok(Proposal::Full(cov))
}
