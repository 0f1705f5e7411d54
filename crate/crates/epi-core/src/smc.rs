//! The particle filter: jitter, blind rate propagation, bridged incidence
//! propagation, weighting, resampling, sufficient-statistic update and
//! conjugate rejuvenation, plus filtering summaries and one-step-ahead
//! forecasting.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use rand::Rng;
use rand_distr::{Beta as BetaDist, Distribution, Gamma as GammaDist, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::bridge::{draw_rate_path, propagate_window, RatePath, WindowPropagation};
use crate::conjugate::{
    init_stats, sample_conjugate, update_stats, ConjugatePriors, GammaHyper, SufficientStats,
    WindowStats,
};
use crate::error::{EpiError, Result};
use crate::model::{
    logit, sigmoid, CompartmentState, ContactMode, CountVec, IncidenceIncrement, ModelSpec,
    RateState, StaticParams,
};
use crate::obs::{obs_logpmf, sample_obs, ObsFamily, ObsModelSpec, Observation};
use crate::resample::{ess, normalize_log_weights, resample, Resampler};
use crate::rng::{stream, StreamRole};
use crate::summary::{box_summary, summarize, BoxSummary, ScalarSummary};

/// Particle count below which Negative-Binomial jitter is known to be prone
/// to degeneracy on real-data-scale problems.
pub const NEGBIN_DEGENERACY_HINT: usize = 4_000_000;

/// A scalar prior (or fixed value) for one static parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalarPrior {
    /// Shape-rate Gamma.
    Gamma { shape: f64, rate: f64 },
    Beta { a: f64, b: f64 },
    Normal { mean: f64, sd: f64 },
    /// `logit(x) ~ N(mean, sd^2)`, used for reporting probabilities.
    LogitNormal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
    /// `1/sqrt(x) ~ U(lo, hi)`, used for over-dispersion.
    InvSqrtUniform { lo: f64, hi: f64 },
    Fixed { value: f64 },
}

impl ScalarPrior {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ScalarPrior::Gamma { shape, rate } => {
                GammaDist::new(shape, 1.0 / rate).unwrap().sample(rng)
            }
            ScalarPrior::Beta { a, b } => BetaDist::new(a, b).unwrap().sample(rng),
            ScalarPrior::Normal { mean, sd } => Normal::new(mean, sd).unwrap().sample(rng),
            ScalarPrior::LogitNormal { mean, sd } => {
                sigmoid(Normal::new(mean, sd).unwrap().sample(rng))
            }
            ScalarPrior::Uniform { lo, hi } => Uniform::new(lo, hi).sample(rng),
            ScalarPrior::InvSqrtUniform { lo, hi } => {
                let u = Uniform::new(lo, hi).sample(rng);
                1.0 / (u * u)
            }
            ScalarPrior::Fixed { value } => value,
        }
    }

    pub fn gamma_hyper(&self) -> Option<GammaHyper> {
        match *self {
            ScalarPrior::Gamma { shape, rate } => Some(GammaHyper { shape, rate }),
            _ => None,
        }
    }

    pub fn beta_hyper(&self) -> Option<(f64, f64)> {
        match *self {
            ScalarPrior::Beta { a, b } => Some((a, b)),
            _ => None,
        }
    }
}

/// Priors for every parameter that can be active; which fields must be set
/// is determined by the model configuration and validated at load.
#[derive(Debug, Clone, Copy, Default)]
pub struct ParamPriors {
    pub gamma: Option<ScalarPrior>,
    pub kappa: Option<ScalarPrior>,
    /// Constant contact rate (conjugate when a Gamma prior is given).
    pub beta: Option<ScalarPrior>,
    /// Initial log contact rate for the time-varying case.
    pub log_beta0: Option<ScalarPrior>,
    pub lambda_beta: Option<ScalarPrior>,
    pub lambda_rho: Option<ScalarPrior>,
    /// Static reporting rate (conjugate when Beta prior and Binomial family).
    pub rho: Option<ScalarPrior>,
    /// Initial reporting rate level for the dynamic case.
    pub rho0: Option<ScalarPrior>,
    pub nu: Option<ScalarPrior>,
}

/// Initial compartment state: fixed, or an independent categorical prior per
/// compartment.
#[derive(Debug, Clone)]
pub enum InitStateDist {
    Fixed(CountVec),
    Independent(Vec<Vec<(u64, f64)>>),
}

impl InitStateDist {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CountVec {
        match self {
            InitStateDist::Fixed(c) => *c,
            InitStateDist::Independent(comps) => {
                let mut out = CountVec::default();
                for (c, table) in comps.iter().enumerate() {
                    let total: f64 = table.iter().map(|(_, p)| p).sum();
                    let mut u: f64 = rng.gen::<f64>() * total;
                    let mut chosen = table.last().unwrap().0;
                    for &(v, p) in table {
                        if u < p {
                            chosen = v;
                            break;
                        }
                        u -= p;
                    }
                    out[c] = chosen;
                }
                out
            }
        }
    }
}

/// Full model description consumed by the filter.
#[derive(Debug, Clone)]
pub struct InferenceModel {
    pub spec: ModelSpec,
    pub obs: ObsModelSpec,
    pub init: InitStateDist,
    pub priors: ParamPriors,
}

impl InferenceModel {
    /// Conjugate blocks active for this configuration.
    fn conjugate_priors(&self) -> ConjugatePriors {
        ConjugatePriors {
            beta: if self.spec.contact_mode == ContactMode::Constant {
                self.priors.beta.and_then(|p| p.gamma_hyper())
            } else {
                None
            },
            kappa: self.priors.kappa.and_then(|p| p.gamma_hyper()),
            gamma: self
                .priors
                .gamma
                .and_then(|p| p.gamma_hyper())
                .or(Some(GammaHyper { shape: 1.0, rate: 1.0 })),
            lambda_beta: self.priors.lambda_beta.and_then(|p| p.gamma_hyper()),
            lambda_rho: self.priors.lambda_rho.and_then(|p| p.gamma_hyper()),
            rho: if self.obs.family == ObsFamily::Binomial {
                self.priors.rho.and_then(|p| p.beta_hyper())
            } else {
                None
            },
        }
    }

    /// Whether gamma has a conjugate block (a Gamma prior, not fixed).
    fn gamma_conjugate(&self) -> bool {
        self.priors.gamma.and_then(|p| p.gamma_hyper()).is_some()
    }

    /// Parameters handled by Liu-West jitter, on their transformed scales.
    fn jitter_set(&self) -> Vec<JitterParam> {
        let mut set = Vec::new();
        if self.obs.family == ObsFamily::NegativeBinomial {
            if !self.obs.dynamic_rho
                && !matches!(self.priors.rho, Some(ScalarPrior::Fixed { .. }) | None)
            {
                set.push(JitterParam::LogitRho);
            }
            if !matches!(self.priors.nu, Some(ScalarPrior::Fixed { .. }) | None) {
                set.push(JitterParam::LogNu);
            }
        }
        set
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum JitterParam {
    LogitRho,
    LogNu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    Sequential,
    /// Data-parallel over particles; falls back to sequential when the
    /// `parallel` feature is disabled.
    Parallel,
}

/// Algorithm settings.
#[derive(Debug, Clone, Copy)]
pub struct FilterSettings {
    pub n_particles: usize,
    pub dtau: f64,
    /// Liu-West discount; `a = (3 delta - 1) / (2 delta)`, `s^2 = 1 - a^2`.
    pub delta: f64,
    pub seed: u64,
    pub resampler: Resampler,
    pub bridge: bool,
    /// Disable to freeze static parameters (bootstrap likelihood estimation).
    pub rejuvenate: bool,
    pub exec: ExecMode,
}

impl Default for FilterSettings {
    fn default() -> Self {
        Self {
            n_particles: 1000,
            dtau: 0.1,
            delta: 0.99,
            seed: 1,
            resampler: Resampler::Systematic,
            bridge: true,
            rejuvenate: true,
            exec: ExecMode::Parallel,
        }
    }
}

/// One SMC sample.
#[derive(Debug, Clone)]
pub struct Particle {
    pub state: CompartmentState,
    pub rates: RateState,
    pub params: StaticParams,
    pub stats: SufficientStats,
    pub window_incidence: IncidenceIncrement,
}

/// Per-observation filtering record.
#[derive(Debug, Clone)]
pub struct WindowRecord {
    pub time: f64,
    pub ess: f64,
    pub log_lik_increment: f64,
    /// Named scalar summaries (parameters, prevalence) at this time.
    pub summaries: Vec<(String, ScalarSummary)>,
}

/// Filter output: per-window records, the final particle cloud and the log
/// marginal-likelihood estimate.
#[derive(Debug, Clone)]
pub struct FilterRun {
    pub records: Vec<WindowRecord>,
    pub particles: Vec<Particle>,
    pub log_marginal: f64,
    pub warnings: Vec<String>,
}

fn map_particles<T, F>(n: usize, exec: ExecMode, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        ExecMode::Sequential => (0..n).map(f).collect(),
        ExecMode::Parallel => {
            #[cfg(feature = "parallel")]
            {
                (0..n).into_par_iter().map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                (0..n).map(f).collect()
            }
        }
    }
}

fn init_particle<R: Rng + ?Sized>(model: &InferenceModel, t0: f64, rng: &mut R) -> Particle {
    let p = &model.priors;
    let params = StaticParams {
        beta: if model.spec.contact_mode == ContactMode::Constant {
            Some(p.beta.expect("constant contact requires a beta prior").sample(rng))
        } else {
            None
        },
        kappa: p.kappa.map(|pr| pr.sample(rng)),
        gamma: p.gamma.expect("gamma prior required").sample(rng),
        lambda_beta: p.lambda_beta.map(|pr| pr.sample(rng)),
        lambda_rho: p.lambda_rho.map(|pr| pr.sample(rng)),
        rho: if model.obs.dynamic_rho { None } else { p.rho.map(|pr| pr.sample(rng)) },
        nu: p.nu.map(|pr| pr.sample(rng)),
    };
    let log_beta = match model.spec.contact_mode {
        ContactMode::BrownianLog => {
            p.log_beta0.expect("time-varying contact requires log_beta0").sample(rng)
        }
        ContactMode::Constant => 0.0,
    };
    let logit_rho = if model.obs.dynamic_rho {
        let rho0 = p.rho0.expect("dynamic reporting requires rho0 prior").sample(rng);
        Some(logit(rho0.clamp(1e-12, 1.0 - 1e-12)))
    } else {
        None
    };
    Particle {
        state: CompartmentState::new(model.init.sample(rng), t0),
        rates: RateState { log_beta, logit_rho },
        params,
        stats: init_stats(&model.conjugate_priors()),
        window_incidence: IncidenceIncrement::zero(),
    }
}

/// Liu-West shrinkage kernel applied in place on transformed scales.
/// Population mean is preserved in expectation; variance is preserved when
/// `s^2 = 1 - a^2`.
fn liu_west_jitter(
    particles: &mut [Particle],
    set: &[JitterParam],
    delta: f64,
    seed: u64,
    window: u64,
) {
    if set.is_empty() || particles.len() < 2 {
        return;
    }
    let a = (3.0 * delta - 1.0) / (2.0 * delta);
    let s2 = 1.0 - a * a;
    let n = particles.len();
    let d = set.len();

    let value = |p: &Particle, j: JitterParam| -> f64 {
        match j {
            JitterParam::LogitRho => logit(p.params.rho.unwrap().clamp(1e-12, 1.0 - 1e-12)),
            JitterParam::LogNu => p.params.nu.unwrap().ln(),
        }
    };

    // Cloud mean and covariance, computed sequentially so output is
    // independent of the worker count.
    let mut mean = vec![0.0; d];
    for p in particles.iter() {
        for (j, &param) in set.iter().enumerate() {
            mean[j] += value(p, param);
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut cov = nalgebra::DMatrix::<f64>::zeros(d, d);
    for p in particles.iter() {
        for j in 0..d {
            let xj = value(p, set[j]) - mean[j];
            for k in 0..d {
                let xk = value(p, set[k]) - mean[k];
                cov[(j, k)] += xj * xk / n as f64;
            }
        }
    }
    for j in 0..d {
        cov[(j, j)] += 1e-10;
    }
    let chol = (cov * s2).cholesky().expect("regularized covariance is PD");
    let l = chol.l();

    for (k, p) in particles.iter_mut().enumerate() {
        let mut rng = stream(seed, window, k as u64, StreamRole::Jitter);
        let z: Vec<f64> = (0..d).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        for (j, &param) in set.iter().enumerate() {
            let shrunk = a * value(p, param) + (1.0 - a) * mean[j];
            let noise: f64 = (0..d).map(|c| l[(j, c)] * z[c]).sum();
            let new = shrunk + noise;
            match param {
                JitterParam::LogitRho => p.params.rho = Some(sigmoid(new)),
                JitterParam::LogNu => p.params.nu = Some(new.exp()),
            }
        }
    }
}

struct Propagated {
    particle: Particle,
    window: WindowStats,
    log_w: f64,
}

fn propagate_particle(
    model: &InferenceModel,
    settings: &FilterSettings,
    particle: &Particle,
    y: u64,
    m: usize,
    window: u64,
    index: u64,
) -> Result<Propagated> {
    let mut rng = stream(settings.seed, window, index, StreamRole::Propagate);
    let path = draw_rate_path(
        particle.rates,
        &particle.params,
        &model.spec,
        settings.dtau,
        m,
        &mut rng,
    );
    let prop: WindowPropagation = propagate_window(
        &model.spec,
        &model.obs,
        &particle.params,
        particle.state,
        &path,
        y,
        settings.dtau,
        settings.bridge,
        &mut rng,
    )?;
    let obs_reaction = model.spec.obs_reaction();
    let p_dn = prop.window_incidence.events[obs_reaction];
    let rho = if model.obs.dynamic_rho {
        sigmoid(path.logit_rho.as_ref().unwrap()[m])
    } else {
        particle.params.rho.expect("static rho required")
    };
    let log_obs = obs_logpmf(y, p_dn, rho, particle.params.nu, model.obs.family)?;
    let log_w = prop.log_p + log_obs - prop.log_q;

    let beta_sum_sq = if model.spec.contact_mode == ContactMode::BrownianLog {
        RatePath::sum_sq_over_dtau(&path.log_beta, settings.dtau)
    } else {
        0.0
    };
    let rho_sum_sq = path
        .logit_rho
        .as_ref()
        .map(|v| RatePath::sum_sq_over_dtau(v, settings.dtau));

    let window_stats = WindowStats {
        events: prop.window_incidence.events,
        exposures: prop.exposures,
        m: m as u64,
        beta_sum_sq,
        rho_sum_sq,
        y,
        p_dn,
    };
    let mut out = particle.clone();
    out.state = prop.end_state;
    out.rates = path.end();
    out.window_incidence = prop.window_incidence;
    Ok(Propagated { particle: out, window: window_stats, log_w })
}

fn record_summaries(model: &InferenceModel, particles: &[Particle]) -> Vec<(String, ScalarSummary)> {
    let mut out = Vec::new();
    let collect = |f: &dyn Fn(&Particle) -> f64| -> Vec<f64> { particles.iter().map(f).collect() };

    match model.spec.contact_mode {
        ContactMode::Constant => {
            out.push(("beta".into(), summarize(&collect(&|p| p.params.beta.unwrap()))));
        }
        ContactMode::BrownianLog => {
            out.push(("beta_t".into(), summarize(&collect(&|p| p.rates.log_beta.exp()))));
            if model.priors.lambda_beta.is_some() {
                out.push((
                    "lambda_beta".into(),
                    summarize(&collect(&|p| p.params.lambda_beta.unwrap())),
                ));
            }
        }
    }
    if model.priors.kappa.is_some() {
        out.push(("kappa".into(), summarize(&collect(&|p| p.params.kappa.unwrap()))));
    }
    out.push(("gamma".into(), summarize(&collect(&|p| p.params.gamma))));
    if model.obs.dynamic_rho {
        out.push(("rho_t".into(), summarize(&collect(&|p| p.rates.rho().unwrap()))));
        if model.priors.lambda_rho.is_some() {
            out.push((
                "lambda_rho".into(),
                summarize(&collect(&|p| p.params.lambda_rho.unwrap())),
            ));
        }
    } else if model.priors.rho.is_some() {
        out.push(("rho".into(), summarize(&collect(&|p| p.params.rho.unwrap()))));
    }
    if model.priors.nu.is_some() {
        out.push(("nu".into(), summarize(&collect(&|p| p.params.nu.unwrap()))));
    }
    for (c, name) in model.spec.compartment_names().iter().enumerate() {
        out.push((
            (*name).to_string(),
            summarize(&collect(&|p| p.state.counts[c] as f64)),
        ));
    }
    out.push((
        "window_incidence".into(),
        summarize(&collect(&|p| {
            p.window_incidence.events[model.spec.obs_reaction()] as f64
        })),
    ));
    out
}

/// Number of sub-intervals per observation window; errors unless `dtau`
/// divides the observation spacing exactly.
pub fn substeps_per_window(spacing: f64, dtau: f64) -> Result<usize> {
    let m = spacing / dtau;
    let rounded = m.round();
    if rounded < 1.0 || (m - rounded).abs() > 1e-9 {
        return Err(EpiError::Config {
            key: "algorithm.dtau".into(),
            message: format!("dtau = {dtau} does not divide the observation spacing {spacing}"),
        });
    }
    Ok(rounded as usize)
}

/// Run the particle filter over the full observation series.
pub fn run_filter(
    model: &InferenceModel,
    settings: &FilterSettings,
    data: &[Observation],
) -> Result<FilterRun> {
    if settings.n_particles < 2 {
        return Err(EpiError::Config {
            key: "algorithm.particles".into(),
            message: "at least 2 particles required".into(),
        });
    }
    if data.is_empty() {
        return Err(EpiError::Config {
            key: "io.data".into(),
            message: "empty observation series".into(),
        });
    }
    let t0 = if data.len() > 1 { data[0].time - (data[1].time - data[0].time) } else { data[0].time - 1.0 };
    let spacing = if data.len() > 1 { data[1].time - data[0].time } else { data[0].time - t0 };
    let m = substeps_per_window(spacing, settings.dtau)?;

    let mut warnings = Vec::new();
    if model.obs.family == ObsFamily::NegativeBinomial
        && !model.jitter_set().is_empty()
        && settings.n_particles < NEGBIN_DEGENERACY_HINT
    {
        warnings.push(format!(
            "negative-binomial jitter with N = {} particles may degenerate; \
             real-data-scale runs have needed N >= {NEGBIN_DEGENERACY_HINT}",
            settings.n_particles
        ));
    }

    let n = settings.n_particles;
    let mut particles: Vec<Particle> = map_particles(n, settings.exec, |k| {
        let mut rng = stream(settings.seed, 0, k as u64, StreamRole::Init);
        init_particle(model, t0, &mut rng)
    });

    let jitter_set = model.jitter_set();
    let gamma_conjugate = model.gamma_conjugate();
    let mut records = Vec::with_capacity(data.len());
    let mut log_marginal = 0.0;

    for (i, obs) in data.iter().enumerate() {
        let window = (i + 1) as u64;

        // 1a. Artificial evolution of non-conjugate observation parameters.
        if settings.rejuvenate {
            liu_west_jitter(&mut particles, &jitter_set, settings.delta, settings.seed, window);
        }

        // 1b/1c. Blind rate propagation and (bridged) incidence propagation,
        // in parallel over particles; then 2. weight.
        let propagated: Vec<Result<Propagated>> = map_particles(n, settings.exec, |k| {
            propagate_particle(model, settings, &particles[k], obs.count, m, window, k as u64)
        });
        let mut props = Vec::with_capacity(n);
        for p in propagated {
            props.push(p?);
        }

        let mut log_weights: Vec<f64> = props.iter().map(|p| p.log_w).collect();
        let log_inc = normalize_log_weights(&mut log_weights).map_err(|_| {
            EpiError::WeightCollapse { window: i, time: obs.time }
        })?;
        log_marginal += log_inc;
        let window_ess = ess(&log_weights);

        // 2. Resample with replacement.
        let mut rng = stream(settings.seed, window, 0, StreamRole::Resample);
        let indices = resample(settings.resampler, &log_weights, &mut rng)?;

        // 3/4. Update sufficient statistics and redraw conjugate parameters.
        particles = map_particles(n, settings.exec, |k| {
            let src = &props[indices[k]];
            let mut p = src.particle.clone();
            if settings.rejuvenate {
                p.stats = update_stats(&p.stats, &model.spec, &src.window);
                let mut rng = stream(settings.seed, window, k as u64, StreamRole::Rejuvenate);
                let draw = sample_conjugate(&p.stats, &mut rng);
                if gamma_conjugate {
                    p.params.gamma = draw.gamma;
                }
                if let Some(v) = draw.beta {
                    p.params.beta = Some(v);
                }
                if let Some(v) = draw.kappa {
                    p.params.kappa = Some(v);
                }
                if let Some(v) = draw.lambda_beta {
                    p.params.lambda_beta = Some(v);
                }
                if let Some(v) = draw.lambda_rho {
                    p.params.lambda_rho = Some(v);
                }
                if let Some(v) = draw.rho {
                    p.params.rho = Some(v);
                }
            }
            p
        });

        records.push(WindowRecord {
            time: obs.time,
            ess: window_ess,
            log_lik_increment: log_inc,
            summaries: record_summaries(model, &particles),
        });
    }

    Ok(FilterRun { records, particles, log_marginal, warnings })
}

/// One-step-ahead predictive samples: per particle, blind propagation over
/// one window followed by a draw from the observation model.
pub fn forecast_one_step(
    particles: &[Particle],
    model: &InferenceModel,
    settings: &FilterSettings,
    m: usize,
    window: u64,
) -> Result<(Vec<u64>, BoxSummary)> {
    let samples: Vec<Result<u64>> = map_particles(particles.len(), settings.exec, |k| {
        let p = &particles[k];
        let mut rng = stream(settings.seed, window, k as u64, StreamRole::Forecast);
        let path =
            draw_rate_path(p.rates, &p.params, &model.spec, settings.dtau, m, &mut rng);
        let prop = propagate_window(
            &model.spec,
            &model.obs,
            &p.params,
            p.state,
            &path,
            0,
            settings.dtau,
            false,
            &mut rng,
        )?;
        let p_dn = prop.window_incidence.events[model.spec.obs_reaction()];
        let rho = if model.obs.dynamic_rho {
            sigmoid(path.logit_rho.as_ref().unwrap()[m])
        } else {
            p.params.rho.expect("static rho required")
        };
        sample_obs(p_dn, rho, p.params.nu, model.obs.family, &mut rng)
    });
    let mut values = Vec::with_capacity(samples.len());
    for s in samples {
        values.push(s? as f64);
    }
    let summary = box_summary(&values);
    Ok((values.iter().map(|&v| v as u64).collect(), summary))
}

/// Mean and 95% interval of an arbitrary particle functional.
pub fn filtering_summary<F: Fn(&Particle) -> f64>(particles: &[Particle], f: F) -> ScalarSummary {
    let values: Vec<f64> = particles.iter().map(f).collect();
    summarize(&values)
}
