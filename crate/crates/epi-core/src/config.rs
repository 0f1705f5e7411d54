//! Experiment configuration: a strict TOML schema covering the model,
//! observation, priors, algorithm settings and IO, with conversions into the
//! engine types. Unknown keys and inconsistent blocks are hard errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{EpiError, Result};
use crate::model::{ContactMode, ModelKind, ModelSpec, ReportingMode, CountVec, MAX_DIM};
use crate::obs::{ObsFamily, ObsModelSpec, Observation};
use crate::pmmh::{MhParam, MhSettings, Proposal, Transform};
use crate::resample::Resampler;
use crate::smc::{
    substeps_per_window, ExecMode, FilterSettings, InferenceModel, InitStateDist, ParamPriors,
    ScalarPrior,
};

fn config_err(key: &str, message: impl Into<String>) -> EpiError {
    EpiError::Config { key: key.into(), message: message.into() }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ModelBlock {
    pub kind: ModelKind,
    pub pop_size: u64,
    pub contact_mode: ContactMode,
    pub reporting_mode: ReportingMode,
    /// Fixed initial compartment counts; superseded by `init-prior` if given.
    #[serde(default)]
    pub init: Option<Vec<u64>>,
    /// Per-compartment categorical prior on the initial counts.
    #[serde(default)]
    pub init_prior: Option<Vec<CategoricalSpec>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct CategoricalSpec {
    pub values: Vec<u64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ObservationBlock {
    pub family: ObsFamily,
    /// Observation spacing on the time axis (windows are equal length).
    pub spacing: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct PriorsBlock {
    #[serde(default)]
    pub beta: Option<ScalarPrior>,
    #[serde(default)]
    pub kappa: Option<ScalarPrior>,
    pub gamma: ScalarPrior,
    #[serde(default)]
    pub log_beta0: Option<ScalarPrior>,
    #[serde(default)]
    pub lambda_beta: Option<ScalarPrior>,
    #[serde(default)]
    pub lambda_rho: Option<ScalarPrior>,
    #[serde(default)]
    pub rho: Option<ScalarPrior>,
    #[serde(default)]
    pub rho0: Option<ScalarPrior>,
    #[serde(default)]
    pub nu: Option<ScalarPrior>,
}

fn default_particles() -> usize {
    1000
}
fn default_dtau() -> f64 {
    0.1
}
fn default_delta() -> f64 {
    0.99
}
fn default_seed() -> u64 {
    1
}
fn default_resampler() -> Resampler {
    Resampler::Systematic
}
fn default_bridge() -> bool {
    true
}
fn default_exec() -> ExecMode {
    ExecMode::Parallel
}
fn default_thin() -> usize {
    1
}
fn default_ode_step() -> f64 {
    0.01
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct AlgorithmBlock {
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default = "default_dtau")]
    pub dtau: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_resampler")]
    pub resampler: Resampler,
    #[serde(default = "default_bridge")]
    pub bridge: bool,
    #[serde(default = "default_exec")]
    pub exec: ExecMode,
}

impl Default for AlgorithmBlock {
    fn default() -> Self {
        Self {
            particles: default_particles(),
            dtau: default_dtau(),
            delta: default_delta(),
            seed: default_seed(),
            resampler: default_resampler(),
            bridge: default_bridge(),
            exec: default_exec(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct MhBlock {
    pub iters: usize,
    /// Names of sampled parameters (fields of the priors block).
    pub params: Vec<String>,
    /// Random-walk standard deviations on the transformed scale.
    pub proposal_sd: Vec<f64>,
    /// Initial natural-scale values; defaults to prior means.
    #[serde(default)]
    pub init: Option<Vec<f64>>,
    #[serde(default = "default_thin")]
    pub thin: usize,
    /// Pilot-run length for the adaptive proposal recipe (0 = no pilot).
    #[serde(default)]
    pub pilot_iters: usize,
    /// Inner-filter particle count (PMMH only).
    #[serde(default)]
    pub particles: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct LnaBlock {
    #[serde(default = "default_ode_step")]
    pub ode_step: f64,
}

impl Default for LnaBlock {
    fn default() -> Self {
        Self { ode_step: default_ode_step() }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct IoBlock {
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

/// True parameter values for synthetic-data generation.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SimulateBlock {
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub kappa: Option<f64>,
    pub gamma: f64,
    #[serde(default)]
    pub log_beta0: Option<f64>,
    #[serde(default)]
    pub lambda_beta: Option<f64>,
    #[serde(default)]
    pub lambda_rho: Option<f64>,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub rho0: Option<f64>,
    #[serde(default)]
    pub nu: Option<f64>,
    /// Number of observations to generate.
    pub n_obs: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    pub model: ModelBlock,
    pub observation: ObservationBlock,
    pub priors: PriorsBlock,
    #[serde(default)]
    pub algorithm: AlgorithmBlock,
    #[serde(default)]
    pub pmmh: Option<MhBlock>,
    #[serde(default)]
    pub lna_mh: Option<MhBlock>,
    #[serde(default)]
    pub lna: LnaBlock,
    #[serde(default)]
    pub io: IoBlock,
    #[serde(default)]
    pub simulate: Option<SimulateBlock>,
}

impl RunConfig {
    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            kind: self.model.kind,
            pop_size: self.model.pop_size,
            contact_mode: self.model.contact_mode,
            reporting_mode: self.model.reporting_mode,
        }
    }

    pub fn obs_spec(&self) -> ObsModelSpec {
        ObsModelSpec {
            family: self.observation.family,
            dynamic_rho: self.model.reporting_mode == ReportingMode::BrownianLogit,
        }
    }

    fn init_dist(&self) -> Result<InitStateDist> {
        let n_comp = self.model_spec().n_compartments();
        if let Some(tables) = &self.model.init_prior {
            if tables.len() != n_comp {
                return Err(config_err(
                    "model.init-prior",
                    format!("expected {n_comp} compartment tables, got {}", tables.len()),
                ));
            }
            let mut comps = Vec::with_capacity(n_comp);
            for (c, t) in tables.iter().enumerate() {
                if t.values.is_empty() || t.values.len() != t.weights.len() {
                    return Err(config_err(
                        "model.init-prior",
                        format!("compartment {c}: values and weights must be non-empty and equal length"),
                    ));
                }
                if t.weights.iter().any(|&w| w < 0.0) || t.weights.iter().sum::<f64>() <= 0.0 {
                    return Err(config_err(
                        "model.init-prior",
                        format!("compartment {c}: weights must be non-negative with positive sum"),
                    ));
                }
                comps.push(t.values.iter().cloned().zip(t.weights.iter().cloned()).collect());
            }
            return Ok(InitStateDist::Independent(comps));
        }
        let init = self
            .model
            .init
            .as_ref()
            .ok_or_else(|| config_err("model.init", "either init or init-prior is required"))?;
        if init.len() != n_comp {
            return Err(config_err(
                "model.init",
                format!("expected {n_comp} compartment counts, got {}", init.len()),
            ));
        }
        let mut counts = CountVec::default();
        counts[..init.len()].copy_from_slice(init);
        if counts.iter().sum::<u64>() > self.model.pop_size {
            return Err(config_err("model.init", "initial counts exceed pop-size"));
        }
        Ok(InitStateDist::Fixed(counts))
    }

    /// Full cross-block validation; called by `load_config`.
    pub fn validate(&self) -> Result<()> {
        let spec = self.model_spec();
        self.obs_spec().validate()?;
        self.init_dist()?;
        substeps_per_window(self.observation.spacing, self.algorithm.dtau)?;
        if self.algorithm.delta <= 0.5 || self.algorithm.delta >= 1.0 {
            return Err(config_err("algorithm.delta", "discount must lie in (0.5, 1)"));
        }

        // Exactly the active parameters must have priors.
        let p = &self.priors;
        let require = |key: &str, present: bool, active: bool| -> Result<()> {
            if active && !present {
                Err(config_err(&format!("priors.{key}"), "required for this model configuration"))
            } else if !active && present {
                Err(config_err(&format!("priors.{key}"), "not active for this model configuration"))
            } else {
                Ok(())
            }
        };
        let constant_contact = spec.contact_mode == ContactMode::Constant;
        require("beta", p.beta.is_some(), constant_contact)?;
        require("log-beta0", p.log_beta0.is_some(), !constant_contact)?;
        require("lambda-beta", p.lambda_beta.is_some(), !constant_contact)?;
        require("kappa", p.kappa.is_some(), spec.kind == ModelKind::Seir)?;
        let dynamic_rho = spec.reporting_mode == ReportingMode::BrownianLogit;
        require("rho", p.rho.is_some(), !dynamic_rho)?;
        require("rho0", p.rho0.is_some(), dynamic_rho)?;
        require("lambda-rho", p.lambda_rho.is_some(), dynamic_rho)?;
        require(
            "nu",
            p.nu.is_some(),
            self.observation.family == ObsFamily::NegativeBinomial,
        )?;

        for block in [&self.pmmh, &self.lna_mh].into_iter().flatten() {
            if block.params.is_empty() {
                return Err(config_err("pmmh.params", "at least one sampled parameter required"));
            }
            if block.proposal_sd.len() != block.params.len() {
                return Err(config_err(
                    "pmmh.proposal-sd",
                    "one standard deviation per sampled parameter required",
                ));
            }
            if block.proposal_sd.iter().any(|&s| s <= 0.0) {
                return Err(config_err("pmmh.proposal-sd", "must be positive"));
            }
            if let Some(init) = &block.init {
                if init.len() != block.params.len() {
                    return Err(config_err("pmmh.init", "one initial value per parameter"));
                }
            }
            for name in &block.params {
                self.prior_by_name(name)?;
            }
        }
        if let Some(sim) = &self.simulate {
            if sim.n_obs == 0 {
                return Err(config_err("simulate.n-obs", "must be positive"));
            }
            let missing = |key: &str, ok: bool| -> Result<()> {
                if ok {
                    Ok(())
                } else {
                    Err(config_err(&format!("simulate.{key}"), "required for this model configuration"))
                }
            };
            missing("beta", !constant_contact || sim.beta.is_some())?;
            missing("log-beta0", constant_contact || sim.log_beta0.is_some())?;
            missing("lambda-beta", constant_contact || sim.lambda_beta.is_some())?;
            missing("kappa", spec.kind != ModelKind::Seir || sim.kappa.is_some())?;
            missing("rho", dynamic_rho || sim.rho.is_some())?;
            missing("rho0", !dynamic_rho || sim.rho0.is_some())?;
            missing("lambda-rho", !dynamic_rho || sim.lambda_rho.is_some())?;
            missing(
                "nu",
                self.observation.family == ObsFamily::Binomial || sim.nu.is_some(),
            )?;
        }
        Ok(())
    }

    pub fn prior_by_name(&self, name: &str) -> Result<ScalarPrior> {
        let p = &self.priors;
        let slot = match name {
            "beta" => p.beta,
            "kappa" => p.kappa,
            "gamma" => Some(p.gamma),
            "log_beta0" => p.log_beta0,
            "lambda_beta" => p.lambda_beta,
            "lambda_rho" => p.lambda_rho,
            "rho" => p.rho,
            "rho0" => p.rho0,
            "nu" => p.nu,
            other => {
                return Err(config_err(
                    &format!("pmmh.params.{other}"),
                    "unknown parameter name",
                ))
            }
        };
        slot.ok_or_else(|| {
            config_err(&format!("priors.{name}"), "no prior configured for sampled parameter")
        })
    }

    pub fn inference_model(&self) -> Result<InferenceModel> {
        Ok(InferenceModel {
            spec: self.model_spec(),
            obs: self.obs_spec(),
            init: self.init_dist()?,
            priors: ParamPriors {
                gamma: Some(self.priors.gamma),
                kappa: self.priors.kappa,
                beta: self.priors.beta,
                log_beta0: self.priors.log_beta0,
                lambda_beta: self.priors.lambda_beta,
                lambda_rho: self.priors.lambda_rho,
                rho: self.priors.rho,
                rho0: self.priors.rho0,
                nu: self.priors.nu,
            },
        })
    }

    pub fn filter_settings(&self) -> FilterSettings {
        FilterSettings {
            n_particles: self.algorithm.particles,
            dtau: self.algorithm.dtau,
            delta: self.algorithm.delta,
            seed: self.algorithm.seed,
            resampler: self.algorithm.resampler,
            bridge: self.algorithm.bridge,
            rejuvenate: true,
            exec: self.algorithm.exec,
        }
    }

    /// Default transform for a sampled parameter, inferred from its prior.
    pub fn transform_for(prior: &ScalarPrior) -> Transform {
        match prior {
            ScalarPrior::Gamma { .. } | ScalarPrior::InvSqrtUniform { .. } => Transform::Log,
            ScalarPrior::Beta { .. } | ScalarPrior::LogitNormal { .. } => Transform::Logit,
            ScalarPrior::Normal { .. }
            | ScalarPrior::Uniform { .. }
            | ScalarPrior::Fixed { .. } => Transform::Identity,
        }
    }

    /// A central natural-scale value of a prior, used for MH initialisation.
    pub fn prior_center(prior: &ScalarPrior) -> f64 {
        match *prior {
            ScalarPrior::Gamma { shape, rate } => shape / rate,
            ScalarPrior::Beta { a, b } => a / (a + b),
            ScalarPrior::Normal { mean, .. } => mean,
            ScalarPrior::LogitNormal { mean, .. } => crate::model::sigmoid(mean),
            ScalarPrior::Uniform { lo, hi } => 0.5 * (lo + hi),
            ScalarPrior::InvSqrtUniform { lo, hi } => {
                let mid = 0.5 * (lo + hi);
                1.0 / (mid * mid)
            }
            ScalarPrior::Fixed { value } => value,
        }
    }

    /// Build the MH parameter list and settings from an MH block.
    pub fn mh_setup(&self, block: &MhBlock) -> Result<(Vec<MhParam>, MhSettings)> {
        let mut params = Vec::with_capacity(block.params.len());
        for name in &block.params {
            let prior = self.prior_by_name(name)?;
            params.push(MhParam {
                name: name.clone(),
                prior,
                transform: Self::transform_for(&prior),
            });
        }
        let init = match &block.init {
            Some(v) => v.clone(),
            None => params.iter().map(|p| Self::prior_center(&p.prior)).collect(),
        };
        let settings = MhSettings {
            n_iters: block.iters,
            seed: self.algorithm.seed,
            init,
            proposal: Proposal::Diagonal(block.proposal_sd.iter().map(|s| s * s).collect()),
            thin: block.thin,
        };
        Ok((params, settings))
    }
}

/// Parse and validate a config file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let config: RunConfig = toml::from_str(&text).map_err(|e| EpiError::Config {
        key: path.display().to_string(),
        message: e.to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

/// Load an observation series from CSV (`time,count` with a header line).
/// Rejects irregular time grids, non-increasing times and empty files.
pub fn load_series(path: &Path) -> Result<Vec<Observation>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    let mut seen_content = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let first = !seen_content;
        seen_content = true;
        if first && line.chars().next().is_some_and(|c| c.is_alphabetic()) {
            continue; // header
        }
        let mut fields = line.split(',');
        let (t, c) = (fields.next(), fields.next());
        let parse = |v: Option<&str>, what: &str| -> Result<String> {
            v.map(|s| s.trim().to_string()).ok_or_else(|| {
                config_err(
                    &format!("{}:{}", path.display(), lineno + 1),
                    format!("missing {what} field"),
                )
            })
        };
        let time: f64 = parse(t, "time")?.parse().map_err(|e| {
            config_err(&format!("{}:{}", path.display(), lineno + 1), format!("bad time: {e}"))
        })?;
        let count: u64 = parse(c, "count")?.parse().map_err(|e| {
            config_err(&format!("{}:{}", path.display(), lineno + 1), format!("bad count: {e}"))
        })?;
        out.push(Observation { time, count });
    }
    if out.is_empty() {
        return Err(config_err(&path.display().to_string(), "no observations in file"));
    }
    if out.len() > 1 {
        let spacing = out[1].time - out[0].time;
        if spacing <= 0.0 {
            return Err(config_err(&path.display().to_string(), "times must be increasing"));
        }
        for w in out.windows(2) {
            if ((w[1].time - w[0].time) - spacing).abs() > 1e-9 * spacing.max(1.0) {
                return Err(config_err(
                    &path.display().to_string(),
                    format!(
                        "irregular time grid: spacing {} vs {} at t = {}",
                        w[1].time - w[0].time,
                        spacing,
                        w[1].time
                    ),
                ));
            }
        }
    }
    Ok(out)
}

/// Serialise an observation series as `time,count` CSV.
pub fn series_to_csv(data: &[Observation]) -> String {
    let mut out = String::from("time,count\n");
    for obs in data {
        out.push_str(&format!("{},{}\n", obs.time, obs.count));
    }
    out
}

impl SimulateBlock {
    /// True static parameters and initial rate state for data generation.
    pub fn true_params(
        &self,
        spec: &ModelSpec,
    ) -> (crate::model::StaticParams, crate::model::RateState) {
        let params = crate::model::StaticParams {
            beta: self.beta,
            kappa: self.kappa,
            gamma: self.gamma,
            lambda_beta: self.lambda_beta,
            lambda_rho: self.lambda_rho,
            rho: self.rho,
            nu: self.nu,
        };
        let rates = crate::model::RateState {
            log_beta: self.log_beta0.unwrap_or(0.0),
            logit_rho: if spec.reporting_mode == ReportingMode::BrownianLogit {
                Some(crate::model::logit(
                    self.rho0.expect("validated: rho0 required").clamp(1e-12, 1.0 - 1e-12),
                ))
            } else {
                None
            },
        };
        (params, rates)
    }
}

/// Stable hash of the configuration text, embedded in output headers so any
/// artifact can be traced to the exact (config, seed) pair.
pub fn config_hash(text: &str) -> u64 {
    let mut parts = Vec::with_capacity(text.len() / 8 + 1);
    let bytes = text.as_bytes();
    for chunk in bytes.chunks(8) {
        let mut buf = [0u8; 8];
        buf[..chunk.len()].copy_from_slice(chunk);
        parts.push(u64::from_le_bytes(buf));
    }
    parts.push(bytes.len() as u64);
    crate::rng::mix(&parts)
}

/// Padded count vector helper for CLI output.
pub fn counts_to_row(counts: &CountVec, n: usize) -> Vec<u64> {
    counts[..n.min(MAX_DIM)].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SYNTHETIC: &str = r#"
[model]
kind = "sir"
pop-size = 767
contact-mode = "brownian-log"
reporting-mode = "constant"
init = [762, 5]

[observation]
family = "binomial"
spacing = 1.0

[priors]
gamma = { gamma = { shape = 11.0, rate = 20.0 } }
lambda-beta = { gamma = { shape = 15.0, rate = 0.14 } }
rho = { beta = { a = 90.0, b = 15.0 } }
log-beta0 = { normal = { mean = -6.5, sd = 0.5 } }

[algorithm]
particles = 500
dtau = 0.1
seed = 7
"#;

    #[test]
    fn synthetic_preset_parses_and_validates() {
        let cfg: RunConfig = toml::from_str(SYNTHETIC).unwrap();
        cfg.validate().unwrap();
        let model = cfg.inference_model().unwrap();
        assert_eq!(model.spec.kind, ModelKind::Sir);
        assert_eq!(
            model.priors.gamma,
            Some(ScalarPrior::Gamma { shape: 11.0, rate: 20.0 })
        );
        assert_eq!(
            model.priors.log_beta0,
            Some(ScalarPrior::Normal { mean: -6.5, sd: 0.5 })
        );
        match model.init {
            InitStateDist::Fixed(c) => assert_eq!(c, [762, 5, 0]),
            _ => panic!("expected fixed init"),
        }
        assert_eq!(cfg.filter_settings().n_particles, 500);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = SYNTHETIC.replace("particles = 500", "particles = 500\nbogus-key = 1");
        let parsed: std::result::Result<RunConfig, _> = toml::from_str(&bad);
        assert!(parsed.is_err());
    }

    #[test]
    fn non_divisor_dtau_rejected() {
        let bad = SYNTHETIC.replace("dtau = 0.1", "dtau = 0.3");
        let cfg: RunConfig = toml::from_str(&bad).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("dtau"), "{err}");
    }

    #[test]
    fn inactive_prior_rejected() {
        let bad = SYNTHETIC.replace(
            "rho = { beta = { a = 90.0, b = 15.0 } }",
            "rho = { beta = { a = 90.0, b = 15.0 } }\nbeta = { gamma = { shape = 2.0, rate = 50000.0 } }",
        );
        let cfg: RunConfig = toml::from_str(&bad).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("priors.beta"), "{err}");
    }

    #[test]
    fn missing_active_prior_rejected() {
        let bad = SYNTHETIC.replace("lambda-beta = { gamma = { shape = 15.0, rate = 0.14 } }\n", "");
        let cfg: RunConfig = toml::from_str(&bad).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("lambda-beta"), "{err}");
    }

    #[test]
    fn series_round_trip_and_grid_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        let data = vec![
            Observation { time: 1.0, count: 3 },
            Observation { time: 2.0, count: 9 },
            Observation { time: 3.0, count: 31 },
        ];
        std::fs::write(&path, series_to_csv(&data)).unwrap();
        let loaded = load_series(&path).unwrap();
        assert_eq!(loaded, data);

        std::fs::write(&path, "time,count\n1.0,3\n2.5,9\n3.0,31\n").unwrap();
        assert!(load_series(&path).is_err());
        std::fs::write(&path, "time,count\n").unwrap();
        assert!(load_series(&path).is_err());
        std::fs::write(&path, "time,count\n1.0,-3\n").unwrap();
        assert!(load_series(&path).is_err());
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = config_hash(SYNTHETIC);
        assert_eq!(a, config_hash(SYNTHETIC));
        assert_ne!(a, config_hash(&SYNTHETIC.replace("seed = 7", "seed = 8")));
    }

    #[test]
    fn mh_setup_infers_transforms_and_centers() {
        let with_pmmh = format!(
            "{SYNTHETIC}\n[pmmh]\niters = 100\nparams = [\"gamma\", \"rho\"]\nproposal-sd = [0.1, 0.2]\n"
        );
        let cfg: RunConfig = toml::from_str(&with_pmmh).unwrap();
        cfg.validate().unwrap();
        let (params, settings) = cfg.mh_setup(cfg.pmmh.as_ref().unwrap()).unwrap();
        assert_eq!(params[0].transform, Transform::Log);
        assert_eq!(params[1].transform, Transform::Logit);
        assert!((settings.init[0] - 0.55).abs() < 1e-12);
        assert!((settings.init[1] - 90.0 / 105.0).abs() < 1e-12);
    }

    #[test]
    fn categorical_init_prior_parses() {
        let with_prior = SYNTHETIC.replace(
            "init = [762, 5]",
            "init-prior = [ { values = [762], weights = [1.0] }, { values = [3, 5, 7], weights = [0.25, 0.5, 0.25] } ]",
        );
        let cfg: RunConfig = toml::from_str(&with_prior).unwrap();
        cfg.validate().unwrap();
        match cfg.inference_model().unwrap().init {
            InitStateDist::Independent(t) => {
                assert_eq!(t.len(), 2);
                assert_eq!(t[1].len(), 3);
            }
            _ => panic!("expected categorical init"),
        }
    }
}
