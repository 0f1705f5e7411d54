//! Linear noise approximation of the cumulative incidence process: the
//! incidence-coordinate hazard and Jacobian, Euler co-integration of the
//! mean/fundamental-matrix/covariance ODEs, the Gaussian forward filter for
//! the marginal likelihood, and a marginal MH sampler built on it.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{EpiError, Result};
use crate::model::{CountVec, ModelKind, ModelSpec, StaticParams};
use crate::obs::{obs_gaussian_moments, sample_obs, ObsFamily, Observation};
use crate::pmmh::{run_mh, MhChain, MhParam, MhSettings};

/// Floor applied to the scalar predictive variance.
const PREDICTIVE_FLOOR: f64 = 1e-6;

/// LNA state over one window: deterministic mean path `eta`, fundamental
/// matrix `G` and residual covariance `V`, all in cumulative-incidence
/// coordinates. At a window start after reset, `G = I` and `V` holds the
/// filtered covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LnaState {
    pub eta: Vector3<f64>,
    pub g: Matrix3<f64>,
    pub v: Matrix3<f64>,
}

impl LnaState {
    /// Reset at a window start from filtered moments of `N_t`.
    pub fn reset(mean: Vector3<f64>, cov: Matrix3<f64>) -> Self {
        Self { eta: mean, g: Matrix3::identity(), v: cov }
    }
}

/// Real-valued prevalence `x = x0 + A' n` implied by cumulative counts `n`.
fn prevalence(n: &Vector3<f64>, x0: &CountVec, spec: &ModelSpec) -> Vector3<f64> {
    let net = spec.net_effect();
    let mut x = Vector3::zeros();
    for c in 0..spec.n_compartments() {
        x[c] = x0[c] as f64;
        for r in 0..spec.n_reactions() {
            x[c] += net[r][c] as f64 * n[r];
        }
    }
    x
}

/// Hazard in incidence coordinates, `h*(n)`, clamped at zero componentwise
/// (the continuous state can exit the physical region).
pub fn incidence_hazard(
    n: &Vector3<f64>,
    x0: &CountVec,
    params: &StaticParams,
    spec: &ModelSpec,
) -> Vector3<f64> {
    let x = prevalence(n, x0, spec);
    let beta = params.beta.expect("LNA requires a constant contact rate");
    let raw = match spec.kind {
        ModelKind::Sir => Vector3::new(beta * x[0] * x[1], params.gamma * x[1], 0.0),
        ModelKind::Seir => Vector3::new(
            beta * x[0] * x[2],
            params.kappa.expect("SEIR requires kappa") * x[1],
            params.gamma * x[2],
        ),
    };
    raw.map(|h| h.max(0.0))
}

/// Jacobian `F` of `incidence_hazard` with respect to `n`. Rows whose raw
/// hazard is clamped at zero are zero, matching the clamped function.
pub fn jacobian(
    n: &Vector3<f64>,
    x0: &CountVec,
    params: &StaticParams,
    spec: &ModelSpec,
) -> Matrix3<f64> {
    let x = prevalence(n, x0, spec);
    let beta = params.beta.expect("LNA requires a constant contact rate");
    // dh/dx rows per reaction, then chain rule dx/dn = A'.
    let dh_dx: [[f64; 3]; 3] = match spec.kind {
        ModelKind::Sir => [
            [beta * x[1], beta * x[0], 0.0],
            [0.0, params.gamma, 0.0],
            [0.0, 0.0, 0.0],
        ],
        ModelKind::Seir => [
            [beta * x[2], 0.0, beta * x[0]],
            [0.0, params.kappa.expect("SEIR requires kappa"), 0.0],
            [0.0, 0.0, params.gamma],
        ],
    };
    let raw = match spec.kind {
        ModelKind::Sir => [beta * x[0] * x[1], params.gamma * x[1], 0.0],
        ModelKind::Seir => [
            beta * x[0] * x[2],
            params.kappa.unwrap() * x[1],
            params.gamma * x[2],
        ],
    };
    let net = spec.net_effect();
    let mut f = Matrix3::zeros();
    for r1 in 0..spec.n_reactions() {
        if raw[r1] <= 0.0 {
            continue;
        }
        for r2 in 0..spec.n_reactions() {
            let mut acc = 0.0;
            for c in 0..spec.n_compartments() {
                acc += dh_dx[r1][c] * net[r2][c] as f64;
            }
            f[(r1, r2)] = acc;
        }
    }
    f
}

/// Explicit-Euler co-integration of the mean, fundamental-matrix and
/// covariance ODEs over `duration`, with `V` symmetrised each step.
pub fn integrate_lna(
    state: &LnaState,
    params: &StaticParams,
    x0: &CountVec,
    spec: &ModelSpec,
    duration: f64,
    ode_step: f64,
) -> Result<LnaState> {
    let steps = duration / ode_step;
    let n_steps = steps.round();
    if duration > 0.0 && (steps - n_steps).abs() > 1e-9 {
        return Err(EpiError::Config {
            key: "lna.ode_step".into(),
            message: format!("ode_step = {ode_step} does not divide the duration {duration}"),
        });
    }
    let mut s = *state;
    for _ in 0..n_steps as usize {
        let h = incidence_hazard(&s.eta, x0, params, spec);
        let f = jacobian(&s.eta, x0, params, spec);
        s.eta += h * ode_step;
        s.g += f * s.g * ode_step;
        let dv = s.v * f.transpose() + Matrix3::from_diagonal(&h) + f * s.v;
        s.v += dv * ode_step;
        s.v = (s.v + s.v.transpose()) * 0.5;
        if s.eta.iter().any(|v| !v.is_finite())
            || s.g.iter().any(|v| !v.is_finite())
            || s.v.iter().any(|v| !v.is_finite())
        {
            return Err(EpiError::Numerical(format!(
                "non-finite LNA state during integration: beta = {:?}, gamma = {}, eta = {:?}",
                params.beta, params.gamma, s.eta
            )));
        }
    }
    Ok(s)
}

/// Forward-filter output: the log marginal likelihood and the filtered
/// Gaussian moments of `N_t` after each observation.
#[derive(Debug, Clone)]
pub struct LnaFilterRun {
    pub log_lik: f64,
    pub filtered: Vec<(Vector3<f64>, Matrix3<f64>)>,
}

/// Gaussian forward filter over the observation series.
///
/// Per window: reset (eta = filtered mean, G = I, V = filtered covariance),
/// integrate the ODEs, form the scalar predictive for the observed increment
/// with the moment-matched observation variance, accumulate its log density
/// and condition the Gaussian on `y`.
pub fn lna_forward_filter(
    params: &StaticParams,
    family: ObsFamily,
    x0: &CountVec,
    spec: &ModelSpec,
    data: &[Observation],
    ode_step: f64,
) -> Result<LnaFilterRun> {
    if data.is_empty() {
        return Err(EpiError::Config {
            key: "io.data".into(),
            message: "empty observation series".into(),
        });
    }
    let spacing = if data.len() > 1 { data[1].time - data[0].time } else { 1.0 };
    let rho = params.rho.expect("LNA filter requires a static reporting rate");
    let p_idx = spec.obs_reaction();

    let mut mean = Vector3::zeros();
    let mut cov = Matrix3::zeros();
    let mut log_lik = 0.0;
    let mut filtered = Vec::with_capacity(data.len());

    for obs in data {
        let end = integrate_lna(
            &LnaState::reset(mean, cov),
            params,
            x0,
            spec,
            spacing,
            ode_step,
        )?;
        // Increment moments: Delta N = N_{t+1} - N_t with
        // Cov(N_{t+1}, N_t) = G C.
        let incr_mean = end.eta - mean;
        let gc = end.g * cov;
        let var_dn = end.v + cov - gc - gc.transpose();
        let (y_hat, sigma2) =
            obs_gaussian_moments(0.0, incr_mean[p_idx].max(0.0), rho, params.nu, family);
        let s = (rho * rho * var_dn[(p_idx, p_idx)] + sigma2).max(PREDICTIVE_FLOOR);
        // Gain on N_{t+1}: Cov(N_{t+1}, Delta N) P = (V - G C) P.
        let gain = (end.v - gc).column(p_idx) * rho;
        let resid = obs.count as f64 - y_hat;
        log_lik += -0.5 * (2.0 * std::f64::consts::PI * s).ln() - resid * resid / (2.0 * s);

        mean = end.eta + gain * (resid / s);
        cov = end.v - gain * gain.transpose() / s;
        cov = (cov + cov.transpose()) * 0.5;
        filtered.push((mean, cov));
    }
    Ok(LnaFilterRun { log_lik, filtered })
}

/// Override named fields of a base parameter set (MH parameter mapping).
pub fn apply_params(base: &StaticParams, names: &[String], values: &[f64]) -> Result<StaticParams> {
    let mut out = *base;
    for (name, &v) in names.iter().zip(values) {
        match name.as_str() {
            "beta" => out.beta = Some(v),
            "kappa" => out.kappa = Some(v),
            "gamma" => out.gamma = v,
            "rho" => out.rho = Some(v),
            "nu" => out.nu = Some(v),
            other => {
                return Err(EpiError::Config {
                    key: format!("lna.params.{other}"),
                    message: "unknown parameter name".into(),
                })
            }
        }
    }
    Ok(out)
}

/// Marginal MH over the static parameters with the deterministic LNA
/// likelihood (no pseudo-marginal noise).
#[allow(clippy::too_many_arguments)]
pub fn run_lna_mh(
    base: &StaticParams,
    family: ObsFamily,
    x0: &CountVec,
    spec: &ModelSpec,
    params: &[MhParam],
    settings: &MhSettings,
    data: &[Observation],
    ode_step: f64,
) -> Result<MhChain> {
    let names: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
    run_mh(params, settings, |values, _seed| {
        let theta = apply_params(base, &names, values)?;
        match lna_forward_filter(&theta, family, x0, spec, data, ode_step) {
            Ok(run) => Ok(run.log_lik),
            Err(EpiError::Numerical(_)) => Ok(f64::NEG_INFINITY),
            Err(e) => Err(e),
        }
    })
}

/// One-step-ahead forecast under the LNA: draw `N_T` from the filtered
/// Gaussian, propagate the conditional LNA over one window, draw the
/// increment and push it through the observation model.
#[allow(clippy::too_many_arguments)]
pub fn lna_forecast_sample<R: Rng + ?Sized>(
    mean: &Vector3<f64>,
    cov: &Matrix3<f64>,
    params: &StaticParams,
    family: ObsFamily,
    x0: &CountVec,
    spec: &ModelSpec,
    spacing: f64,
    ode_step: f64,
    rng: &mut R,
) -> Result<u64> {
    let p_idx = spec.obs_reaction();
    // Draw N_T ~ N(mean, cov) via the symmetric square root (guards against
    // slightly indefinite filtered covariances).
    let eig = nalgebra::SymmetricEigen::new(*cov);
    let z = Vector3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    );
    let sqrt_vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let n_t = mean
        + eig.eigenvectors * Matrix3::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose() * z;

    // Conditional propagation: V seeded at zero so end.v is the conditional
    // covariance and the mean shifts through G.
    let end = integrate_lna(
        &LnaState { eta: *mean, g: Matrix3::identity(), v: Matrix3::zeros() },
        params,
        x0,
        spec,
        spacing,
        ode_step,
    )?;
    let cond_mean = end.eta + end.g * (n_t - mean);
    let incr_mean = (cond_mean - n_t)[p_idx];
    let incr_sd = end.v[(p_idx, p_idx)].max(0.0).sqrt();
    let z2: f64 = rng.sample(StandardNormal);
    let incr = (incr_mean + incr_sd * z2).max(0.0).round() as u64;
    sample_obs(incr, params.rho.expect("static rho required"), params.nu, family, rng)
}
