//! Conditioned-hazard bridge: end-point-conditioned propagation of incidence
//! over one observation window.
//!
//! The hazard of the observed reaction is perturbed toward the next
//! observation using a joint Gaussian approximation of the remaining
//! incidence and the observation. Propagation returns both the proposal
//! log-density `log_q` and the blind-target log-density `log_p` needed for
//! importance weights.

use rand::Rng;
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::Result;
use crate::model::{
    apply_increment, draw_truncated_poisson, hazard, sigmoid, CompartmentState,
    IncidenceIncrement, ModelSpec, RVec, RateState, StaticParams, MAX_DIM,
};
use crate::obs::{obs_gaussian_moments, ObsFamily, ObsModelSpec};

/// Within-window path of the rate processes at the sub-interval grid points
/// `tau_{i,0}, ..., tau_{i,m}` (so `m + 1` values). The jump process is
/// conditioned on the observation; these paths are drawn blindly first.
#[derive(Debug, Clone)]
pub struct RatePath {
    pub log_beta: Vec<f64>,
    pub logit_rho: Option<Vec<f64>>,
}

impl RatePath {
    pub fn at(&self, j: usize) -> RateState {
        RateState {
            log_beta: self.log_beta[j],
            logit_rho: self.logit_rho.as_ref().map(|v| v[j]),
        }
    }

    pub fn end(&self) -> RateState {
        self.at(self.log_beta.len() - 1)
    }

    /// Sum of squared increments divided by dtau, the precision statistic
    /// accumulator contribution for one window.
    pub fn sum_sq_over_dtau(values: &[f64], dtau: f64) -> f64 {
        values.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / dtau
    }
}

/// Draw the rate path for one window by iterating the SDE step `m` times.
pub fn draw_rate_path<R: Rng + ?Sized>(
    init: RateState,
    params: &StaticParams,
    spec: &ModelSpec,
    dtau: f64,
    m: usize,
    rng: &mut R,
) -> RatePath {
    let mut log_beta = Vec::with_capacity(m + 1);
    let mut logit_rho = init.logit_rho.map(|_| Vec::with_capacity(m + 1));
    let mut cur = init;
    log_beta.push(cur.log_beta);
    if let (Some(v), Some(lr)) = (logit_rho.as_mut(), cur.logit_rho) {
        v.push(lr);
    }
    for _ in 0..m {
        cur = crate::model::sde_step(&cur, params, spec, dtau, rng);
        log_beta.push(cur.log_beta);
        if let (Some(v), Some(lr)) = (logit_rho.as_mut(), cur.logit_rho) {
            v.push(lr);
        }
    }
    RatePath { log_beta, logit_rho }
}

/// Hazard conditioned on the window-end observation `y`.
///
/// `h* = h + rho H P (rho^2 P'HP (t_i - tau) + sigma^2)^{-1} (y - mu_hat)`
/// with `H = diag(h)`. Since `P` indicates a single reaction, only that
/// component is perturbed; the result is clamped at zero componentwise.
#[allow(clippy::too_many_arguments)]
pub fn conditioned_hazard(
    h: &RVec,
    obs_reaction: usize,
    incidence_so_far: u64,
    y: u64,
    time_remaining: f64,
    rho: f64,
    nu: Option<f64>,
    family: ObsFamily,
) -> RVec {
    debug_assert!(time_remaining > 0.0);
    let predicted_remaining = h[obs_reaction] * time_remaining;
    let (mu_hat, sigma2) =
        obs_gaussian_moments(incidence_so_far as f64, predicted_remaining, rho, nu, family);
    let denom = rho * rho * h[obs_reaction] * time_remaining + sigma2;
    let mut out = *h;
    out[obs_reaction] =
        (h[obs_reaction] + rho * h[obs_reaction] * (y as f64 - mu_hat) / denom).max(0.0);
    out
}

/// Log-mass of a truncated Poisson draw: plain Poisson below the cap, the
/// upper-tail mass lumped at the cap. This is the exact density of
/// `draw_truncated_poisson`, so importance weights stay exact even when
/// truncation is active.
pub fn truncated_poisson_logpmf(k: u64, mean: f64, cap: u64) -> f64 {
    if cap == 0 || mean <= 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if k > cap {
        return f64::NEG_INFINITY;
    }
    if k == cap {
        // P(K >= cap) = regularized lower incomplete gamma P(cap, mean).
        return gamma_lr(cap as f64, mean).ln();
    }
    k as f64 * mean.ln() - mean - ln_gamma(k as f64 + 1.0)
}

/// Result of propagating one window of `m` sub-intervals.
#[derive(Debug, Clone)]
pub struct WindowPropagation {
    pub end_state: CompartmentState,
    /// Total incidence over the window (the quantity the observation sees).
    pub window_incidence: IncidenceIncrement,
    /// Per-sub-interval increments, oldest first.
    pub sub_increments: Vec<IncidenceIncrement>,
    /// Integrated combinatorial factors `sum_j g_r(x_{tau_{j-1}}) dtau`
    /// per reaction, the rate accumulators of the conjugate update.
    pub exposures: RVec,
    /// Log-density of the proposal that generated the increments.
    pub log_q: f64,
    /// Log-density of the blind (unconditioned) kernel at the same increments.
    pub log_p: f64,
}

/// Combinatorial factor per reaction: the hazard with the rate constant
/// divided out (`s i`, `e`, `i` for SEIR).
fn combinatorial_factors(state: &CompartmentState, spec: &ModelSpec) -> RVec {
    let c = &state.counts;
    match spec.kind {
        crate::model::ModelKind::Sir => [c[0] as f64 * c[1] as f64, c[1] as f64, 0.0],
        crate::model::ModelKind::Seir => {
            [c[0] as f64 * c[2] as f64, c[1] as f64, c[2] as f64]
        }
    }
}

/// Propagate the jump process over one window, conditioning each sub-interval
/// draw on the window-end observation when `use_bridge` is set (otherwise the
/// blind kernel is used and `log_q == log_p`).
#[allow(clippy::too_many_arguments)]
pub fn propagate_window<R: Rng + ?Sized>(
    spec: &ModelSpec,
    obs_spec: &ObsModelSpec,
    params: &StaticParams,
    start_state: CompartmentState,
    path: &RatePath,
    y: u64,
    dtau: f64,
    use_bridge: bool,
    rng: &mut R,
) -> Result<WindowPropagation> {
    let m = path.log_beta.len() - 1;
    let obs_reaction = spec.obs_reaction();
    let net = spec.net_effect();
    let mut state = start_state;
    let mut window_incidence = IncidenceIncrement::zero();
    let mut sub_increments = Vec::with_capacity(m);
    let mut exposures = [0.0; MAX_DIM];
    let mut log_q = 0.0;
    let mut log_p = 0.0;

    for j in 0..m {
        let rates = path.at(j);
        let h = hazard(&state, params, &rates, spec);
        let h_star = if use_bridge {
            let rho = if obs_spec.dynamic_rho {
                sigmoid(rates.logit_rho.expect("dynamic rho requires logit_rho path"))
            } else {
                params.rho.expect("static rho required")
            };
            let time_remaining = (m - j) as f64 * dtau;
            conditioned_hazard(
                &h,
                obs_reaction,
                window_incidence.events[obs_reaction],
                y,
                time_remaining,
                rho,
                params.nu,
                obs_spec.family,
            )
        } else {
            h
        };

        let g = combinatorial_factors(&state, spec);
        for r in 0..spec.n_reactions() {
            exposures[r] += g[r] * dtau;
        }

        // Draw with in-order truncation, scoring both kernels at the caps
        // actually in force.
        let mut scratch = state.counts;
        let mut inc = IncidenceIncrement::zero();
        for r in 0..spec.n_reactions() {
            let cap = scratch[spec.source_compartment(r)];
            let k = draw_truncated_poisson(h_star[r] * dtau, cap, rng);
            inc.events[r] = k;
            log_q += truncated_poisson_logpmf(k, h_star[r] * dtau, cap);
            log_p += truncated_poisson_logpmf(k, h[r] * dtau, cap);
            for c in 0..spec.n_compartments() {
                scratch[c] = (scratch[c] as i64 + net[r][c] * k as i64) as u64;
            }
        }
        state = apply_increment(&state, &inc, spec, dtau)?;
        window_incidence.add(&inc);
        sub_increments.push(inc);
    }

    Ok(WindowPropagation {
        end_state: state,
        window_incidence,
        sub_increments,
        exposures,
        log_q,
        log_p,
    })
}
