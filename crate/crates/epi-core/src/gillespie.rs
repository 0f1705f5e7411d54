//! Exact Markov jump process simulation via Gillespie's direct method.
//!
//! Restricted to constant rates and used only as a validation oracle for the
//! time-discretised simulator; the inference path never calls it.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::model::{
    apply_increment, hazard, CompartmentState, IncidenceIncrement, ModelSpec, RateState,
    StaticParams,
};

/// One exact event: its time and reaction index.
#[derive(Debug, Clone, Copy)]
pub struct Event {
    pub time: f64,
    pub reaction: usize,
}

/// Simulate the exact MJP up to `t_end`. Requires a constant contact rate.
pub fn gillespie_simulate<R: Rng + ?Sized>(
    spec: &ModelSpec,
    params: &StaticParams,
    init_state: CompartmentState,
    t_end: f64,
    rng: &mut R,
) -> Vec<Event> {
    assert!(
        params.beta.is_some(),
        "Gillespie oracle requires a constant contact rate"
    );
    let rates = RateState { log_beta: 0.0, logit_rho: None };
    let mut state = init_state;
    let mut t = init_state.time;
    let mut events = Vec::new();
    loop {
        let h = hazard(&state, params, &rates, spec);
        let total: f64 = h.iter().sum();
        if total <= 0.0 {
            break;
        }
        t += Exp::new(total).unwrap().sample(rng);
        if t > t_end {
            break;
        }
        let u: f64 = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut reaction = spec.n_reactions() - 1;
        for (r, hr) in h.iter().enumerate().take(spec.n_reactions()) {
            acc += hr;
            if u < acc {
                reaction = r;
                break;
            }
        }
        let mut inc = IncidenceIncrement::zero();
        inc.events[reaction] = 1;
        state = apply_increment(&state, &inc, spec, 0.0).expect("single event keeps state valid");
        events.push(Event { time: t, reaction });
    }
    events
}

/// State at time `t` given the exact event list.
pub fn state_at(
    spec: &ModelSpec,
    init_state: &CompartmentState,
    events: &[Event],
    t: f64,
) -> CompartmentState {
    let mut inc = IncidenceIncrement::zero();
    for e in events.iter().take_while(|e| e.time <= t) {
        inc.events[e.reaction] += 1;
    }
    apply_increment(init_state, &inc, spec, t - init_state.time).unwrap()
}
