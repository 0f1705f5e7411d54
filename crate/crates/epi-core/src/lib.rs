//! Sequential Bayesian inference for time-discretised stochastic epidemic
//! compartment models observed through noisy cumulative incidence counts.
//!
//! The crate provides the forward simulator, a particle filter with a
//! conditioned-hazard bridge proposal and conjugate parameter rejuvenation,
//! a particle marginal Metropolis-Hastings benchmark sampler and a linear
//! noise approximation benchmark filter.

pub mod bridge;
pub mod config;
pub mod conjugate;
pub mod error;
pub mod gillespie;
pub mod lna;
pub mod model;
pub mod obs;
pub mod pmmh;
pub mod resample;
pub mod rng;
pub mod smc;
pub mod summary;

pub use error::{EpiError, Result};
