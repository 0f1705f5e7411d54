use thiserror::Error;

/// Errors produced by the inference engine.
#[derive(Debug, Error)]
pub enum EpiError {
    /// A compartment count went negative; indicates an increment was applied
    /// without the truncation rule.
    #[error("invariant violation: {0}")]
    Invariant(String),

    /// Invalid configuration value, with the offending key path.
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    /// Parameter outside its domain (e.g. rho outside (0,1)).
    #[error("domain error: {0}")]
    Domain(String),

    /// Every particle received zero weight at an observation.
    #[error("total weight collapse at observation index {window} (time {time})")]
    WeightCollapse { window: usize, time: f64 },

    /// Non-finite value encountered during deterministic numerics.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EpiError>;
