use serde::Serialize;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Drift metrics captured when an integration run is aborted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct DriftMetrics {
    pub time_ps: f64,
    pub trace_drift: f64,
    pub hermiticity_drift: f64,
    pub min_eigenvalue: f64,
    pub norm_drift: f64,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("resonant normal mode {mode}: eta_{mode} = 0 (delta = {delta} meV, nu = {nu} meV)")]
    Resonance { mode: usize, delta: f64, nu: f64 },

    #[error(
        "no commensurate gate time with k <= {max_k}: best {k1}/{k2}, residual {residual:e}"
    )]
    Commensuration {
        k1: u64,
        k2: u64,
        residual: f64,
        max_k: u64,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("tuning failed: achieved |Theta| = {achieved} rad, target {target} rad ({detail})")]
    Tuning {
        achieved: f64,
        target: f64,
        detail: String,
    },

    #[error("invalid propagation config: {0}")]
    Config(String),

    #[error("integration failure: {detail} ({metrics:?})")]
    Integration {
        detail: String,
        metrics: DriftMetrics,
    },

    #[error("numerical residue: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
