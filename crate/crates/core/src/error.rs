use std::fmt;

use thiserror::Error;

use crate::operator::DensityOperator;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix dimension {dim} exceeds the configured maximum {max}")]
    DimensionOverflow { dim: usize, max: usize },

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("operator is not Hermitian: defect {defect:e} exceeds tolerance {tolerance:e}")]
    NotHermitian { defect: f64, tolerance: f64 },

    #[error("invalid density operator: {0}")]
    InvalidDensity(DensityDiagnostic),

    #[error("Hermitian eigendecomposition did not converge ({dim}x{dim})")]
    EigenFailure { dim: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("sector {n} is outside the truncation range 0..={n_max}")]
    SectorOutOfRange { n: usize, n_max: usize },

    #[error("{0}")]
    Propagation(Box<PropagationFailure>),

    #[error("Liouvillian has an empty numerical null space")]
    EmptyNullSpace,

    #[error("integration failed in sector {n}: {source}")]
    SectorIntegration { n: usize, source: Box<Error> },

    #[error("malformed channel partition: {0}")]
    MalformedPartition(String),

    #[error("reservoir energy model: {0}")]
    Reservoir(String),

    #[error("observable `{name}`: {reason}")]
    Observable { name: String, reason: String },

    #[error("cannot parse operator record: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

/// Every invariant a candidate density operator violated, with the measured
/// defects.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityDiagnostic {
    pub hermiticity_defect: f64,
    pub min_eigenvalue: f64,
    pub trace_real: f64,
    pub trace_imag: f64,
    pub tolerance: f64,
    pub violations: Vec<String>,
}

impl fmt::Display for DensityDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.violations.join("; "))
    }
}

/// Why a propagation run stopped, plus the last state that passed validation.
#[derive(Debug, Clone)]
pub struct PropagationFailure {
    pub time: f64,
    pub reason: String,
    pub last_good_time: f64,
    pub last_good: DensityOperator,
}

impl fmt::Display for PropagationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "propagation aborted at t = {}: {} (last good state at t = {})",
            self.time, self.reason, self.last_good_time
        )
    }
}
