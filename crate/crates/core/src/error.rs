use thiserror::Error;

/// Where a constraint was found violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Transmission,
    Buffer,
    Arrival,
}

impl std::fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ViolationKind::Transmission => "transmission",
            ViolationKind::Buffer => "buffer",
            ViolationKind::Arrival => "arrival",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("time {t} outside [0, {end}]")]
    OutOfRange { t: f64, end: f64 },

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("infeasible instance: {0}")]
    Infeasible(String),

    #[error("baseline {kind} infeasible: {reason}")]
    InfeasibleBaseline { kind: String, reason: String },

    #[error(
        "solver did not converge after {iterations} iterations \
         (stationarity {stationarity:.3e}, complementarity {complementarity:.3e})"
    )]
    NonConvergence {
        iterations: usize,
        stationarity: f64,
        complementarity: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
