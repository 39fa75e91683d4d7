use std::fmt;

use thiserror::Error;

use crate::pnm::PnmError;

pub type Result<T> = std::result::Result<T, Error>;

/// Which side of a central finite-difference probe failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeSide {
    Plus,
    Minus,
}

impl fmt::Display for ProbeSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProbeSide::Plus => f.write_str("plus"),
            ProbeSide::Minus => f.write_str("minus"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("grid specs do not match")]
    SpecMismatch,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("level set has a single sign: {0}")]
    OneSided(String),

    #[error("non-finite energy at the {0} probe point")]
    NonFiniteProbe(ProbeSide),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Pnm(#[from] PnmError),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short stable identifier, used in machine-readable diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "invalid_grid",
            Error::NonFinite(_) => "non_finite",
            Error::SpecMismatch => "spec_mismatch",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::InvalidCurve(_) => "invalid_curve",
            Error::Degenerate(_) => "degenerate",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::OneSided(_) => "one_sided",
            Error::NonFiniteProbe(_) => "non_finite_probe",
            Error::Numerical(_) => "numerical",
            Error::Pnm(e) => e.code(),
            Error::Io(_) => "io",
        }
    }

    /// True for errors caused by bad user input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Numerical(_) | Error::NonFiniteProbe(_) | Error::OneSided(_) | Error::Degenerate(_)
        )
    }
}
