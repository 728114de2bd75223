use thiserror::Error;

/// Errors raised by the analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The antenna configuration violates `N >= r`.
    #[error("base station has {base_antennas} antennas but the terminals have {terminal_antennas} in total")]
    Dimension {
        base_antennas: usize,
        terminal_antennas: usize,
    },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("user index {index} out of range for {users} users")]
    Index { index: usize, users: usize },

    /// Gram matrix too ill-conditioned to invert reliably.
    #[error("Gram matrix is numerically rank deficient (condition number {condition:.3e})")]
    NumericalRank { condition: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate channel: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
