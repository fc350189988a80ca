//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A sampled realization contained no access points; the caller should
    /// draw a fresh realization.
    #[error("sampled realization is empty (no APs)")]
    EmptyRealization,

    /// A link (or a whole neighborhood) has no usable PHY rate.
    #[error("no link: {0}")]
    NoLink(String),

    /// Configuration violates a documented invariant.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Timing inputs produce a non-positive efficiency denominator.
    #[error("invalid timing inputs: {0}")]
    InvalidTimings(String),

    /// An iterative solver failed to converge (should be unreachable for
    /// monotone fixed points).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The simulator hit a diagnostic guard (stall or event-queue overflow).
    #[error("simulation diagnostic failure: {0}")]
    Diagnostic(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed input file (CSV / config).
    #[error("parse error: {0}")]
    Parse(String),
}
