//! Error type shared across the simulator.
//!
//! Config problems are reported before any compute starts; divergence is
//! detected the round it happens and carries enough context (round, node,
//! field) to reproduce it with a short run at the same seed.

use thiserror::Error;

/// Which per-node state vector first went non-finite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateField {
    Iterate,
    Momentum,
    Corrector,
}

impl std::fmt::Display for StateField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StateField::Iterate => write!(f, "iterate"),
            StateField::Momentum => write!(f, "momentum"),
            StateField::Corrector => write!(f, "corrector"),
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    /// A parameter failed validation. The message names the offending field.
    #[error("invalid config: {0}")]
    Config(String),

    /// Gossip requires a connected graph; a positive spectral gap does not
    /// exist otherwise.
    #[error("graph is disconnected ({components} components)")]
    Disconnected { components: usize },

    /// The second-largest eigenvalue modulus is 1 within tolerance, so the
    /// gossip matrix does not average (disconnected or periodic structure).
    #[error("mixing matrix has no spectral gap (|lambda_2| = {lambda})")]
    NoSpectralGap { lambda: f64 },

    /// A state vector went non-finite during a step.
    #[error("diverged at round {round}: non-finite {field} at node {node}")]
    Diverged {
        round: u64,
        node: usize,
        field: StateField,
    },

    /// The quadratic has no unique minimizer (all coefficients zero).
    #[error("degenerate problem: sum of squared coefficients is zero")]
    Degenerate,

    /// Two collections that must agree in length do not.
    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A file or string could not be decoded.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, SimError>;
