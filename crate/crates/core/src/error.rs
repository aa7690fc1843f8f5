use std::path::PathBuf;

use thiserror::Error;

use crate::config::ConfigIssue;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid trap configuration: {0}")]
    InvalidTrap(String),

    #[error("equilibrium solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    EquilibriumNotConverged { iterations: usize, residual: f64 },

    #[error(
        "zigzag instability: transverse eigenvalue {eigenvalue:.6e} (units of ω_z²); \
         the chain needs ω_x/ω_z > {critical_anisotropy:.6}"
    )]
    ZigzagInstability { eigenvalue: f64, critical_anisotropy: f64 },

    #[error("invalid pulse: {0}")]
    InvalidPulse(String),

    #[error("detuning lies within {guard_hz} Hz of mode {mode} (separation {separation_hz:.3} Hz)")]
    DegenerateDetuning { mode: usize, separation_hz: f64, guard_hz: f64 },

    #[error("{segments} segments cannot close {modes} modes exactly (need at least {required})")]
    TooFewSegments { segments: usize, modes: usize, required: usize },

    #[error("constraint matrix has full column rank: no closing pulse exists at this detuning")]
    NullSpaceEmpty,

    #[error("entangling phase of the candidate pulse is {chi:.3e}; cannot scale to π/4, try a different detuning")]
    ZeroChi { chi: f64 },

    #[error("simulation dimension {dimension} exceeds the cap of {cap}")]
    DimensionOverflow { dimension: usize, cap: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),

    #[error("post-selection probability {probability:.3e} is too small")]
    PostSelectionVanishing { probability: f64 },

    #[error("configuration rejected:\n{}", format_issues(.0))]
    Config(Vec<ConfigIssue>),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to write {path}: {message}")]
    Output { path: PathBuf, message: String },
}

fn format_issues(issues: &[ConfigIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("  {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Error {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidTrap(_) | Error::InvalidInput(_) | Error::InvalidCircuit(_) => 2,
            Error::InvalidPulse(_)
            | Error::DegenerateDetuning { .. }
            | Error::TooFewSegments { .. }
            | Error::NullSpaceEmpty
            | Error::ZeroChi { .. }
            | Error::ZigzagInstability { .. }
            | Error::PostSelectionVanishing { .. } => 3,
            Error::EquilibriumNotConverged { .. } | Error::DimensionOverflow { .. } => 4,
            Error::Io { .. } | Error::Output { .. } => 1,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }
}
