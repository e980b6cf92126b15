//! Error taxonomy shared by all solver stages.
//!
//! Every failure carries a stable machine-readable kind string so the CLI
//! can emit structured diagnostics without inspecting variant payloads.

use std::fmt;

use crate::triseries::MultiIndex;

#[derive(Debug)]
pub enum Error {
    /// Input outside the admissible range (bad exponent, nonpositive mass, ...).
    Domain(String),
    /// The cubic symbol is numerically singular at a retained index.
    Resonance { index: MultiIndex, value: f64 },
    /// Nonzero input coefficient at an index the inversion must not touch.
    ForbiddenIndex { index: MultiIndex, value: f64 },
    /// An iteration failed to reach its stationarity or tolerance target.
    Convergence(String),
    /// A sign-change bracket could not be established.
    Bracket(String),
    /// No admissible matching point between series and integrator.
    Handoff(String),
    /// The prescribed mass is not attained within the search cap.
    UnreachableMass { mu_max: f64, best: f64 },
    /// The initial-value integration was driven outside its contract.
    Integration(String),
    Io(std::io::Error),
}

impl Error {
    /// Stable kind tag mirrored into CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Resonance { .. } => "resonance",
            Error::ForbiddenIndex { .. } => "precondition",
            Error::Convergence(_) => "convergence",
            Error::Bracket(_) => "bracket",
            Error::Handoff(_) => "handoff",
            Error::UnreachableMass { .. } => "unreachable-mass",
            Error::Integration(_) => "integration",
            Error::Io(_) => "io",
        }
    }

    /// Process exit status: 2 for usage/domain problems, 3 for numerical ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) => 2,
            _ => 3,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Resonance { index, value } => write!(
                f,
                "resonant index ({}, {}, {}): |p(grade)| = {:e} below tolerance",
                index.k, index.l, index.m, value
            ),
            Error::ForbiddenIndex { index, value } => write!(
                f,
                "nonzero coefficient {value:e} at forbidden index ({}, {}, {})",
                index.k, index.l, index.m
            ),
            Error::Convergence(msg) => write!(f, "convergence failure: {msg}"),
            Error::Bracket(msg) => write!(f, "bracketing failure: {msg}"),
            Error::Handoff(msg) => write!(f, "handoff failure: {msg}"),
            Error::UnreachableMass { mu_max, best } => write!(
                f,
                "mass target unreachable: best value {best} with gravity strength capped at {mu_max}"
            ),
            Error::Integration(msg) => write!(f, "integration error: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
