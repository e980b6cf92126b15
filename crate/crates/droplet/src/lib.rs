//! Source-type self-similar droplet profiles for the thin-film equation
//! with mobility exponent n in (3/2, 3) and stabilizing gravity.
//!
//! The pipeline has four stages:
//!
//! 1. [`params`]: derived constants (contact-line exponent, indicial roots)
//!    for a given mobility exponent and target mass.
//! 2. [`expansion`]: a graded trivariate power series resolving the
//!    degenerate contact-line behaviour, solved by fixed-point iteration on
//!    the series coefficients ([`triseries`] holds the arithmetic).
//! 3. [`shooter`]: adaptive Runge-Kutta continuation ([`ode`]) from the
//!    series handoff, with nested bisections matching the slope condition
//!    at the symmetry point and the prescribed mass.
//! 4. [`reconstruct`]: undo the rescaling chain, emit the symmetric
//!    droplet and the self-similar space-time solution.

pub mod cli;
pub mod error;
pub mod expansion;
pub mod ode;
pub mod params;
pub mod reconstruct;
pub mod shooter;
pub mod triseries;

pub use error::{Error, Result};
