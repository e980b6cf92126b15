//! Derived constants for the rescaled droplet profile problem.
//!
//! The mobility exponent `n` fixes everything else: the contact-line
//! exponent `nu = 3/n`, the travelling-wave normalization
//! `A = nu (nu - 1) (2 - nu)`, the corrector exponents `alpha < 0 < beta < 1`
//! (the nontrivial roots of the cubic symbol `p`), and the gravity grade
//! `gamma = 2 (1 + nu)`.
//!
//! Two cubic symbols drive the local analysis. `q` is the symbol of the
//! third derivative conjugated by the factor `x^nu`,
//!
//! ```text
//! q(xi) = (xi + nu)(xi + nu - 1)(xi + nu - 2),      q(0) = -A,
//! ```
//!
//! and `p(xi) = q(xi) - (n - 1) A` is the symbol of the linearization about
//! the travelling wave. `p` factors as `(xi + 1)(xi - alpha)(xi - beta)`.

use crate::error::{Error, Result};

/// Admissible open range for the mobility exponent.
pub const N_MIN: f64 = 1.5;
pub const N_MAX: f64 = 3.0;

#[derive(Debug, Clone, Copy)]
pub struct Params {
    /// Mobility exponent, in (3/2, 3).
    pub n: f64,
    /// Contact-line exponent nu = 3/n, in (1, 2).
    pub nu: f64,
    /// Travelling-wave normalization A = nu (nu - 1) (2 - nu) > 0.
    pub big_a: f64,
    /// Negative root of p, in (-2, 0).
    pub alpha: f64,
    /// Small positive root of p, in (0, 1).
    pub beta: f64,
    /// Grade of the gravity perturbation, gamma = 2 (1 + nu) in (4, 6).
    pub gamma: f64,
    /// Prescribed droplet mass, > 0.
    pub mass_target: f64,
}

impl Params {
    /// Derives all constants from the mobility exponent and prescribed mass.
    pub fn new(n: f64, mass: f64) -> Result<Params> {
        if !n.is_finite() || n <= N_MIN || n >= N_MAX {
            return Err(Error::Domain(format!(
                "mobility exponent n must lie strictly between {N_MIN} and {N_MAX}, got {n}"
            )));
        }
        if !mass.is_finite() || mass <= 0.0 {
            return Err(Error::Domain(format!("mass must be positive, got {mass}")));
        }
        let nu = 3.0 / n;
        let big_a = nu * (nu - 1.0) * (2.0 - nu);
        // Discriminant of p / (xi + 1); positive throughout nu in (1, 2).
        let disc = -3.0 * nu * nu + 12.0 * nu - 8.0;
        debug_assert!(disc > 0.0);
        let root = disc.sqrt();
        let beta = (root - 3.0 * nu + 4.0) / 2.0;
        let alpha = (-root - 3.0 * nu + 4.0) / 2.0;
        let gamma = 2.0 * (1.0 + nu);
        Ok(Params {
            n,
            nu,
            big_a,
            alpha,
            beta,
            gamma,
            mass_target: mass,
        })
    }

    /// Symbol of the third derivative on x^(nu + xi): product form.
    pub fn q(&self, xi: f64) -> f64 {
        (xi + self.nu) * (xi + self.nu - 1.0) * (xi + self.nu - 2.0)
    }

    /// Symbol of the linearization about the travelling wave, factored form.
    ///
    /// Vanishes exactly at -1, `alpha`, and `beta`.
    pub fn p(&self, xi: f64) -> f64 {
        (xi + 1.0) * (xi - self.alpha) * (xi - self.beta)
    }

    /// Same symbol through the expanded cubic; kept as an independent route
    /// for cross-checks and self tests.
    pub fn p_expanded(&self, xi: f64) -> f64 {
        let nu = self.nu;
        xi * xi * xi + 3.0 * (nu - 1.0) * xi * xi + (3.0 * nu * nu - 6.0 * nu + 2.0) * xi
            - 3.0 * (nu - 1.0) * (2.0 - nu)
    }
}
