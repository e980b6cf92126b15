//! Contact-line expansion of the profile and the handoff to the integrator.
//!
//! Near the contact line the profile is a perturbation of the travelling
//! wave `A^(-nu/3) x^nu`. Factoring the wave off, `H = A^(-nu/3) x^nu (1 + u)`,
//! and unfolding the two shooting parameters into graded coordinates
//! `x2 = b x^beta`, `x3 = mu x^gamma`, turns the profile equation into a
//! fixed-point problem for a trivariate series `u`:
//!
//! ```text
//! u = -x2 + P^(-1) f(u),
//! ```
//!
//! where `P^(-1)` divides each monomial by `p(grade)` and `f` collects the
//! forcing and every nonlinear term. Because each piece of `f` raises total
//! degree by at least one, the iteration fills the coefficient simplex one
//! degree per sweep and becomes stationary, bit for bit, after at most
//! `cutoff` sweeps.
//!
//! The expansion is trusted on `(0, x_hat]` where `x_hat` keeps all three
//! unfolding coordinates below a smallness threshold `eps`. The `Handoff`
//! value packages the profile, its derivatives, and the exact series mass at
//! `x_hat`, ready to seed the initial-value integrator.

use crate::error::{Error, Result};
use crate::params::Params;
use crate::triseries::{MultiIndex, TriSeries};

/// Relative weight the last retained total-degree shell may contribute at
/// the handoff point.
pub const TAIL_TOL: f64 = 1e-10;
/// First smallness threshold tried by automatic handoff selection.
pub const EPS_START: f64 = 0.1;
/// Smallest threshold automatic selection will accept before giving up.
pub const EPS_MIN: f64 = 1e-4;

/// How the smallness threshold for the handoff point is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsMode {
    /// Start at `EPS_START` and halve until the series tail passes `TAIL_TOL`.
    Auto,
    /// Use the given threshold; fail if the tail estimate rejects it.
    Fixed(f64),
}

/// Converged contact-line series together with its defect.
#[derive(Debug, Clone)]
pub struct Expansion {
    /// The corrector `u`; the profile factor is `1 + u`.
    pub series: TriSeries,
    /// Max coefficient of `p(E) u - f(u)` over all retained indices.
    pub residual_norm: f64,
    /// Fixed-point sweeps until stationarity.
    pub sweeps: u32,
}

impl Expansion {
    pub fn cutoff(&self) -> u32 {
        self.series.cutoff()
    }
}

/// Forcing side of the fixed-point equation.
///
/// Four groups: the linear drive `A x1`; the binomial remainder
/// `A [(1+u)^(n-1) - 1 - (n-1) u]` (order u^2); the commutator term
/// `-[(1+u)^(n-1) - 1] q(E) u`; and the gravity term
/// `A^(-2 nu / 3) x3 (1+u)^(n+1) (E + nu)(1 + u)`.
///
/// Every group either vanishes to second order in `u` or carries an explicit
/// factor `x1` or `x3`, so the coefficient of `f(u)` at total degree `d`
/// depends on `u` only below degree `d`. That triangularity is what makes
/// the fixed point converge exactly, and it must hold in floating point,
/// not merely after algebraic cancellation: the binomial remainder is
/// therefore summed from order u^2 outright instead of subtracting the
/// linear term afterwards, whose rounding would leak the degree-d
/// coefficient of `u` into the degree-d output. By the same structure the
/// output never carries the constant index or the bare `x2` index.
pub fn forcing(params: &Params, u: &TriSeries) -> Result<TriSeries> {
    let cutoff = u.cutoff();
    let a = params.big_a;
    let one = TriSeries::constant(1.0, cutoff);
    let f = one.add(u);

    // Binomial orders >= 2, >= 1, and the full power, built without
    // cancellations: each add only appends lower-order information.
    let tail2 = f.pow_real_tail(params.n - 1.0, 2)?;
    let tail1 = tail2.add(&u.scale(params.n - 1.0));
    let pow_nm1 = tail1.add(&one);
    // (1+u)^(n+1) = (1+u)^(n-1) * (1+u)^2, exactly.
    let pow_np1 = pow_nm1.mul(&f).mul(&f);

    let drive = TriSeries::monomial(MultiIndex::new(1, 0, 0), a, cutoff);

    let remainder = tail2.scale(a);

    let commutator = tail1.mul(&u.apply_q(params)).scale(-1.0);

    let gravity_weight = a.powf(-2.0 * params.nu / 3.0);
    let x3 = TriSeries::monomial(MultiIndex::new(0, 0, 1), 1.0, cutoff);
    let gravity = x3
        .mul(&pow_np1.mul(&f.apply_euler(params, params.nu)))
        .scale(gravity_weight);

    Ok(drive.add(&remainder).add(&commutator).add(&gravity))
}

/// Runs the fixed point `u <- -x2 + P^(-1) f(u)` from `u = -x2` until the
/// coefficient map repeats exactly.
pub fn compute_expansion(params: &Params, cutoff: u32, resonance_tol: f64) -> Result<Expansion> {
    if cutoff < 1 {
        return Err(Error::Domain(format!(
            "expansion cutoff must be at least 1, got {cutoff}"
        )));
    }
    let minus_x2 = TriSeries::monomial(MultiIndex::new(0, 1, 0), -1.0, cutoff);
    let mut u = minus_x2.clone();
    let mut sweeps = 0;
    let mut stationary = false;
    // One sweep per total degree plus one to observe stationarity.
    for _ in 0..=cutoff + 1 {
        sweeps += 1;
        let f = forcing(params, &u)?;
        let next = minus_x2.add(&f.invert_p(params, resonance_tol)?);
        if next == u {
            stationary = true;
            break;
        }
        u = next;
    }
    if !stationary {
        return Err(Error::Convergence(format!(
            "expansion not stationary after {sweeps} sweeps at cutoff {cutoff}"
        )));
    }
    let residual_norm = u.apply_p(params).sub(&forcing(params, &u)?).max_abs_coeff();
    Ok(Expansion {
        series: u,
        residual_norm,
        sweeps,
    })
}

/// Evaluator for the profile and its first three derivatives on the series
/// side of the handoff.
///
/// With `F = 1 + u` and the commutation rule
/// `d^k/dx^k (x^nu v) = x^(nu-k) (E + nu) (E + nu - 1) ... (E + nu - k + 1) v`,
/// each derivative is one more Euler factor applied to `F`:
///
/// ```text
/// H    = A^(-nu/3) x^nu      F
/// H'   = A^(-nu/3) x^(nu-1) (E + nu) F
/// H''  = A^(-nu/3) x^(nu-2) (E + nu - 1)(E + nu) F
/// H''' = A^(-nu/3) x^(nu-3)  q(E) F
/// ```
#[derive(Debug, Clone)]
pub struct ProfileSeries<'a> {
    params: &'a Params,
    prefactor: f64,
    f: TriSeries,
    d1: TriSeries,
    d2: TriSeries,
    d3: TriSeries,
}

impl<'a> ProfileSeries<'a> {
    pub fn new(params: &'a Params, expansion: &Expansion) -> ProfileSeries<'a> {
        let one = TriSeries::constant(1.0, expansion.cutoff());
        let f = one.add(&expansion.series);
        let d1 = f.apply_euler(params, params.nu);
        let d2 = d1.apply_euler(params, params.nu - 1.0);
        let d3 = d2.apply_euler(params, params.nu - 2.0);
        ProfileSeries {
            params,
            prefactor: params.big_a.powf(-params.nu / 3.0),
            f,
            d1,
            d2,
            d3,
        }
    }

    pub fn params(&self) -> &Params {
        self.params
    }

    pub fn h(&self, x: f64, b: f64, mu: f64) -> f64 {
        self.prefactor * x.powf(self.params.nu) * self.f.eval(self.params, x, b, mu)
    }

    pub fn h1(&self, x: f64, b: f64, mu: f64) -> f64 {
        self.prefactor * x.powf(self.params.nu - 1.0) * self.d1.eval(self.params, x, b, mu)
    }

    pub fn h2(&self, x: f64, b: f64, mu: f64) -> f64 {
        self.prefactor * x.powf(self.params.nu - 2.0) * self.d2.eval(self.params, x, b, mu)
    }

    pub fn h3(&self, x: f64, b: f64, mu: f64) -> f64 {
        self.prefactor * x.powf(self.params.nu - 3.0) * self.d3.eval(self.params, x, b, mu)
    }

    /// Exact termwise mass integral over `(0, x]`:
    /// each monomial contributes `c b^l mu^m x^(nu + grade + 1) / (nu + grade + 1)`.
    pub fn mass0(&self, x: f64, b: f64, mu: f64) -> f64 {
        let nu = self.params.nu;
        let mut acc = 0.0;
        for (idx, c) in self.f.terms() {
            let grade = idx.grade(self.params.beta, self.params.gamma);
            acc += c
                * b.powi(idx.l as i32)
                * mu.powi(idx.m as i32)
                * x.powf(nu + grade + 1.0)
                / (nu + grade + 1.0);
        }
        self.prefactor * acc
    }

    /// Tail estimate: absolute contribution of the last retained
    /// total-degree shell, relative to the profile factor.
    fn tail_ratio(&self, x: f64, b: f64, mu: f64) -> f64 {
        let cutoff = self.f.cutoff();
        let shell = self.f.shell_abs(self.params, cutoff, x, b, mu);
        let value = self.f.eval(self.params, x, b, mu).abs();
        shell / value.max(1.0)
    }
}

/// State handed from the series to the initial-value integrator.
#[derive(Debug, Clone, Copy)]
pub struct Handoff {
    pub x_hat: f64,
    pub h: f64,
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
    /// Series mass over (0, x_hat].
    pub mass0: f64,
    /// Smallness threshold that produced x_hat.
    pub eps: f64,
    /// Relative weight of the last retained total-degree shell at x_hat.
    /// Heuristic stand-in for the (unquantified) truncation error.
    pub tail_bound: f64,
}

/// Largest abscissa at which all three unfolding coordinates stay small:
/// `x <= eps^2`, `b x^beta <= eps`, and `mu x^gamma <= eps^2`.
pub fn x_hat_limit(params: &Params, eps: f64, b: f64, mu: f64) -> f64 {
    let mut cap = eps * eps;
    if b > 0.0 {
        cap = cap.min((eps / b).powf(1.0 / params.beta));
    }
    cap = cap.min((eps * eps / mu).powf(1.0 / params.gamma));
    cap
}

/// Evaluates the handoff state at a caller-chosen abscissa, without any
/// tail admissibility check.
pub fn handoff_at(series: &ProfileSeries<'_>, b: f64, mu: f64, x_hat: f64, eps: f64) -> Handoff {
    Handoff {
        x_hat,
        h: series.h(x_hat, b, mu),
        h1: series.h1(x_hat, b, mu),
        h2: series.h2(x_hat, b, mu),
        h3: series.h3(x_hat, b, mu),
        mass0: series.mass0(x_hat, b, mu),
        eps,
        tail_bound: series.tail_ratio(x_hat, b, mu),
    }
}

/// Chooses the handoff point for the given shooting parameters.
///
/// The threshold `eps` is accepted once the last total-degree shell of the
/// series contributes less than `TAIL_TOL` relatively at `x_hat`; in
/// automatic mode `eps` is halved until that holds or `EPS_MIN` is reached.
pub fn choose_handoff(
    params: &Params,
    expansion: &Expansion,
    b: f64,
    mu: f64,
    eps_mode: EpsMode,
) -> Result<Handoff> {
    let series = ProfileSeries::new(params, expansion);
    choose_handoff_with(&series, b, mu, eps_mode)
}

/// Same as [`choose_handoff`] but reuses a prebuilt evaluator; this is the
/// hot path inside the shooting loops.
pub fn choose_handoff_with(
    series: &ProfileSeries<'_>,
    b: f64,
    mu: f64,
    eps_mode: EpsMode,
) -> Result<Handoff> {
    let params = series.params;
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::Domain(format!(
            "handoff needs a positive gravity strength, got {mu}"
        )));
    }
    if b < 0.0 || !b.is_finite() {
        return Err(Error::Domain(format!(
            "handoff needs a nonnegative slope amplitude, got {b}"
        )));
    }
    let mut eps = match eps_mode {
        EpsMode::Auto => EPS_START,
        EpsMode::Fixed(e) => {
            if !(e > 0.0) || e >= 1.0 {
                return Err(Error::Domain(format!(
                    "fixed handoff threshold must lie in (0, 1), got {e}"
                )));
            }
            e
        }
    };
    loop {
        let x_hat = x_hat_limit(params, eps, b, mu);
        if !x_hat.is_finite() || x_hat <= 0.0 {
            return Err(Error::Handoff(format!(
                "handoff abscissa degenerated to {x_hat} at eps {eps}"
            )));
        }
        let tail = series.tail_ratio(x_hat, b, mu);
        if tail <= TAIL_TOL {
            let state = handoff_at(series, b, mu, x_hat, eps);
            if !(state.h > 0.0 && state.h1 > 0.0) {
                return Err(Error::Handoff(format!(
                    "series profile not increasing at x_hat = {x_hat}: H = {}, H' = {}",
                    state.h, state.h1
                )));
            }
            return Ok(state);
        }
        match eps_mode {
            EpsMode::Fixed(_) => {
                return Err(Error::Handoff(format!(
                    "series tail {tail:e} exceeds {TAIL_TOL:e} at x_hat = {x_hat}; decrease eps or raise the cutoff"
                )));
            }
            EpsMode::Auto => {
                eps /= 2.0;
                if eps < EPS_MIN {
                    return Err(Error::Handoff(format!(
                        "no admissible handoff above eps = {EPS_MIN}; raise the cutoff"
                    )));
                }
            }
        }
    }
}
