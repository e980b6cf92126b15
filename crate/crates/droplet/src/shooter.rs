//! Two-parameter shooting for the rescaled droplet profile.
//!
//! On `(0, 1]` the profile solves the third-order system
//!
//! ```text
//! H''' = (x - 1) H^(1 - n) + mu H^2 H',
//! ```
//!
//! with the contact-line behaviour fixed by the series expansion. The
//! integration starts from a [`Handoff`] state and carries the running mass
//! as a fourth component, so `y = (H, H', H'', mass)`.
//!
//! Shooting is nested. The inner stage tunes the slope amplitude `b`: the
//! profile loses its monotonicity for large `b`, and a bisection on "does
//! the slope vanish somewhere on `(0, 1]`" pins down the threshold amplitude
//! at which the vanishing point lands exactly on `x = 1`. The outer stage
//! tunes the gravity strength `mu` until the achieved mass matches the
//! prescribed one; the achieved-mass map is continuous in `mu`, vanishes as
//! `mu` goes to zero, and is unbounded, so expanding then bisecting a
//! bracket always works when the target is reachable.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::expansion::{choose_handoff_with, EpsMode, Expansion, Handoff, ProfileSeries};
use crate::ode::{locate_zero, Dopri5, IntegrationEnd, OdeSystem, StepFlow};
use crate::params::Params;

/// Heights at or below this floor count as touchdown.
pub const H_FLOOR: f64 = 1e-12;
/// Bisection target for locating a vanishing slope inside a step.
pub const DERIV_TOL: f64 = 1e-12;
/// Relative width at which parameter bisections stop.
const BRACKET_REL_TOL: f64 = 1e-12;
/// Slope-amplitude cap for the inner bracket expansion.
const B_MAX: f64 = 1e8;
/// Gravity-strength cap for the outer bracket expansion.
const MU_MAX: f64 = 1e12;
/// Gravity-strength floor when the initial guess overshoots the target.
const MU_MIN: f64 = 1e-12;
/// Number of points in the clustered output grid on (0, 1]. Sized so the
/// spacing at the symmetry point, which scales like the inverse square of
/// the count, keeps one-sided difference quotients of the reflected profile
/// well under the flatness the slope condition enforces there.
pub const PROFILE_POINTS: usize = 2048;

/// Stopping and stepping tolerances for the shooting stages.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    /// Acceptable |H'(1)| at the converged slope amplitude.
    pub shoot_tol: f64,
    /// Acceptable relative mass mismatch at the converged gravity strength.
    pub mass_tol: f64,
    pub ode_rtol: f64,
    pub ode_atol: f64,
    /// Smallest |p(grade)| the series inversion will divide by.
    pub resonance_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Tolerances {
        Tolerances {
            shoot_tol: 1e-8,
            mass_tol: 1e-8,
            ode_rtol: 1e-10,
            ode_atol: 1e-12,
            resonance_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub eps_mode: EpsMode,
    pub tol: Tolerances,
}

impl Default for SolveOptions {
    fn default() -> SolveOptions {
        SolveOptions {
            eps_mode: EpsMode::Auto,
            tol: Tolerances::default(),
        }
    }
}

/// Profile state at a single abscissa.
#[derive(Debug, Clone, Copy)]
pub struct ProfileState {
    pub x: f64,
    pub h: f64,
    pub h1: f64,
    pub h2: f64,
    /// Running mass: series mass on (0, x_hat] plus the integral of H since.
    pub mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeKind {
    /// Integrated to x = 1 without an event.
    ReachedOne,
    /// Height fell to the touchdown floor before x = 1.
    TouchedDown,
    /// Slope crossed zero before x = 1 (critical-detection mode only).
    DerivativeVanished,
    /// Step size underflowed. In detection mode this is an upward explosion
    /// (strong gravity, small amplitude); collapses trip the events first.
    BlewUp,
}

#[derive(Debug, Clone, Copy)]
pub struct IntegrationOutcome {
    pub kind: OutcomeKind,
    pub state: ProfileState,
}

/// Sampled row of a profile table.
#[derive(Debug, Clone, Copy)]
pub struct ProfileSample {
    pub x: f64,
    pub h: f64,
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopMode {
    /// Halt at the first vanishing slope or touchdown.
    DetectCritical,
    /// Ignore slope events; only touchdown or x = 1 can end the run.
    RunToOne,
}

struct ProfileRhs {
    n: f64,
    mu: f64,
}

impl OdeSystem<4> for ProfileRhs {
    fn rhs(&self, x: f64, y: &[f64; 4], dydx: &mut [f64; 4]) {
        let h = y[0];
        // Outside the positive cone the equation is meaningless; a NaN here
        // makes the step controller reject and shrink, which either locates
        // the touchdown or ends in a step underflow.
        let h_pow = if h > 0.0 { h.powf(1.0 - self.n) } else { f64::NAN };
        dydx[0] = y[1];
        dydx[1] = y[2];
        dydx[2] = (x - 1.0) * h_pow + self.mu * h * h * y[1];
        dydx[3] = h;
    }
}

fn third_derivative(params: &Params, mu: f64, x: f64, y: &[f64; 4]) -> f64 {
    (x - 1.0) * y[0].powf(1.0 - params.n) + mu * y[0] * y[0] * y[1]
}

fn sample_at(params: &Params, mu: f64, x: f64, y: &[f64; 4]) -> ProfileSample {
    ProfileSample {
        x,
        h: y[0],
        h1: y[1],
        h2: y[2],
        h3: third_derivative(params, mu, x, y),
        mass: y[3],
    }
}

/// Integrates the profile from the handoff state towards x = 1.
pub fn integrate_profile(
    params: &Params,
    start: &Handoff,
    mu: f64,
    mode: StopMode,
    tol: &Tolerances,
) -> Result<IntegrationOutcome> {
    run_profile(params, start, mu, mode, false, tol, None).map(|(outcome, _)| outcome)
}

/// Same integration, additionally sampling the dense output at the given
/// ascending abscissas in `[x_hat, 1]`. Samples past an event are omitted.
pub fn integrate_profile_traced(
    params: &Params,
    start: &Handoff,
    mu: f64,
    mode: StopMode,
    tol: &Tolerances,
    xs: &[f64],
) -> Result<(IntegrationOutcome, Vec<ProfileSample>)> {
    run_profile(params, start, mu, mode, false, tol, Some(xs))
}

fn run_profile(
    params: &Params,
    start: &Handoff,
    mu: f64,
    mode: StopMode,
    escape_cert: bool,
    tol: &Tolerances,
    xs: Option<&[f64]>,
) -> Result<(IntegrationOutcome, Vec<ProfileSample>)> {
    if !(start.x_hat > 0.0 && start.x_hat < 1.0) {
        return Err(Error::Integration(format!(
            "handoff abscissa {} outside (0, 1)",
            start.x_hat
        )));
    }
    if !(start.h > 10.0 * H_FLOOR) {
        return Err(Error::Integration(format!(
            "handoff height {} is not safely above the touchdown floor",
            start.h
        )));
    }
    if let Some(xs) = xs {
        let ascending = xs.windows(2).all(|w| w[0] < w[1]);
        let in_range = xs
            .iter()
            .all(|&x| x >= start.x_hat - 1e-15 && x <= 1.0 + 1e-15);
        if !ascending || !in_range {
            return Err(Error::Integration(
                "trace points must ascend within [x_hat, 1]".into(),
            ));
        }
    }

    let sys = ProfileRhs { n: params.n, mu };
    let solver = Dopri5::new(tol.ode_rtol, tol.ode_atol);
    let y0 = [start.h, start.h1, start.h2, start.mass0];

    let mut samples = Vec::new();
    let mut next = 0usize;
    let mut event: Option<(OutcomeKind, f64, [f64; 4])> = None;

    let end = solver.integrate(&sys, start.x_hat, y0, 1.0, |dense, y_new| {
        let mut cut: Option<(OutcomeKind, f64, [f64; 4])> = None;
        if y_new[0] <= H_FLOOR {
            let (x, y) = locate_zero(dense, |y| y[0] - H_FLOOR, H_FLOOR * 1e-3);
            cut = Some((OutcomeKind::TouchedDown, x, y));
        }
        if mode == StopMode::DetectCritical && y_new[1] <= 0.0 {
            let (x, y) = locate_zero(dense, |y| y[1], DERIV_TOL);
            if cut.as_ref().map_or(true, |c| x < c.1) {
                cut = Some((OutcomeKind::DerivativeVanished, x, y));
            }
        }
        // Monotone-escape certificate, enabled only for amplitude probes:
        // once H' > 0, H'' > 0 and mu H^{n+1} H' > 1 hold at some x > 0, the
        // identity H''' = H^{1-n} [(x-1) + mu H^{n+1} H'] keeps all three
        // strict (each is increasing while they hold), so the slope cannot
        // vanish on the rest of (x, 1]. Halting here spares the probe from
        // chasing the gravity-driven blow-up down to step underflow.
        // Threshold 2 instead of 1 buys margin against rounding.
        if escape_cert
            && cut.is_none()
            && dense.x1() < 1.0
            && y_new[1] > 0.0
            && y_new[2] > 0.0
            && mu * y_new[0].powf(sys.n + 1.0) * y_new[1] > 2.0
        {
            cut = Some((OutcomeKind::BlewUp, dense.x1(), *y_new));
        }
        let boundary = cut.as_ref().map_or(dense.x1(), |c| c.1);
        if let Some(xs) = xs {
            while next < xs.len() && xs[next] <= boundary {
                let y = dense.eval(xs[next]);
                samples.push(sample_at(params, mu, xs[next], &y));
                next += 1;
            }
        }
        match cut {
            Some(c) => {
                event = Some(c);
                StepFlow::Halt
            }
            None => StepFlow::Continue,
        }
    })?;

    let outcome = match end {
        IntegrationEnd::Reached { y } => IntegrationOutcome {
            kind: OutcomeKind::ReachedOne,
            state: ProfileState {
                x: 1.0,
                h: y[0],
                h1: y[1],
                h2: y[2],
                mass: y[3],
            },
        },
        IntegrationEnd::Halted { .. } => {
            let (kind, x, y) = event.expect("halt without a located event");
            IntegrationOutcome {
                kind,
                state: ProfileState {
                    x,
                    h: y[0],
                    h1: y[1],
                    h2: y[2],
                    mass: y[3],
                },
            }
        }
        IntegrationEnd::StepUnderflow { x, y } => IntegrationOutcome {
            kind: OutcomeKind::BlewUp,
            state: ProfileState {
                x,
                h: y[0],
                h1: y[1],
                h2: y[2],
                mass: y[3],
            },
        },
    };
    Ok((outcome, samples))
}

/// Handoff plus critical-detection trace for arbitrary shooting parameters.
///
/// Sample points below the handoff abscissa are evaluated from the series;
/// the rest from the integration's dense output, up to the first event.
pub fn trace_profile(
    params: &Params,
    expansion: &Expansion,
    b: f64,
    mu: f64,
    opts: &SolveOptions,
    xs: &[f64],
) -> Result<(IntegrationOutcome, Vec<ProfileSample>)> {
    let series = ProfileSeries::new(params, expansion);
    let hand = choose_handoff_with(&series, b, mu, opts.eps_mode)?;
    let split = xs.partition_point(|&x| x < hand.x_hat);
    let mut samples: Vec<ProfileSample> = xs[..split]
        .iter()
        .map(|&x| ProfileSample {
            x,
            h: series.h(x, b, mu),
            h1: series.h1(x, b, mu),
            h2: series.h2(x, b, mu),
            h3: series.h3(x, b, mu),
            mass: series.mass0(x, b, mu),
        })
        .collect();
    let (outcome, ode_samples) = integrate_profile_traced(
        params,
        &hand,
        mu,
        StopMode::DetectCritical,
        &opts.tol,
        &xs[split..],
    )?;
    samples.extend(ode_samples);
    Ok((outcome, samples))
}

/// Result of the inner shooting stage.
#[derive(Debug, Clone)]
pub struct CriticalB {
    /// Largest slope amplitude at which the profile still climbs to x = 1.
    pub b: f64,
    /// Final run-to-one integration at that amplitude.
    pub outcome: IntegrationOutcome,
    pub handoff: Handoff,
    /// Number of trial integrations spent.
    pub evaluations: u32,
}

/// Finds the slope amplitude at which H' first vanishes exactly at x = 1.
///
/// The predicate "the slope vanishes somewhere on `(0, 1]`" is monotone in
/// `b` (profiles and all their derivatives decrease pointwise as `b`
/// grows), false at `b = 0`, and true for large `b`, so a doubling search
/// plus bisection brackets the threshold. The returned amplitude is the
/// subcritical bracket end, certified by an event-free integration with
/// `|H'(1)|` at most `shoot_tol`.
pub fn find_critical_b(
    params: &Params,
    expansion: &Expansion,
    mu: f64,
    opts: &SolveOptions,
) -> Result<CriticalB> {
    let series = ProfileSeries::new(params, expansion);
    let evaluations = std::cell::Cell::new(0u32);
    let probe = |b: f64| -> Result<bool> {
        evaluations.set(evaluations.get() + 1);
        let hand = choose_handoff_with(&series, b, mu, opts.eps_mode)?;
        let (out, _) = run_profile(
            params,
            &hand,
            mu,
            StopMode::DetectCritical,
            true,
            &opts.tol,
            None,
        )?;
        Ok(match out.kind {
            OutcomeKind::ReachedOne => out.state.h1 <= 0.0,
            OutcomeKind::DerivativeVanished | OutcomeKind::TouchedDown => true,
            // A certified escape or step underflow is an upward explosion;
            // any collapse would have tripped the slope or touchdown event
            // first. The slope never vanished unless it ended non-positive.
            OutcomeKind::BlewUp => out.state.h1 <= 0.0,
        })
    };

    if probe(0.0)? {
        return Err(Error::Bracket(
            "slope vanishes already at zero amplitude".into(),
        ));
    }
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while !probe(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > B_MAX {
            return Err(Error::Bracket(format!(
                "no critical slope amplitude below {B_MAX}"
            )));
        }
    }
    // The width target and the end-slope certificate form one stopping rule:
    // refine until both hold. H'(1) gets steeper in b as mu grows, so a width
    // that certifies at mu = 1 can miss by orders of magnitude at mu = 1e6;
    // each failed certification tightens the target, down to the f64 floor.
    let mut width = BRACKET_REL_TOL * (1.0 + lo);
    loop {
        while hi - lo > width {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if probe(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let handoff = choose_handoff_with(&series, lo, mu, opts.eps_mode)?;
        let outcome = integrate_profile(params, &handoff, mu, StopMode::RunToOne, &opts.tol)?;
        evaluations.set(evaluations.get() + 1);
        if outcome.kind == OutcomeKind::ReachedOne && outcome.state.h1.abs() <= opts.tol.shoot_tol
        {
            return Ok(CriticalB {
                b: lo,
                outcome,
                handoff,
                evaluations: evaluations.get(),
            });
        }
        let floor = 4.0 * f64::EPSILON * (1.0 + lo);
        if hi - lo <= floor {
            // Trajectories separate from the critical one exponentially in
            // mu, so past some gravity strength no representable amplitude
            // carries the integration to x = 1 within tolerance.
            return Err(match outcome.kind {
                OutcomeKind::ReachedOne => Error::Convergence(format!(
                    "amplitude bracket at the f64 floor still ends with |H'(1)| = {:e} > {:e}",
                    outcome.state.h1.abs(),
                    opts.tol.shoot_tol
                )),
                other => Error::Convergence(format!(
                    "subcritical amplitude {lo} no longer reaches x = 1 ({other:?}); \
                     end-slope shooting is ill-conditioned at mu = {mu:.3e}"
                )),
            });
        }
        width = (width / 16.0).max(floor);
    }
}

/// One point of the achieved-mass map.
#[derive(Debug, Clone)]
pub struct MassPoint {
    pub mu: f64,
    /// Critical slope amplitude at this gravity strength.
    pub b: f64,
    /// Profile mass integral over (0, 1].
    pub integral: f64,
    /// Achieved physical mass `2 sqrt(mu) / sqrt(n + 3) * integral`.
    pub value: f64,
    pub handoff: Handoff,
    pub evaluations: u32,
}

/// Evaluates the achieved mass at one gravity strength.
pub fn mass_map(
    params: &Params,
    expansion: &Expansion,
    mu: f64,
    opts: &SolveOptions,
) -> Result<MassPoint> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::Domain(format!(
            "gravity strength must be positive, got {mu}"
        )));
    }
    let critical = find_critical_b(params, expansion, mu, opts)?;
    let integral = critical.outcome.state.mass;
    let value = 2.0 * mu.sqrt() / (params.n + 3.0).sqrt() * integral;
    Ok(MassPoint {
        mu,
        b: critical.b,
        integral,
        value,
        handoff: critical.handoff,
        evaluations: critical.evaluations,
    })
}

/// Fully resolved droplet profile in rescaled coordinates.
#[derive(Debug, Clone)]
pub struct ShootResult {
    /// Converged gravity strength.
    pub mu: f64,
    /// Converged slope amplitude.
    pub b: f64,
    /// Profile mass integral over (0, 1].
    pub mass_integral: f64,
    pub hp_at_one: f64,
    pub x_hat: f64,
    pub eps: f64,
    /// Table on a grid clustered at both ends of (0, 1].
    pub profile: Vec<ProfileSample>,
    pub diagnostics: BTreeMap<String, f64>,
}

/// Clustered output grid on (0, 1]: images of equispaced angles under the
/// cosine map, so points accumulate at both the contact line and the center.
pub fn output_grid(points: usize) -> Vec<f64> {
    (1..=points)
        .map(|j| (1.0 - (std::f64::consts::PI * j as f64 / points as f64).cos()) / 2.0)
        .collect()
}

/// Outer stage: matches the prescribed mass by tuning the gravity strength.
pub fn solve_mass_condition(
    params: &Params,
    expansion: &Expansion,
    opts: &SolveOptions,
) -> Result<ShootResult> {
    let target = params.mass_target;
    let mut diagnostics = BTreeMap::new();
    let mut mu_evals = 0u32;
    let mut slope_evals = 0u32;

    let eval = |mu: f64, mu_evals: &mut u32, slope_evals: &mut u32| -> Result<MassPoint> {
        let point = mass_map(params, expansion, mu, opts)?;
        *mu_evals += 1;
        *slope_evals += point.evaluations;
        Ok(point)
    };

    // Expand a bracket [lo, hi] with value(lo) < target <= value(hi).
    let first = eval(1.0, &mut mu_evals, &mut slope_evals)?;
    let mut expand_count = 0u32;
    let (mut lo, mut hi) = if first.value < target {
        let mut lo = first;
        loop {
            let mu = lo.mu * 2.0;
            if mu > MU_MAX {
                return Err(Error::UnreachableMass {
                    mu_max: MU_MAX,
                    best: lo.value,
                });
            }
            let point = eval(mu, &mut mu_evals, &mut slope_evals)?;
            diagnostics.insert(format!("mu_expand_{expand_count}"), mu);
            expand_count += 1;
            if point.value >= target {
                break (lo, point);
            }
            lo = point;
        }
    } else {
        let mut hi = first;
        loop {
            let mu = hi.mu / 2.0;
            if mu < MU_MIN {
                return Err(Error::Bracket(format!(
                    "achieved mass stays above the target down to mu = {MU_MIN}"
                )));
            }
            let point = eval(mu, &mut mu_evals, &mut slope_evals)?;
            diagnostics.insert(format!("mu_expand_{expand_count}"), mu);
            expand_count += 1;
            if point.value < target {
                break (point, hi);
            }
            hi = point;
        }
    };

    // Bisect until the achieved mass closes on the target.
    let mut best: Option<MassPoint> = None;
    for _ in 0..200 {
        let mid = 0.5 * (lo.mu + hi.mu);
        if mid <= lo.mu || mid >= hi.mu {
            break;
        }
        let point = eval(mid, &mut mu_evals, &mut slope_evals)?;
        let rel = (point.value - target).abs() / target;
        if rel <= opts.tol.mass_tol {
            best = Some(point);
            break;
        }
        if point.value < target {
            lo = point;
        } else {
            hi = point;
        }
        if hi.mu - lo.mu <= BRACKET_REL_TOL * lo.mu {
            break;
        }
    }
    let point = best.ok_or_else(|| {
        Error::Convergence(format!(
            "mass bisection stalled: bracket [{}, {}] with values [{}, {}] around target {target}",
            lo.mu, hi.mu, lo.value, hi.value
        ))
    })?;

    // Final traced run on the clustered grid.
    let series = ProfileSeries::new(params, expansion);
    let grid = output_grid(PROFILE_POINTS);
    let split = grid.partition_point(|&x| x < point.handoff.x_hat);
    let mut profile: Vec<ProfileSample> = grid[..split]
        .iter()
        .map(|&x| ProfileSample {
            x,
            h: series.h(x, point.b, point.mu),
            h1: series.h1(x, point.b, point.mu),
            h2: series.h2(x, point.b, point.mu),
            h3: series.h3(x, point.b, point.mu),
            mass: series.mass0(x, point.b, point.mu),
        })
        .collect();
    let (outcome, ode_samples) = integrate_profile_traced(
        params,
        &point.handoff,
        point.mu,
        StopMode::RunToOne,
        &opts.tol,
        &grid[split..],
    )?;
    if outcome.kind != OutcomeKind::ReachedOne {
        return Err(Error::Convergence(format!(
            "converged parameters no longer reach x = 1 ({:?})",
            outcome.kind
        )));
    }
    profile.extend(ode_samples);

    let rel_err = (point.value - target).abs() / target;
    diagnostics.insert("mu_evaluations".into(), f64::from(mu_evals));
    diagnostics.insert("slope_evaluations".into(), f64::from(slope_evals));
    diagnostics.insert("mu_bracket_lo".into(), lo.mu);
    diagnostics.insert("mu_bracket_hi".into(), hi.mu);
    diagnostics.insert("mass_rel_error".into(), rel_err);
    diagnostics.insert("mass0".into(), point.handoff.mass0);
    diagnostics.insert("handoff_x".into(), point.handoff.x_hat);
    diagnostics.insert(
        "heuristic_tail_bound".into(),
        point.handoff.tail_bound,
    );

    Ok(ShootResult {
        mu: point.mu,
        b: point.b,
        mass_integral: outcome.state.mass,
        hp_at_one: outcome.state.h1,
        x_hat: point.handoff.x_hat,
        eps: point.handoff.eps,
        profile,
        diagnostics,
    })
}
