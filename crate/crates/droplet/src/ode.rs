//! Adaptive embedded Runge-Kutta integration with dense output.
//!
//! A single explicit 5(4) pair drives every initial-value problem in the
//! crate: the droplet profile system and the randomized comparison systems
//! used by the test suite. Step size is controlled so the weighted RMS of
//! the embedded error estimate stays below one, with weights
//! `atol + rtol * max(|y|, |y_new|)` per component.
//!
//! Each accepted step hands the caller a quartic interpolant over the step
//! interval. Event location (vanishing slope, touchdown) happens outside,
//! by bisection on that interpolant, so the stepper itself stays generic.

use crate::error::{Error, Result};

pub trait OdeSystem<const N: usize> {
    fn rhs(&self, x: f64, y: &[f64; N], dydx: &mut [f64; N]);
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Difference between the fifth- and fourth-order solutions.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Dense-output weights for the quartic interpolant.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;

#[derive(Debug, Clone, Copy)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Dopri5 {
    pub fn new(rtol: f64, atol: f64) -> Dopri5 {
        Dopri5 {
            rtol,
            atol,
            max_steps: 2_000_000,
        }
    }
}

/// Interpolant over one accepted step `[x0, x0 + h]`.
#[derive(Debug, Clone)]
pub struct DenseStep<const N: usize> {
    pub x0: f64,
    pub h: f64,
    cont: [[f64; N]; 5],
}

impl<const N: usize> DenseStep<N> {
    pub fn x1(&self) -> f64 {
        self.x0 + self.h
    }

    /// Evaluates the interpolant at `x`, clamped to the step interval.
    pub fn eval(&self, x: f64) -> [f64; N] {
        let theta = ((x - self.x0) / self.h).clamp(0.0, 1.0);
        let theta1 = 1.0 - theta;
        let mut y = [0.0; N];
        for i in 0..N {
            y[i] = self.cont[0][i]
                + theta
                    * (self.cont[1][i]
                        + theta1
                            * (self.cont[2][i]
                                + theta * (self.cont[3][i] + theta1 * self.cont[4][i])));
        }
        y
    }
}

/// Whether to keep stepping after an accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepFlow {
    Continue,
    Halt,
}

/// Terminal state of a forward integration.
#[derive(Debug, Clone)]
pub enum IntegrationEnd<const N: usize> {
    /// Reached `x_end`; `y` is the exact final step value.
    Reached { y: [f64; N] },
    /// The step handler requested a stop after the step ending at `x`.
    Halted { x: f64, y: [f64; N] },
    /// The controller drove the step below floating-point resolution.
    StepUnderflow { x: f64, y: [f64; N] },
}

/// One trial step's products.
struct Attempt<const N: usize> {
    y_new: [f64; N],
    k7: [f64; N],
    err: f64,
    dense: DenseStep<N>,
}

impl Dopri5 {
    /// Integrates from `x0` to `x_end > x0`, invoking `on_step` after every
    /// accepted step with the dense interpolant and the step-end state.
    pub fn integrate<const N: usize, S, F>(
        &self,
        sys: &S,
        x0: f64,
        y0: [f64; N],
        x_end: f64,
        mut on_step: F,
    ) -> Result<IntegrationEnd<N>>
    where
        S: OdeSystem<N>,
        F: FnMut(&DenseStep<N>, &[f64; N]) -> StepFlow,
    {
        if !(x_end > x0) || !x0.is_finite() || !x_end.is_finite() {
            return Err(Error::Integration(format!(
                "integration interval is empty or invalid: [{x0}, {x_end}]"
            )));
        }
        let mut x = x0;
        let mut y = y0;
        let mut k1 = [0.0; N];
        sys.rhs(x, &y, &mut k1);
        let mut h = self.initial_step(&y, &k1, x_end - x0);
        let mut rejected_last = false;

        for _ in 0..self.max_steps {
            if x + h >= x_end {
                h = x_end - x;
            }
            if x + h <= x {
                return Ok(IntegrationEnd::StepUnderflow { x, y });
            }

            let trial = self.attempt(sys, x, &y, &k1, h);

            if trial.err <= 1.0 {
                x += h;
                y = trial.y_new;
                k1 = trial.k7;
                let cap = if rejected_last { 1.0 } else { FAC_MAX };
                h *= (SAFETY * trial.err.powf(-0.2)).clamp(FAC_MIN, cap);
                rejected_last = false;
                if on_step(&trial.dense, &y) == StepFlow::Halt {
                    return Ok(IntegrationEnd::Halted { x, y });
                }
                if x >= x_end {
                    return Ok(IntegrationEnd::Reached { y });
                }
            } else {
                let fac = if trial.err.is_finite() {
                    (SAFETY * trial.err.powf(-0.2)).clamp(FAC_MIN, 1.0)
                } else {
                    FAC_MIN
                };
                h *= fac;
                rejected_last = true;
            }
        }
        Err(Error::Integration(format!(
            "step budget of {} exhausted at x = {x}",
            self.max_steps
        )))
    }

    #[allow(clippy::needless_range_loop)]
    fn attempt<const N: usize, S: OdeSystem<N>>(
        &self,
        sys: &S,
        x: f64,
        y: &[f64; N],
        k1: &[f64; N],
        h: f64,
    ) -> Attempt<N> {
        let mut k2 = [0.0; N];
        let mut k3 = [0.0; N];
        let mut k4 = [0.0; N];
        let mut k5 = [0.0; N];
        let mut k6 = [0.0; N];
        let mut k7 = [0.0; N];
        let mut tmp = [0.0; N];

        for i in 0..N {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        sys.rhs(x + C2 * h, &tmp, &mut k2);
        for i in 0..N {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        sys.rhs(x + C3 * h, &tmp, &mut k3);
        for i in 0..N {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        sys.rhs(x + C4 * h, &tmp, &mut k4);
        for i in 0..N {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        sys.rhs(x + C5 * h, &tmp, &mut k5);
        for i in 0..N {
            tmp[i] =
                y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        sys.rhs(x + h, &tmp, &mut k6);

        let mut y_new = [0.0; N];
        for i in 0..N {
            y_new[i] = y[i]
                + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        sys.rhs(x + h, &y_new, &mut k7);

        let mut err_sq = 0.0;
        for i in 0..N {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
            err_sq += (e / scale) * (e / scale);
        }
        let mut err = (err_sq / N as f64).sqrt();
        if !err.is_finite() {
            err = f64::INFINITY;
        }

        let mut cont = [[0.0; N]; 5];
        for i in 0..N {
            let ydiff = y_new[i] - y[i];
            let bspl = h * k1[i] - ydiff;
            cont[0][i] = y[i];
            cont[1][i] = ydiff;
            cont[2][i] = bspl;
            cont[3][i] = ydiff - h * k7[i] - bspl;
            cont[4][i] = h
                * (D1 * k1[i]
                    + D3 * k3[i]
                    + D4 * k4[i]
                    + D5 * k5[i]
                    + D6 * k6[i]
                    + D7 * k7[i]);
        }

        Attempt {
            y_new,
            k7,
            err,
            dense: DenseStep { x0: x, h, cont },
        }
    }

    /// Crude slope-based first step; the controller corrects it quickly.
    fn initial_step<const N: usize>(&self, y: &[f64; N], f: &[f64; N], span: f64) -> f64 {
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..N {
            let scale = self.atol + self.rtol * y[i].abs();
            d0 += (y[i] / scale) * (y[i] / scale);
            d1 += (f[i] / scale) * (f[i] / scale);
        }
        let d0 = (d0 / N as f64).sqrt();
        let d1 = (d1 / N as f64).sqrt();
        let guess = if d0 < 1e-5 || d1 < 1e-5 || !d1.is_finite() {
            1e-6 * span
        } else {
            0.01 * d0 / d1
        };
        guess.min(span)
    }
}

/// Locates a sign change of `g` within `[dense.x0, dense.x1()]` by bisection.
///
/// `g` maps the interpolated state to the event function. Requires opposite
/// signs (or a zero) at the bracket ends; returns the located abscissa and
/// state once `|g|` falls below `g_tol` or the bracket is exhausted.
pub fn locate_zero<const N: usize>(
    dense: &DenseStep<N>,
    g: impl Fn(&[f64; N]) -> f64,
    g_tol: f64,
) -> (f64, [f64; N]) {
    let mut lo = dense.x0;
    let mut hi = dense.x1();
    let g_lo = g(&dense.eval(lo));
    if g_lo == 0.0 {
        return (lo, dense.eval(lo));
    }
    let rising = g_lo < 0.0;
    let mut best = (hi, dense.eval(hi));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let y = dense.eval(mid);
        let val = g(&y);
        best = (mid, y);
        if val.abs() <= g_tol {
            return best;
        }
        if (val < 0.0) == rising {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    best
}
