//! Truncated trivariate power series over the unfolding coordinates.
//!
//! A profile germ near the contact line is written as a series in three
//! graded variables: `x1 = x` (grade 1), `x2 = b x^beta` (grade `beta`), and
//! `x3 = mu x^gamma` (grade `gamma`). A monomial `x1^k x2^l x3^m` therefore
//! carries the grade `k + beta l + gamma m`, which is its eigenvalue under
//! the graded Euler operator
//!
//! ```text
//! E = x1 d/dx1 + beta x2 d/dx2 + gamma x3 d/dx3.
//! ```
//!
//! Every operator the expansion needs (the two cubic symbols and their
//! inverses) is diagonal on monomials, so a series is just a sparse
//! coefficient map truncated at a fixed total degree `k + l + m <= cutoff`.
//! Storage is a `BTreeMap` keyed by the lexicographic index order, which
//! makes every iteration (and hence every floating-point reduction)
//! deterministic.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::params::Params;

/// Exponents (k, l, m) of a monomial x1^k x2^l x3^m.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex {
    pub k: u32,
    pub l: u32,
    pub m: u32,
}

impl MultiIndex {
    pub fn new(k: u32, l: u32, m: u32) -> MultiIndex {
        MultiIndex { k, l, m }
    }

    /// Eigenvalue under the graded Euler operator.
    pub fn grade(&self, beta: f64, gamma: f64) -> f64 {
        f64::from(self.k) + beta * f64::from(self.l) + gamma * f64::from(self.m)
    }

    pub fn total_degree(&self) -> u32 {
        self.k + self.l + self.m
    }
}

/// Dense multiplication is used while the full index cube fits comfortably
/// in memory; beyond that the map-based fallback kicks in.
const DENSE_CUBE_LIMIT: usize = 1 << 21;

#[derive(Debug, Clone, PartialEq)]
pub struct TriSeries {
    terms: BTreeMap<MultiIndex, f64>,
    cutoff: u32,
}

impl TriSeries {
    pub fn zero(cutoff: u32) -> TriSeries {
        TriSeries {
            terms: BTreeMap::new(),
            cutoff,
        }
    }

    pub fn constant(value: f64, cutoff: u32) -> TriSeries {
        let mut s = TriSeries::zero(cutoff);
        s.set(MultiIndex::new(0, 0, 0), value);
        s
    }

    /// Single-term series. The index must respect the cutoff.
    pub fn monomial(idx: MultiIndex, value: f64, cutoff: u32) -> TriSeries {
        assert!(
            idx.total_degree() <= cutoff,
            "monomial degree {} exceeds cutoff {}",
            idx.total_degree(),
            cutoff
        );
        let mut s = TriSeries::zero(cutoff);
        s.set(idx, value);
        s
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, idx: MultiIndex) -> f64 {
        self.terms.get(&idx).copied().unwrap_or(0.0)
    }

    /// Terms in lexicographic (k, l, m) order; exact zeros are never stored.
    pub fn terms(&self) -> impl Iterator<Item = (MultiIndex, f64)> + '_ {
        self.terms.iter().map(|(&i, &c)| (i, c))
    }

    fn set(&mut self, idx: MultiIndex, value: f64) {
        if value == 0.0 {
            self.terms.remove(&idx);
        } else {
            self.terms.insert(idx, value);
        }
    }

    fn assert_same_cutoff(&self, other: &TriSeries) {
        assert_eq!(
            self.cutoff, other.cutoff,
            "series cutoffs differ: {} vs {}",
            self.cutoff, other.cutoff
        );
    }

    /// Termwise sum. Panics if the cutoffs differ.
    pub fn add(&self, other: &TriSeries) -> TriSeries {
        self.assert_same_cutoff(other);
        let mut out = self.clone();
        for (idx, c) in other.terms() {
            let v = out.coeff(idx) + c;
            out.set(idx, v);
        }
        out
    }

    /// Termwise difference. Panics if the cutoffs differ.
    pub fn sub(&self, other: &TriSeries) -> TriSeries {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, factor: f64) -> TriSeries {
        let mut out = TriSeries::zero(self.cutoff);
        for (idx, c) in self.terms() {
            out.set(idx, c * factor);
        }
        out
    }

    /// Truncated Cauchy product. Panics if the cutoffs differ.
    ///
    /// Index pairs whose summed total degree exceeds the cutoff are dropped;
    /// grades add exactly because indices add componentwise.
    pub fn mul(&self, other: &TriSeries) -> TriSeries {
        self.assert_same_cutoff(other);
        let side = self.cutoff as usize + 1;
        if side.pow(3) <= DENSE_CUBE_LIMIT {
            self.mul_dense(other, side)
        } else {
            self.mul_sparse(other)
        }
    }

    fn mul_dense(&self, other: &TriSeries, side: usize) -> TriSeries {
        let mut cube = vec![0.0f64; side * side * side];
        for (ia, ca) in self.terms() {
            for (ib, cb) in other.terms() {
                if ia.total_degree() + ib.total_degree() > self.cutoff {
                    continue;
                }
                let k = (ia.k + ib.k) as usize;
                let l = (ia.l + ib.l) as usize;
                let m = (ia.m + ib.m) as usize;
                cube[(k * side + l) * side + m] += ca * cb;
            }
        }
        let mut out = TriSeries::zero(self.cutoff);
        for k in 0..side {
            for l in 0..side {
                for m in 0..side {
                    let v = cube[(k * side + l) * side + m];
                    if v != 0.0 {
                        out.set(MultiIndex::new(k as u32, l as u32, m as u32), v);
                    }
                }
            }
        }
        out
    }

    fn mul_sparse(&self, other: &TriSeries) -> TriSeries {
        let mut out = TriSeries::zero(self.cutoff);
        for (ia, ca) in self.terms() {
            for (ib, cb) in other.terms() {
                if ia.total_degree() + ib.total_degree() > self.cutoff {
                    continue;
                }
                let idx = MultiIndex::new(ia.k + ib.k, ia.l + ib.l, ia.m + ib.m);
                let v = out.coeff(idx) + ca * cb;
                out.set(idx, v);
            }
        }
        out
    }

    /// Real binomial power `self^s` for a series with constant term exactly 1.
    ///
    /// Writes `self = 1 + u` and sums `C(s, j) u^j` for `j = 0..=cutoff`;
    /// higher powers of `u` cannot reach any retained index because `u` has
    /// no constant term. For integer `s >= 0` within the cutoff the binomial
    /// weights terminate exactly, so the result matches repeated
    /// multiplication bit for bit.
    pub fn pow_real(&self, s: f64) -> Result<TriSeries> {
        self.pow_real_tail(s, 0)
    }

    /// Binomial power restricted to orders `j >= start` of `u = self - 1`.
    ///
    /// Useful when the leading binomial orders would later be subtracted
    /// again: summing the tail directly skips the cancellation, so the
    /// result at total degree d depends only on coefficients of `u` at
    /// degrees `< d` whenever `start >= 2` (and `<= d` for `start <= 1`).
    pub fn pow_real_tail(&self, s: f64, start: u32) -> Result<TriSeries> {
        let c0 = self.coeff(MultiIndex::new(0, 0, 0));
        if c0 != 1.0 {
            return Err(Error::Domain(format!(
                "binomial power needs constant term exactly 1, got {c0}"
            )));
        }
        let mut u = self.clone();
        u.set(MultiIndex::new(0, 0, 0), 0.0);
        let mut out = TriSeries::zero(self.cutoff);
        if start == 0 {
            out.set(MultiIndex::new(0, 0, 0), 1.0);
        }
        let mut u_pow = TriSeries::constant(1.0, self.cutoff);
        let mut weight = 1.0;
        for j in 1..=self.cutoff {
            weight *= (s - f64::from(j - 1)) / f64::from(j);
            if weight == 0.0 {
                break;
            }
            u_pow = u_pow.mul(&u);
            if u_pow.is_empty() {
                break;
            }
            if j >= start {
                out = out.add(&u_pow.scale(weight));
            }
        }
        Ok(out)
    }

    /// Graded Euler operator plus a constant shift: coefficient at `idx` is
    /// multiplied by `grade(idx) + shift`.
    pub fn apply_euler(&self, params: &Params, shift: f64) -> TriSeries {
        self.apply_diag(|g| g + shift, params)
    }

    /// Third-derivative symbol `q` evaluated at each grade.
    pub fn apply_q(&self, params: &Params) -> TriSeries {
        self.apply_diag(|g| params.q(g), params)
    }

    /// Linearization symbol `p` evaluated at each grade.
    pub fn apply_p(&self, params: &Params) -> TriSeries {
        self.apply_diag(|g| params.p(g), params)
    }

    fn apply_diag(&self, f: impl Fn(f64) -> f64, params: &Params) -> TriSeries {
        let mut out = TriSeries::zero(self.cutoff);
        for (idx, c) in self.terms() {
            out.set(idx, c * f(idx.grade(params.beta, params.gamma)));
        }
        out
    }

    /// Divides every coefficient by `p(grade)`, inverting the linearized
    /// operator on the graded complement of its kernel.
    ///
    /// The constant index (0,0,0) and the kernel index (0,1,0) (where
    /// `p(beta) = 0` exactly) must not carry coefficients; any other index
    /// whose symbol value falls below `resonance_tol` in magnitude is
    /// reported as resonant rather than divided.
    pub fn invert_p(&self, params: &Params, resonance_tol: f64) -> Result<TriSeries> {
        for idx in [MultiIndex::new(0, 0, 0), MultiIndex::new(0, 1, 0)] {
            let c = self.coeff(idx);
            if c != 0.0 {
                return Err(Error::ForbiddenIndex { index: idx, value: c });
            }
        }
        let mut out = TriSeries::zero(self.cutoff);
        for (idx, c) in self.terms() {
            let symbol = params.p(idx.grade(params.beta, params.gamma));
            if symbol.abs() < resonance_tol {
                return Err(Error::Resonance {
                    index: idx,
                    value: symbol,
                });
            }
            out.set(idx, c / symbol);
        }
        Ok(out)
    }

    /// Evaluates the series along the unfolding curve
    /// `(x1, x2, x3) = (x, b x^beta, mu x^gamma)`, i.e. returns
    /// `sum c * b^l * mu^m * x^grade`.
    pub fn eval(&self, params: &Params, x: f64, b: f64, mu: f64) -> f64 {
        let mut acc = 0.0;
        for (idx, c) in self.terms() {
            acc += c
                * b.powi(idx.l as i32)
                * mu.powi(idx.m as i32)
                * x.powf(idx.grade(params.beta, params.gamma));
        }
        acc
    }

    /// Sum of absolute term values on one total-degree shell, evaluated along
    /// the unfolding curve. Used as the truncation-tail estimate.
    pub fn shell_abs(&self, params: &Params, degree: u32, x: f64, b: f64, mu: f64) -> f64 {
        let mut acc = 0.0;
        for (idx, c) in self.terms() {
            if idx.total_degree() != degree {
                continue;
            }
            acc += (c
                * b.powi(idx.l as i32)
                * mu.powi(idx.m as i32)
                * x.powf(idx.grade(params.beta, params.gamma)))
            .abs();
        }
        acc
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms().map(|(_, c)| c.abs()).fold(0.0, f64::max)
    }

    /// One term per line, `k l m coefficient`, in lexicographic index order.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (idx, c) in self.terms() {
            out.push_str(&format!("{} {} {} {}\n", idx.k, idx.l, idx.m, c));
        }
        out
    }
}
