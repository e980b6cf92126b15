//! Physical droplet reconstruction.
//!
//! The shooting stages work on a rescaled half-profile H on (0, 1]. Undoing
//! the rescaling chain gives the symmetric droplet shape: with half-width
//! `a` determined by the gravity strength,
//!
//! ```text
//! Hcal(a (x - 1)) = (n + 4)^(-1/n) a^(4/n) H(x),
//! ```
//!
//! extended evenly to [-a, a], and the space-time solution follows from the
//! self-similar scaling h(t, z) = t^(-1/(n+4)) Hcal(t^(-1/(n+4)) z).

use crate::error::{Error, Result};
use crate::params::Params;
use crate::shooter::ShootResult;

/// Half-support width for a given gravity strength.
///
/// Inverts `mu = (n + 3) (n + 4)^(-2/n) a^(2 + 8/n)`; strictly increasing
/// in `mu` since the exponent is positive.
pub fn half_width_from_mu(params: &Params, mu: f64) -> Result<f64> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::Domain(format!(
            "gravity strength must be positive, got {mu}"
        )));
    }
    let n = params.n;
    Ok((mu / (n + 3.0) * (n + 4.0).powf(2.0 / n)).powf(n / (2.0 * n + 8.0)))
}

/// Forward map `a -> mu`, the inverse of [`half_width_from_mu`].
pub fn mu_from_half_width(params: &Params, a: f64) -> f64 {
    let n = params.n;
    (n + 3.0) * (n + 4.0).powf(-2.0 / n) * a.powf(2.0 + 8.0 / n)
}

/// Symmetric droplet profile on [-a, a] with a monotone interpolant.
#[derive(Debug, Clone)]
pub struct PhysicalProfile {
    pub n: f64,
    /// Gravity strength the profile was solved at.
    pub mu_bar: f64,
    /// Half-support width.
    pub a: f64,
    /// (y, Hcal(y)) table, ascending in y, even by construction, zero at
    /// both endpoints.
    pub samples: Vec<(f64, f64)>,
    /// Quadrature of the sample table; should reproduce the prescribed mass.
    pub mass_check: f64,
    interp: MonotoneCubic,
}

/// Reconstructs the physical droplet from a converged shooting result.
///
/// The rescaled table maps to the left half y in [-a, 0]; the right half is
/// its bitwise mirror, so even symmetry of the emitted table is exact. Both
/// contact-line samples are pinned to zero. The mass check combines the
/// running-mass value at the first table node (exact for the series region)
/// with a composite trapezoid over the clustered grid.
pub fn physical_profile(params: &Params, shoot: &ShootResult) -> Result<PhysicalProfile> {
    let rows = &shoot.profile;
    let ok = !rows.is_empty()
        && rows.last().map(|r| r.x) == Some(1.0)
        && rows.windows(2).all(|w| w[0].x < w[1].x)
        && rows.iter().all(|r| r.h > 0.0 && r.x > 0.0);
    if !ok {
        return Err(Error::Domain(
            "profile table must be positive, ascending, and end at x = 1".into(),
        ));
    }

    let n = params.n;
    let a = half_width_from_mu(params, shoot.mu)?;
    let scale = (n + 4.0).powf(-1.0 / n) * a.powf(4.0 / n);

    // Left half including the center (x = 1 maps to y = 0 exactly).
    let mut samples = Vec::with_capacity(2 * rows.len() + 1);
    samples.push((-a, 0.0));
    for r in rows {
        samples.push((a * (r.x - 1.0), scale * r.h));
    }
    for (y, h) in samples[1..samples.len() - 1].to_vec().into_iter().rev() {
        samples.push((-y, h));
    }
    samples.push((a, 0.0));

    let head = rows[0].mass;
    let trapezoid: f64 = rows
        .windows(2)
        .map(|w| 0.5 * (w[0].h + w[1].h) * (w[1].x - w[0].x))
        .sum();
    let mass_check = 2.0 * a * scale * (head + trapezoid);

    let interp = MonotoneCubic::new(&samples);
    Ok(PhysicalProfile {
        n,
        mu_bar: shoot.mu,
        a,
        samples,
        mass_check,
        interp,
    })
}

impl PhysicalProfile {
    /// Interpolated droplet height; zero outside the support.
    pub fn height(&self, y: f64) -> f64 {
        if y.abs() >= self.a {
            0.0
        } else {
            self.interp.eval(y)
        }
    }

    /// Space-time solution h(t, z) through the self-similar scaling.
    pub fn self_similar_height(&self, t: f64, z: f64) -> Result<f64> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("time must be positive, got {t}")));
        }
        let tau = t.powf(-1.0 / (self.n + 4.0));
        Ok(tau * self.height(tau * z))
    }

    /// Support edge at time t, growing like t^(1/(n+4)).
    pub fn support_edge(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("time must be positive, got {t}")));
        }
        Ok(self.a * t.powf(1.0 / (self.n + 4.0)))
    }
}

/// Shape-preserving piecewise-cubic Hermite interpolant. Node derivatives
/// follow the Fritsch-Carlson weighted harmonic mean, which keeps every
/// segment monotone wherever the data are and avoids overshoot near the
/// contact lines.
#[derive(Debug, Clone)]
struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
}

impl MonotoneCubic {
    fn new(samples: &[(f64, f64)]) -> MonotoneCubic {
        let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let ys: Vec<f64> = samples.iter().map(|s| s.1).collect();
        let m = xs.len();
        assert!(m >= 2, "interpolant needs at least two nodes");
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = ys
            .windows(2)
            .zip(&h)
            .map(|(w, &h)| (w[1] - w[0]) / h)
            .collect();

        let mut ds = vec![0.0; m];
        for i in 1..m - 1 {
            if delta[i - 1] * delta[i] > 0.0 {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                ds[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        ds[0] = edge_derivative(h[0], h[1], delta[0], delta[1]);
        ds[m - 1] = edge_derivative(h[m - 2], h[m - 3], delta[m - 2], delta[m - 3]);
        MonotoneCubic { xs, ys, ds }
    }

    fn eval(&self, x: f64) -> f64 {
        let m = self.xs.len();
        // Segment index: the last i with xs[i] <= x, clamped to a valid span.
        let i = self.xs.partition_point(|&t| t <= x).clamp(1, m - 1) - 1;
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[i] + h10 * h * self.ds[i] + h01 * self.ys[i + 1] + h11 * h * self.ds[i + 1]
    }
}

/// One-sided three-point endpoint derivative with the usual shape clamps.
fn edge_derivative(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d * d0 <= 0.0 {
        0.0
    } else if d0 * d1 < 0.0 && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shooter::{output_grid, ProfileSample, ShootResult};
    use std::collections::BTreeMap;

    // Synthetic half-profile x^nu (c - x^2) with c chosen so H'(1) = 0;
    // closed forms for the derivatives and the running mass.
    fn synthetic_result(params: &Params, mu: f64, points: usize) -> ShootResult {
        let nu = params.nu;
        let c = (nu + 2.0) / nu;
        let h = |x: f64| x.powf(nu) * (c - x * x);
        let h1 = |x: f64| nu * c * x.powf(nu - 1.0) - (nu + 2.0) * x.powf(nu + 1.0);
        let mass = |x: f64| c * x.powf(nu + 1.0) / (nu + 1.0) - x.powf(nu + 3.0) / (nu + 3.0);
        let profile: Vec<ProfileSample> = output_grid(points)
            .into_iter()
            .map(|x| ProfileSample {
                x,
                h: h(x),
                h1: h1(x),
                h2: 0.0,
                h3: 0.0,
                mass: mass(x),
            })
            .collect();
        ShootResult {
            mu,
            b: 0.3,
            mass_integral: mass(1.0),
            hp_at_one: 0.0,
            x_hat: 0.01,
            eps: 0.1,
            profile,
            diagnostics: BTreeMap::new(),
        }
    }

    #[test]
    fn half_width_round_trips_and_matches_the_closed_form() {
        let params = Params::new(2.0, 1.0).unwrap();
        for mu in [1e-3, 1.0, 5.0, 72.5] {
            let a = half_width_from_mu(&params, mu).unwrap();
            let back = mu_from_half_width(&params, a);
            assert!((back - mu).abs() <= 1e-12 * mu);
        }
        let a5 = half_width_from_mu(&params, 5.0).unwrap();
        assert!((a5 - 6.0f64.powf(1.0 / 6.0)).abs() < 1e-12);
        assert!((a5 - 1.348006).abs() < 1e-6);
        assert!(half_width_from_mu(&params, 0.0).is_err());
    }

    #[test]
    fn half_width_increases_with_gravity_strength() {
        let params = Params::new(1.8, 1.0).unwrap();
        let mut prev = 0.0;
        for i in 0..20 {
            let a = half_width_from_mu(&params, 10f64.powi(i - 10)).unwrap();
            assert!(a > prev);
            prev = a;
        }
    }

    #[test]
    fn table_is_bitwise_even_with_pinned_contact_lines() {
        let params = Params::new(2.0, 1.0).unwrap();
        let shoot = synthetic_result(&params, 5.0, 512);
        let prof = physical_profile(&params, &shoot).unwrap();
        let s = &prof.samples;
        let m = s.len();
        assert_eq!(m, 2 * shoot.profile.len() + 1);
        assert_eq!(s[0], (-prof.a, 0.0));
        assert_eq!(s[m - 1], (prof.a, 0.0));
        for k in 0..m {
            let (y, v) = s[k];
            let (ym, vm) = s[m - 1 - k];
            // The center abscissa mirrors onto itself as +-0.0.
            assert_eq!(y, -ym);
            assert_eq!(v.to_bits(), vm.to_bits());
        }
        assert!(s.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn rescaling_chain_round_trips_at_the_nodes() {
        let params = Params::new(2.5, 1.0).unwrap();
        let shoot = synthetic_result(&params, 2.0, 256);
        let prof = physical_profile(&params, &shoot).unwrap();
        let n = params.n;
        let back = (n + 4.0).powf(1.0 / n) * prof.a.powf(-4.0 / n);
        for (r, s) in shoot.profile.iter().zip(prof.samples[1..].iter()) {
            assert!((s.0 - prof.a * (r.x - 1.0)).abs() <= 1e-15 * prof.a);
            let recovered = back * s.1;
            assert!((recovered - r.h).abs() <= 1e-12 * r.h.max(1e-30));
        }
    }

    #[test]
    fn mass_check_matches_the_analytic_integral() {
        let params = Params::new(2.0, 1.0).unwrap();
        let shoot = synthetic_result(&params, 5.0, 1024);
        let prof = physical_profile(&params, &shoot).unwrap();
        let scale = (params.n + 4.0).powf(-1.0 / params.n) * prof.a.powf(4.0 / params.n);
        let exact = 2.0 * prof.a * scale * shoot.mass_integral;
        assert!(
            (prof.mass_check - exact).abs() <= 1e-4 * exact,
            "mass_check {} vs exact {exact}",
            prof.mass_check
        );
    }

    #[test]
    fn interpolant_is_even_spirited_and_vanishes_outside_the_support() {
        let params = Params::new(2.0, 1.0).unwrap();
        let shoot = synthetic_result(&params, 5.0, 512);
        let prof = physical_profile(&params, &shoot).unwrap();
        assert_eq!(prof.height(prof.a), 0.0);
        assert_eq!(prof.height(-prof.a - 0.5), 0.0);
        assert_eq!(prof.height(prof.a * 2.0), 0.0);
        for k in 1..40 {
            let y = prof.a * (f64::from(k) / 41.0);
            let diff = (prof.height(y) - prof.height(-y)).abs();
            assert!(diff <= 1e-12 * prof.height(0.0));
        }
        // Between nodes the interpolant tracks the synthetic closed form.
        let nu = params.nu;
        let c = (nu + 2.0) / nu;
        let scale = (params.n + 4.0).powf(-1.0 / params.n) * prof.a.powf(4.0 / params.n);
        for k in 1..60 {
            let y = -prof.a + prof.a * (f64::from(k) / 60.5);
            let x = 1.0 + y / prof.a;
            let exact = scale * x.powf(nu) * (c - x * x);
            assert!(
                (prof.height(y) - exact).abs() <= 1e-5 * prof.height(0.0),
                "interp off at y = {y}"
            );
        }
    }

    #[test]
    fn center_is_flat_in_the_one_sided_sense() {
        let params = Params::new(2.0, 1.0).unwrap();
        let shoot = synthetic_result(&params, 5.0, 1024);
        let prof = physical_profile(&params, &shoot).unwrap();
        let mid = prof.samples.len() / 2;
        let (y0, v0) = prof.samples[mid];
        let (y1, v1) = prof.samples[mid + 1];
        assert_eq!(y0, 0.0);
        let slope = (v1 - v0) / (y1 - y0);
        assert!(slope.abs() <= 1e-4 * v0, "one-sided slope {slope}");
    }

    #[test]
    fn space_time_solution_scales_spreads_and_conserves_edges() {
        let params = Params::new(2.0, 1.0).unwrap();
        let shoot = synthetic_result(&params, 5.0, 512);
        let prof = physical_profile(&params, &shoot).unwrap();

        assert!(prof.self_similar_height(0.0, 0.1).is_err());
        assert!(prof.self_similar_height(-1.0, 0.1).is_err());

        // t = 1 reduces to the profile itself.
        for y in [-0.9, -0.3, 0.0, 0.55] {
            let z = y * prof.a;
            assert_eq!(prof.self_similar_height(1.0, z).unwrap(), prof.height(z));
        }

        // Peak height decays like t^(-1/(n+4)).
        let peak = |t: f64| prof.self_similar_height(t, 0.0).unwrap();
        assert!(peak(0.5) > peak(1.0) && peak(1.0) > peak(2.0));
        let expect = 2.0f64.powf(-1.0 / (params.n + 4.0)) * peak(1.0);
        assert!((peak(2.0) - expect).abs() <= 1e-12 * expect);

        // Height vanishes at the moving support edge.
        for t in [0.5, 1.0, 2.0] {
            let edge = prof.support_edge(t).unwrap();
            assert_eq!(prof.self_similar_height(t, edge).unwrap(), 0.0);
            assert_eq!(prof.self_similar_height(t, -edge).unwrap(), 0.0);
            assert!(prof.self_similar_height(t, 0.9 * edge).unwrap() > 0.0);
        }
    }

    #[test]
    fn rejects_malformed_tables() {
        let params = Params::new(2.0, 1.0).unwrap();
        let mut shoot = synthetic_result(&params, 5.0, 64);
        shoot.profile.pop();
        assert!(physical_profile(&params, &shoot).is_err());
        let mut empty = synthetic_result(&params, 5.0, 64);
        empty.profile.clear();
        assert!(physical_profile(&params, &empty).is_err());
    }
}
