//! The auxiliary profile functions used by the stabilization perturbation.
//!
//! `Phi` interpolates between `t^2` near the origin and `-t^2` far out with a
//! single interior critical point `t0`; `Psi` is a C² plateau that is 1 near
//! `t0` and 0 outside the blend region. Both are assembled from the quintic
//! blend `B(s) = 6s^5 - 15s^4 + 10s^3`, which has `B = B' = B'' = 0` at
//! `s = 0` and `B = 1`, `B' = B'' = 0` at `s = 1`, so every junction is C².

use crate::error::{Error, Result};
use crate::geometry::jet::Uni;

/// Grid resolution used when counting sign changes of `Phi'`.
const T0_SCAN_POINTS: usize = 10_000;
const T0_BISECT_ITERS: usize = 200;

/// Blend polynomial on `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Blend {
    /// `6s^5 - 15s^4 + 10s^3`, the profile plotted in the construction.
    Quintic,
    /// Deliberately bad blend with interior wiggles; only reachable through
    /// the test constructor, used to exercise the profile validation path.
    #[doc(hidden)]
    Wiggle,
}

impl Blend {
    fn eval(&self, s: f64) -> Uni {
        match self {
            Blend::Quintic => {
                let s2 = s * s;
                let s3 = s2 * s;
                Uni::new(
                    10.0 * s3 - 15.0 * s2 * s2 + 6.0 * s2 * s3,
                    30.0 * s2 - 60.0 * s3 + 30.0 * s2 * s2,
                    60.0 * s - 180.0 * s2 + 120.0 * s3,
                )
            }
            Blend::Wiggle => {
                let w = (3.0 * std::f64::consts::PI * s).sin();
                let dw = 3.0 * std::f64::consts::PI * (3.0 * std::f64::consts::PI * s).cos();
                let d2w = -(3.0 * std::f64::consts::PI).powi(2) * w;
                Uni::new(s + 0.6 * w, 1.0 + 0.6 * dw, 0.6 * d2w)
            }
        }
    }
}

/// Parameters of the auxiliary pair `(Phi_lambda, Psi_delta)`.
#[derive(Clone, Copy, Debug)]
pub struct BumpProfile {
    pub lambda: f64,
    pub delta: f64,
    /// The interior critical point of `Phi`, located at construction time.
    pub t0: f64,
    blend: Blend,
}

impl BumpProfile {
    /// Build a profile, locating `t0` and validating the construction
    /// constraints (`lambda > 0`, `0 < delta < lambda / 4`).
    pub fn new(lambda: f64, delta: f64) -> Result<Self> {
        Self::with_blend(lambda, delta, Blend::Quintic)
    }

    pub fn with_blend(lambda: f64, delta: f64, blend: Blend) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
        }
        if !(delta > 0.0) || delta >= lambda / 4.0 {
            return Err(Error::Config(format!(
                "delta must satisfy 0 < delta < lambda/4, got delta={delta}, lambda={lambda}"
            )));
        }
        let mut profile = BumpProfile {
            lambda,
            delta,
            t0: 0.0,
            blend,
        };
        profile.t0 = profile.locate_t0()?;
        Ok(profile)
    }

    /// `Phi(t)` together with its first two derivatives in `t`. Domain `t >= 0`.
    pub fn phi_jet(&self, t: f64) -> Result<Uni> {
        if t < 0.0 {
            return Err(Error::Stabilize(format!("phi domain error: t = {t} < 0")));
        }
        Ok(self.phi_jet_unchecked(t))
    }

    fn phi_jet_unchecked(&self, t: f64) -> Uni {
        let l = self.lambda;
        if t <= l {
            Uni::new(t * t, 2.0 * t, 2.0)
        } else if t >= 3.0 * l {
            Uni::new(-t * t, -2.0 * t, -2.0)
        } else {
            let s = (t - l) / (2.0 * l);
            let b = self.blend.eval(s);
            let f = 1.0 - 2.0 * b.v;
            let df = -b.d1 / l; // d/dt of (1 - 2 B(s)), ds/dt = 1/(2 lambda)
            let d2f = -b.d2 / (2.0 * l * l);
            Uni::new(
                f * t * t,
                df * t * t + 2.0 * t * f,
                d2f * t * t + 4.0 * t * df + 2.0 * f,
            )
        }
    }

    pub fn phi(&self, t: f64) -> Result<f64> {
        Ok(self.phi_jet(t)?.v)
    }

    pub fn phi_prime(&self, t: f64) -> Result<f64> {
        Ok(self.phi_jet(t)?.d1)
    }

    /// Bisection for the interior critical point of `Phi` on `(lambda, 3 lambda)`.
    ///
    /// Asserts exactly one sign change of `Phi'`, that the root lies in
    /// `(lambda, 2 lambda)` and that a centered second difference there is
    /// negative, per the construction's requirements.
    pub fn locate_t0(&self) -> Result<f64> {
        let l = self.lambda;
        let lo = l * (1.0 + 1e-12);
        let hi = 3.0 * l * (1.0 - 1e-12);
        let n = T0_SCAN_POINTS;
        let mut brackets = Vec::new();
        let mut prev_t = lo;
        let mut prev_v = self.phi_jet_unchecked(prev_t).d1;
        for k in 1..=n {
            let t = lo + (hi - lo) * (k as f64) / (n as f64);
            let v = self.phi_jet_unchecked(t).d1;
            if prev_v == 0.0 || prev_v.signum() != v.signum() {
                brackets.push((prev_t, t));
            }
            prev_t = t;
            prev_v = v;
        }
        if brackets.len() != 1 {
            return Err(Error::Stabilize(format!(
                "profile violates the two-critical-point construction: {} sign changes of phi' on ({lo}, {hi})",
                brackets.len()
            )));
        }
        let (mut a, mut b) = brackets[0];
        let mut fa = self.phi_jet_unchecked(a).d1;
        for _ in 0..T0_BISECT_ITERS {
            let m = 0.5 * (a + b);
            let fm = self.phi_jet_unchecked(m).d1;
            if fm == 0.0 {
                a = m;
                b = m;
                break;
            }
            if fa.signum() == fm.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        let t0 = 0.5 * (a + b);
        if !(t0 > l && t0 < 2.0 * l) {
            return Err(Error::Stabilize(format!(
                "profile violates the construction: t0 = {t0} outside (lambda, 2 lambda)"
            )));
        }
        let h = 1e-6 * l;
        let second = (self.phi_jet_unchecked(t0 + h).v - 2.0 * self.phi_jet_unchecked(t0).v
            + self.phi_jet_unchecked(t0 - h).v)
            / (h * h);
        if !(second < 0.0) {
            return Err(Error::Stabilize(format!(
                "profile violates the construction: Phi''(t0) = {second} not negative"
            )));
        }
        Ok(t0)
    }

    /// `Psi(t)` with first two derivatives: 0 on `[0, lambda - delta]`, a blend
    /// ramp up to 1 on `[lambda - delta, t0 - delta]`, 1 on the plateau
    /// `[t0 - delta, t0 + delta]`, a blend ramp down to 0 on
    /// `[t0 + delta, 3 lambda + delta]`, and 0 beyond.
    pub fn psi_jet(&self, t: f64) -> Result<Uni> {
        if t < 0.0 {
            return Err(Error::Stabilize(format!("psi domain error: t = {t} < 0")));
        }
        Ok(self.psi_jet_unchecked(t))
    }

    fn psi_jet_unchecked(&self, t: f64) -> Uni {
        let (l, d, t0) = (self.lambda, self.delta, self.t0);
        if t <= l - d || t >= 3.0 * l + d {
            Uni::new(0.0, 0.0, 0.0)
        } else if t < t0 - d {
            let w = t0 - l;
            let s = (t - (l - d)) / w;
            let b = self.blend.eval(s);
            Uni::new(b.v, b.d1 / w, b.d2 / (w * w))
        } else if t <= t0 + d {
            Uni::new(1.0, 0.0, 0.0)
        } else {
            let w = 3.0 * l - t0;
            let s = (t - (t0 + d)) / w;
            let b = self.blend.eval(s);
            Uni::new(1.0 - b.v, -b.d1 / w, -b.d2 / (w * w))
        }
    }

    pub fn psi(&self, t: f64) -> Result<f64> {
        Ok(self.psi_jet(t)?.v)
    }

    /// `Phi(sqrt(q))` as a jet in the squared radius `q`. Smooth at `q = 0`
    /// because `Phi(t) = t^2` there.
    pub fn phi_of_sq(&self, q: f64) -> Uni {
        let l = self.lambda;
        if q <= l * l {
            Uni::new(q, 1.0, 0.0)
        } else {
            let t = q.sqrt();
            let p = self.phi_jet_unchecked(t);
            // d/dq = (1 / 2t) d/dt
            Uni::new(
                p.v,
                p.d1 / (2.0 * t),
                (p.d2 - p.d1 / t) / (4.0 * q),
            )
        }
    }

    /// `Psi(sqrt(q))` as a jet in the squared radius `q`; identically zero
    /// near the origin so the composite stays smooth there.
    pub fn psi_of_sq(&self, q: f64) -> Uni {
        let inner = self.lambda - self.delta;
        if q <= inner * inner {
            Uni::new(0.0, 0.0, 0.0)
        } else {
            let t = q.sqrt();
            let p = self.psi_jet_unchecked(t);
            Uni::new(
                p.v,
                p.d1 / (2.0 * t),
                (p.d2 - p.d1 / t) / (4.0 * q),
            )
        }
    }

    /// Support radius of the perturbation in `t`.
    pub fn support_radius(&self) -> f64 {
        3.0 * self.lambda + self.delta
    }
}

/// C² plateau in an auxiliary nonnegative variable `w`: 1 for `w <= lo`,
/// 0 for `w >= hi`, blended in between. Used to cut the local perturbation
/// off in the directions transverse to the stabilized block.
#[derive(Clone, Copy, Debug)]
pub struct Plateau {
    pub lo: f64,
    pub hi: f64,
}

impl Plateau {
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(0.0 < lo && lo < hi);
        Plateau { lo, hi }
    }

    pub fn jet(&self, w: f64) -> Uni {
        if w <= self.lo {
            Uni::new(1.0, 0.0, 0.0)
        } else if w >= self.hi {
            Uni::new(0.0, 0.0, 0.0)
        } else {
            let width = self.hi - self.lo;
            let s = (w - self.lo) / width;
            let b = Blend::Quintic.eval(s);
            Uni::new(1.0 - b.v, -b.d1 / width, -b.d2 / (width * width))
        }
    }
}

/// The function `h` on the small sphere in the unstable slice directions.
///
/// For a 0-sphere (two points swapped by the isotropy group) only a constant
/// is invariant. On a circle the catalogue either uses a constant (the whole
/// circle becomes one critical orbit) or an explicit invariant Morse function
/// `a cos(2 angle)` with minima on the reflection axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SphereFunction {
    Constant(f64),
    CircleCosine { amplitude: f64 },
}

impl SphereFunction {
    /// Indices of the critical components of `h` on the sphere, listed as
    /// (description, index). Used by the index-shift verification.
    pub fn critical_indices(&self) -> Vec<(&'static str, usize)> {
        match self {
            SphereFunction::Constant(_) => vec![("sphere", 0)],
            SphereFunction::CircleCosine { .. } => vec![("minima", 0), ("maxima", 1)],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_matches_quadratic_branches_exactly() {
        let p = BumpProfile::new(1.0, 0.125).unwrap();
        assert_eq!(p.phi(0.5).unwrap(), 0.25);
        assert_eq!(p.phi(3.5).unwrap(), -12.25);
    }

    #[test]
    fn phi_blend_value_matches_direct_polynomial_arithmetic() {
        // Oracle: B(1/4) = 6/4^5 - 15/4^4 + 10/4^3 = 53/512, so
        // Phi(1.5) = (1 - 106/512) * 2.25 = 1827/1024.
        let p = BumpProfile::new(1.0, 0.125).unwrap();
        let expect = 1827.0 / 1024.0;
        assert!((p.phi(1.5).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn t0_lies_in_the_predicted_window_and_scales() {
        let p1 = BumpProfile::new(1.0, 0.125).unwrap();
        assert!(p1.t0 > 1.0 && p1.t0 < 2.0);
        let p01 = BumpProfile::new(0.1, 0.0125).unwrap();
        assert!(p01.t0 > 0.1 && p01.t0 < 0.2);
        // Phi_lambda(lambda s) = lambda^2 Phi_1(s), so t0 scales linearly.
        assert!((p01.t0 - 0.1 * p1.t0).abs() < 1e-9);
        assert_eq!(p1.phi_prime(0.0).unwrap(), 0.0);
    }

    #[test]
    fn psi_plateau_and_support_are_exact() {
        let p = BumpProfile::new(1.0, 0.125).unwrap();
        assert_eq!(p.psi(p.t0).unwrap(), 1.0);
        assert_eq!(p.psi(p.t0 - p.delta).unwrap(), 1.0);
        assert_eq!(p.psi(p.t0 + p.delta).unwrap(), 1.0);
        assert_eq!(p.psi(0.0).unwrap(), 0.0);
        assert_eq!(p.psi(3.0 + p.delta).unwrap(), 0.0);
        assert_eq!(p.psi(0.875).unwrap(), 0.0);
        // Strictly interior ramp value.
        let mid = 0.5 * ((p.lambda - p.delta) + (p.t0 - p.delta));
        let v = p.psi(mid).unwrap();
        assert!(v > 0.0 && v < 1.0);
        // Monotone on the ramp.
        let mut prev = 0.0;
        for k in 0..=20 {
            let t = (p.lambda - p.delta) + (p.t0 - p.lambda) * (k as f64) / 20.0;
            let v = p.psi(t).unwrap();
            assert!(v + 1e-12 >= prev);
            prev = v;
        }
    }

    #[test]
    fn profiles_are_c1_at_every_junction() {
        // The invariant is on the one-sided derivatives themselves: the
        // branch formulas evaluated just left and right of each junction
        // must agree to 1e-9. A second-order finite-difference stencil at
        // step 1e-6 corroborates each side; its tolerance carries the f64
        // rounding floor 8 |f| eps / h of the stencil.
        let fd_side = |f: &dyn Fn(f64) -> f64, t: f64, h: f64, dir: f64| {
            (-3.0 * f(t) + 4.0 * f(t + dir * h) - f(t + 2.0 * dir * h)) / (2.0 * dir * h)
        };
        for lambda in [1.0, 0.1] {
            let p = BumpProfile::new(lambda, lambda / 8.0).unwrap();
            let h = 1e-6;
            let phi = |t: f64| p.phi(t).unwrap();
            let dphi = |t: f64| p.phi_prime(t).unwrap();
            let psi = |t: f64| p.psi(t).unwrap();
            let dpsi = |t: f64| p.psi_jet(t).unwrap().d1;
            let cases: [(&dyn Fn(f64) -> f64, &dyn Fn(f64) -> f64, Vec<f64>); 2] = [
                (&phi, &dphi, vec![p.lambda, 3.0 * p.lambda]),
                (
                    &psi,
                    &dpsi,
                    vec![
                        p.lambda - p.delta,
                        p.t0 - p.delta,
                        p.t0 + p.delta,
                        3.0 * p.lambda + p.delta,
                    ],
                ),
            ];
            for (f, df, junctions) in cases {
                for t in junctions {
                    let left = df(t * (1.0 - 1e-12));
                    let right = df(t * (1.0 + 1e-12));
                    assert!(
                        (left - right).abs() <= 1e-9,
                        "one-sided derivative mismatch at {t}: {left} vs {right}"
                    );
                    let noise = 8.0 * f(t).abs().max(1.0) * f64::EPSILON / h;
                    let fd_l = fd_side(f, t, h, -1.0);
                    let fd_r = fd_side(f, t, h, 1.0);
                    let tol = 1e-5 * (1.0 + left.abs()) + noise;
                    assert!((fd_l - left).abs() <= tol, "left fd {fd_l} vs {left}");
                    assert!((fd_r - right).abs() <= tol, "right fd {fd_r} vs {right}");
                }
            }
        }
    }

    #[test]
    fn phi_has_exactly_two_critical_points_on_the_grid() {
        let p = BumpProfile::new(1.0, 0.125).unwrap();
        // Count zeros of phi' on [0, 4 lambda] over a 10^4-point grid:
        // the zero at t = 0 plus one interior sign change.
        let n = 10_000;
        let mut count = 0;
        let mut prev = p.phi_prime(0.0).unwrap();
        if prev == 0.0 {
            count += 1;
        }
        for k in 1..=n {
            let t = 4.0 * p.lambda * (k as f64) / (n as f64);
            let v = p.phi_prime(t).unwrap();
            if prev.signum() != v.signum() && prev != 0.0 {
                count += 1;
            }
            prev = v;
        }
        assert_eq!(count, 2);
    }

    #[test]
    fn negative_argument_is_a_domain_error() {
        let p = BumpProfile::new(1.0, 0.125).unwrap();
        assert!(p.phi(-0.1).is_err());
        assert!(p.psi(-0.1).is_err());
    }

    #[test]
    fn bad_blend_is_rejected_by_the_construction_check() {
        let r = BumpProfile::with_blend(1.0, 0.125, Blend::Wiggle);
        assert!(r.is_err(), "wiggly blend must violate the construction");
    }

    #[test]
    fn sq_jets_match_direct_evaluation() {
        let p = BumpProfile::new(0.2, 0.025).unwrap();
        for q in [0.0, 0.01, 0.0625, 0.09, 0.16, 0.5] {
            let j = p.phi_of_sq(q);
            assert!((j.v - p.phi(q.sqrt()).unwrap()).abs() < 1e-14);
            let h = 1e-7;
            if q > 1e-3 {
                let fd = (p.phi_of_sq(q + h).v - p.phi_of_sq(q - h).v) / (2.0 * h);
                assert!((j.d1 - fd).abs() < 1e-5, "q={q}: {} vs {}", j.d1, fd);
                let fd2 = (p.psi_of_sq(q + h).v - p.psi_of_sq(q - h).v) / (2.0 * h);
                assert!((p.psi_of_sq(q).d1 - fd2).abs() < 1e-5);
            }
        }
    }
}
