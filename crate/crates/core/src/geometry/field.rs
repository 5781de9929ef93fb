//! Invariant functions of the catalogue and the stabilization perturbation,
//! all with closed-form jets.
//!
//! The stabilized functions rely on exact equivariant Morse coordinates that
//! exist globally for the catalogue entries:
//!
//! - mapping torus near `(c1, c2, .)`: with `x1^2 = 1 - cos 2 pi (th1 - c1)`
//!   and `x2^2 = (3 + cos 2 pi th1)(1 - cos 2 pi (th2 - c2))`, the function is
//!   exactly `f(p) -/+ x1^2 -/+ x2^2` (signs per site);
//! - sphere near the north pole: `f = z = 1 - t2` with `t2 = 1 - z` the
//!   squared Morse radius.
//!
//! A site perturbation replaces the `x1` block of the quadratic form by the
//! profile `Phi` plus the `eps Psi h` term, cut off by a C² plateau in
//! `w = x2^2` where a transverse block must be left untouched.

use crate::linalg::Vec3;
use crate::stabilize::profile::{BumpProfile, Plateau, SphereFunction};

use super::action::TAU;
use super::jet::{cos_of, Jet2, Uni};
use super::Point;

/// Cutoff plateau bounds in `w = x2^2` for the mapping-torus sites. The
/// plateau must contain `w = 0` (where the new critical orbits live) and the
/// cutoff must finish before the neighbouring orbits on the same meridian,
/// which sit at `|x2| = 2`.
const MERIDIAN_CUTOFF_LO: f64 = 0.36;
const MERIDIAN_CUTOFF_HI: f64 = 1.96;

#[derive(Clone, Debug)]
pub enum ScalarField {
    /// Height function `z` on the unit sphere.
    SphereHeight,
    /// `1 - z^2` on the unit sphere.
    SphereStabilized,
    /// `-(2 + cos n phi)(1 + cos psi)` on the 2-torus.
    TorusLegs { n: u32 },
    /// `(3 + cos 2 pi th1) sin 2 pi th2` on the mapping torus.
    MappingTorusHeight,
    /// A base function plus local stabilization bumps.
    Stabilized {
        base: Box<ScalarField>,
        sites: Vec<StabilizationSite>,
    },
}

/// Where and how a stabilization perturbation is applied.
#[derive(Clone, Debug)]
pub struct StabilizationSite {
    /// Label of the orbit the recipe targeted.
    pub target_label: String,
    /// Label for the orbit at the slice origin after stabilization.
    pub center_label: String,
    /// Label for the new orbit on the small sphere.
    pub sphere_label: String,
    pub profile: BumpProfile,
    pub epsilon: f64,
    pub h: SphereFunction,
    pub slice: SliceModel,
    /// Dimension of the retained negative block (the isotropy-fixed negative
    /// directions that are left unmodified).
    pub retained_negative: usize,
}

#[derive(Clone, Copy, Debug)]
pub enum SliceModel {
    /// Mapping torus site centered at `(c1, c2, tau)`; the stabilized block
    /// is the theta_1 direction, the cutoff acts in `w = x2^2`.
    MappingTorusMeridian { c1: f64, c2: f64 },
    /// Sphere site at the north pole; the stabilized block is the whole
    /// tangent plane, no cutoff needed.
    SphereCap,
}

impl StabilizationSite {
    /// Center of the slice as a chart point.
    pub fn center_point(&self) -> Point {
        match self.slice {
            SliceModel::MappingTorusMeridian { c1, c2 } => Point {
                chart: 0,
                x: [c1, c2, 0.0],
            },
            SliceModel::SphereCap => Point {
                chart: 0,
                x: [0.0, 0.0, 0.0],
            },
        }
    }

    /// Squared Morse radius `t2` of the site at a chart point, as a jet.
    pub fn t2_jet(&self, chart: usize, x: &Vec3, dim: usize) -> Jet2 {
        match self.slice {
            SliceModel::MappingTorusMeridian { c1, .. } => {
                // 1 - cos(2 pi (th1 - c1))
                cos_of(dim, 0, x[0], TAU, -TAU * c1).scale(-1.0).add_const(1.0)
            }
            SliceModel::SphereCap => one_minus_z(chart, x, dim),
        }
    }

    /// The bump `chi(w) * (Phi(|x1|) + |x1|^2 + eps Psi(|x1|) h)` as a jet.
    pub fn bump_jet(&self, chart: usize, x: &Vec3, dim: usize) -> Jet2 {
        let t2 = self.t2_jet(chart, x, dim);
        if t2.v >= self.profile.support_radius().powi(2) {
            return Jet2::constant(dim, 0.0);
        }
        let core = self.core_jet(chart, x, dim, &t2);
        match self.slice {
            SliceModel::MappingTorusMeridian { c2, .. } => {
                // w = (3 + cos 2 pi th1)(1 - cos 2 pi (th2 - c2))
                let a = cos_of(dim, 0, x[0], TAU, 0.0).add_const(3.0);
                let b = cos_of(dim, 1, x[1], TAU, -TAU * c2)
                    .scale(-1.0)
                    .add_const(1.0);
                let w = a.mul(&b);
                let chi = w.chain(plateau_uni(w.v));
                chi.mul(&core)
            }
            SliceModel::SphereCap => core,
        }
    }

    /// `Phi(sqrt t2) + t2 + eps Psi(sqrt t2) h` as a jet.
    fn core_jet(&self, chart: usize, x: &Vec3, dim: usize, t2: &Jet2) -> Jet2 {
        let phi = t2.chain(self.profile.phi_of_sq(t2.v));
        let mut out = phi.add(t2);
        let psi_uni = self.profile.psi_of_sq(t2.v);
        if psi_uni.v != 0.0 || psi_uni.d1 != 0.0 || psi_uni.d2 != 0.0 {
            let psi = t2.chain(psi_uni);
            let h = self.h_jet(chart, x, dim);
            out = out.add(&psi.mul(&h).scale(self.epsilon));
        }
        out
    }

    fn h_jet(&self, _chart: usize, x: &Vec3, dim: usize) -> Jet2 {
        match self.h {
            SphereFunction::Constant(c) => Jet2::constant(dim, c),
            SphereFunction::CircleCosine { amplitude } => match self.slice {
                // a cos(2 alpha) on the sphere cap circle equals
                // a (u^2 - v^2) / rho in stereographic coordinates.
                SliceModel::SphereCap => {
                    let u = Jet2::coordinate(dim, 0, x[0]);
                    let v = Jet2::coordinate(dim, 1, x[1]);
                    let num = u.mul(&u).sub(&v.mul(&v));
                    let rho = u.mul(&u).add(&v.mul(&v));
                    num.div(&rho).scale(amplitude)
                }
                // The meridian sphere is a 0-sphere; only constants are
                // invariant there, so a cosine profile is rejected upstream.
                SliceModel::MappingTorusMeridian { .. } => {
                    Jet2::constant(dim, 0.0)
                }
            },
        }
    }
}

fn plateau_uni(w: f64) -> Uni {
    Plateau::new(MERIDIAN_CUTOFF_LO, MERIDIAN_CUTOFF_HI).jet(w)
}

/// Jet of `1 - z` on the sphere in either stereographic chart.
fn one_minus_z(chart: usize, x: &Vec3, dim: usize) -> Jet2 {
    z_jet(chart, x, dim).scale(-1.0).add_const(1.0)
}

/// Jet of the ambient height `z` on the sphere.
pub fn z_jet(chart: usize, x: &Vec3, dim: usize) -> Jet2 {
    let u = Jet2::coordinate(dim, 0, x[0]);
    let v = Jet2::coordinate(dim, 1, x[1]);
    let rho = u.mul(&u).add(&v.mul(&v));
    let r = rho.v;
    let denom = 1.0 + r;
    // chart 0 projects from the south pole: z = (1 - rho) / (1 + rho);
    // chart 1 from the north pole: z = (rho - 1) / (1 + rho).
    let sign = if chart == 0 { 1.0 } else { -1.0 };
    rho.chain(Uni::new(
        sign * (1.0 - r) / denom,
        sign * -2.0 / (denom * denom),
        sign * 4.0 / (denom * denom * denom),
    ))
}

impl ScalarField {
    pub fn jet(&self, chart: usize, x: &Vec3, dim: usize) -> Jet2 {
        match self {
            ScalarField::SphereHeight => z_jet(chart, x, dim),
            ScalarField::SphereStabilized => {
                let z = z_jet(chart, x, dim);
                z.mul(&z).scale(-1.0).add_const(1.0)
            }
            ScalarField::TorusLegs { n } => {
                let a = cos_of(dim, 0, x[0], *n as f64, 0.0).add_const(2.0);
                let b = cos_of(dim, 1, x[1], 1.0, 0.0).add_const(1.0);
                a.mul(&b).scale(-1.0)
            }
            ScalarField::MappingTorusHeight => {
                let a = cos_of(dim, 0, x[0], TAU, 0.0).add_const(3.0);
                // sin(2 pi th2) = cos(2 pi th2 - pi/2)
                let b = cos_of(dim, 1, x[1], TAU, -std::f64::consts::FRAC_PI_2);
                a.mul(&b)
            }
            ScalarField::Stabilized { base, sites } => {
                let mut out = base.jet(chart, x, dim);
                for site in sites {
                    out = out.add(&site.bump_jet(chart, x, dim));
                }
                out
            }
        }
    }

    pub fn sites(&self) -> &[StabilizationSite] {
        match self {
            ScalarField::Stabilized { sites, .. } => sites,
            _ => &[],
        }
    }
}
