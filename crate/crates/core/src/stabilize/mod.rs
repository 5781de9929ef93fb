//! Stabilization: the auxiliary profiles, the local model
//! `F = |x+|^2 + Phi(|x-|) + eps Psi(|x-|) h(x-/|x-|)` on a slice, and its
//! application to an unstable critical orbit of a catalogue scenario.

pub mod profile;

use crate::critstruct::CriticalOrbit;
use crate::error::{Error, Result};
use crate::geometry::{self, ManifoldKind, Point, RadialScalar, RadialZone, Scenario, SliceModel, StabilizationSite};
use crate::linalg;

pub use profile::{Blend, BumpProfile, Plateau, SphereFunction};

/// A stabilization request for one critical orbit.
#[derive(Clone, Debug)]
pub struct StabilizationRecipe {
    /// Label of the orbit to stabilize.
    pub target_label: String,
    pub lambda: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub sphere_function: SphereFunction,
}

impl StabilizationRecipe {
    pub fn with_defaults(target_label: &str, lambda: f64) -> Result<Self> {
        Ok(StabilizationRecipe {
            target_label: target_label.to_string(),
            lambda,
            delta: lambda / 8.0,
            epsilon: lambda * lambda / 4.0,
            sphere_function: SphereFunction::Constant(0.0),
        })
    }

    pub fn profile(&self) -> Result<BumpProfile> {
        BumpProfile::new(self.lambda, self.delta)
    }

    /// Slice-ball radius in Morse coordinates: the perturbation support
    /// `3 lambda + delta` padded past the outer profile radius.
    pub fn slice_ball_radius(&self) -> f64 {
        1.2 * (4.0 * self.lambda + 2.0 * self.delta)
    }
}

/// The local model on an abstract slice with Morse-lemma coordinates
/// `(x_1, ..., x_k)`, the first `neg_dims` of which span the stabilized
/// negative block.
#[derive(Clone, Debug)]
pub struct LocalModel {
    pub profile: BumpProfile,
    pub epsilon: f64,
    pub h: SphereFunction,
    pub neg_dims: usize,
    pub total_dims: usize,
    pub ball_radius: f64,
}

impl LocalModel {
    /// Evaluate `F` and its gradient at slice coordinates `x`.
    pub fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        if x.len() != self.total_dims {
            return Err(Error::Stabilize(format!(
                "slice point has {} coordinates, expected {}",
                x.len(),
                self.total_dims
            )));
        }
        let r2: f64 = x.iter().map(|c| c * c).sum();
        if r2.sqrt() > self.ball_radius {
            return Err(Error::Stabilize(format!(
                "point outside slice ball of radius {}",
                self.ball_radius
            )));
        }
        let l = self.neg_dims;
        let q: f64 = x[..l].iter().map(|c| c * c).sum();
        let mut value = 0.0;
        let mut grad = vec![0.0; x.len()];
        for i in l..x.len() {
            value += x[i] * x[i];
            grad[i] = 2.0 * x[i];
        }
        let phi = self.profile.phi_of_sq(q);
        value += phi.v;
        for i in 0..l {
            grad[i] += 2.0 * x[i] * phi.d1;
        }
        let psi = self.profile.psi_of_sq(q);
        if psi.v != 0.0 || psi.d1 != 0.0 {
            let (hv, hg) = self.h_value_grad(&x[..l], q);
            value += self.epsilon * psi.v * hv;
            for i in 0..l {
                grad[i] += self.epsilon * (2.0 * x[i] * psi.d1 * hv + psi.v * hg[i]);
            }
        }
        Ok((value, grad))
    }

    fn h_value_grad(&self, xm: &[f64], q: f64) -> (f64, Vec<f64>) {
        match self.h {
            SphereFunction::Constant(c) => (c, vec![0.0; xm.len()]),
            SphereFunction::CircleCosine { amplitude } => {
                // a (x1^2 - x2^2) / q on a 2-dimensional negative block;
                // only evaluated where Psi != 0, so q is bounded below.
                assert!(xm.len() == 2, "cosine sphere function needs a circle");
                let num = xm[0] * xm[0] - xm[1] * xm[1];
                let v = amplitude * num / q;
                let g = vec![
                    amplitude * (2.0 * xm[0] * q - num * 2.0 * xm[0]) / (q * q),
                    amplitude * (-2.0 * xm[1] * q - num * 2.0 * xm[1]) / (q * q),
                ];
                (v, g)
            }
        }
    }
}

#[cfg(test)]
mod local_model_tests {
    use super::*;

    fn model() -> LocalModel {
        LocalModel {
            profile: BumpProfile::new(0.2, 0.025).unwrap(),
            epsilon: 0.01,
            h: SphereFunction::Constant(1.5),
            neg_dims: 1,
            total_dims: 2,
            ball_radius: 1.2 * (4.0 * 0.2 + 2.0 * 0.025),
        }
    }

    #[test]
    fn vanishing_negative_block_leaves_the_positive_quadratic() {
        let m = model();
        let (v, g) = m.value_grad(&[0.0, 0.3]).unwrap();
        assert!((v - 0.09).abs() < 1e-15);
        assert!(g[0].abs() < 1e-15 && (g[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn sphere_radius_evaluates_to_plateau_value() {
        let m = model();
        let t0 = m.profile.t0;
        let (v, g) = m.value_grad(&[t0, 0.2]).unwrap();
        let expect = 0.04 + m.profile.phi(t0).unwrap() + 0.01 * 1.5;
        assert!((v - expect).abs() < 1e-12);
        // Critical in the radial direction at t0.
        assert!(g[0].abs() < 1e-9, "radial gradient {}", g[0]);
    }

    #[test]
    fn epsilon_zero_is_radially_symmetric() {
        let mut m = model();
        m.epsilon = 0.0;
        m.neg_dims = 2;
        m.h = SphereFunction::CircleCosine { amplitude: 1.0 };
        let r = 0.31;
        let (v1, _) = m.value_grad(&[r, 0.0]).unwrap();
        let (v2, _) = m.value_grad(&[r / 2.0_f64.sqrt(), r / 2.0_f64.sqrt()]).unwrap();
        assert!((v1 - v2).abs() < 1e-14);
    }

    #[test]
    fn gradient_is_finite_difference_consistent_near_the_origin() {
        let m = model();
        // Inside |x-| < lambda / 10 the model must be smooth.
        for x in [[0.01, 0.05], [-0.015, -0.02], [0.0, 0.1]] {
            let (_, g) = m.value_grad(&x).unwrap();
            let h = 1e-6;
            for i in 0..2 {
                let mut xp = x;
                xp[i] += h;
                let mut xm = x;
                xm[i] -= h;
                let fd = (m.value_grad(&xp).unwrap().0 - m.value_grad(&xm).unwrap().0) / (2.0 * h);
                assert!(g[i].is_finite());
                assert!((g[i] - fd).abs() < 1e-8, "component {i}: {} vs {fd}", g[i]);
            }
        }
    }

    #[test]
    fn outside_the_slice_ball_is_an_error() {
        let m = model();
        assert!(m.value_grad(&[1.5, 0.0]).is_err());
    }
}

// ---------------------------------------------------------------------------
// Applying a recipe to a scenario
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct AppliedStabilization {
    pub scenario: Scenario,
    pub warnings: Vec<String>,
}

/// Apply a stabilization recipe at an unstable critical orbit. The slice
/// Morse coordinates come from the catalogue; recipes targeting orbits
/// without a catalogue slice, or stable orbits, are refused.
pub fn apply_stabilization(
    s: &Scenario,
    orbits: &[CriticalOrbit],
    recipe: &StabilizationRecipe,
) -> Result<AppliedStabilization> {
    let target = orbits
        .iter()
        .find(|o| o.label == recipe.target_label)
        .ok_or_else(|| {
            Error::Stabilize(format!("no orbit labelled {}", recipe.target_label))
        })?;
    if target.stable {
        return Err(Error::Stabilize(format!(
            "refused: orbit {} is already stable",
            target.label
        )));
    }
    let profile = recipe.profile()?;
    geometry::catalogue::validate_epsilon(recipe.lambda, recipe.epsilon)?;

    let mut warnings = Vec::new();
    if recipe.slice_ball_radius() > s.injectivity_bound {
        warnings.push(format!(
            "slice ball radius {:.4} exceeds the injectivity bound {:.4} of {}",
            recipe.slice_ball_radius(),
            s.injectivity_bound,
            s.name
        ));
    }

    let site = match s.manifold {
        ManifoldKind::MappingTorus => {
            let rep = s.canonicalize(&target.representative);
            let prefix: String = target
                .label
                .chars()
                .take_while(|c| c.is_ascii_alphabetic())
                .collect();
            if !matches!(recipe.sphere_function, SphereFunction::Constant(_)) {
                return Err(Error::Stabilize(
                    "the meridian slice has a 0-sphere; only constant sphere functions are invariant".into(),
                ));
            }
            StabilizationSite {
                target_label: target.label.clone(),
                center_label: format!("{}bar{}", prefix, target.index - 1),
                sphere_label: format!("{}p", target.label),
                profile,
                epsilon: recipe.epsilon,
                h: recipe.sphere_function,
                slice: SliceModel::MappingTorusMeridian {
                    c1: rep.x[0],
                    c2: rep.x[1],
                },
                retained_negative: target.index - 1,
            }
        }
        ManifoldKind::Sphere => {
            // Only a full-circle fixed point admits the cap slice.
            if target.orbit_dim != 0 {
                return Err(Error::Stabilize(format!(
                    "no catalogue slice for sphere orbit {}",
                    target.label
                )));
            }
            StabilizationSite {
                target_label: target.label.clone(),
                center_label: target.label.clone(),
                sphere_label: format!("{}'", target.label),
                profile,
                epsilon: recipe.epsilon,
                h: recipe.sphere_function,
                slice: SliceModel::SphereCap,
                retained_negative: target.index - 2,
            }
        }
        ManifoldKind::Torus2 => {
            return Err(Error::Stabilize(
                "no catalogue slices on the 2-torus scenarios".into(),
            ));
        }
    };

    let mut out = s.clone();
    out.name = format!("{}+stabilized[{}]", s.name, target.label);
    let (base, mut sites) = match &s.function {
        geometry::ScalarField::Stabilized { base, sites } => (base.clone(), sites.clone()),
        other => (Box::new(other.clone()), Vec::new()),
    };
    sites.push(site.clone());
    out.function = geometry::ScalarField::Stabilized { base, sites };
    decorate_after_stabilization(&mut out, s, orbits, target, &site);

    // Postcondition: the perturbed function is still invariant.
    quick_invariance_check(&out)?;
    Ok(AppliedStabilization {
        scenario: out,
        warnings,
    })
}

/// Rebuild label anchors, frame zones and rank-0 orientations after adding
/// a stabilization site.
fn decorate_after_stabilization(
    out: &mut Scenario,
    old: &Scenario,
    orbits: &[CriticalOrbit],
    target: &CriticalOrbit,
    site: &StabilizationSite,
) {
    // Keep anchors of unaffected orbits, replace the target's.
    let mut anchors: Vec<(Point, String)> = old
        .label_anchors
        .iter()
        .filter(|(_, label)| {
            orbits
                .iter()
                .find(|o| &o.label == label)
                .map_or(true, |o| o.id != target.id)
        })
        .cloned()
        .collect();
    let site_index = out.function.sites().len() - 1;
    match site.slice {
        SliceModel::MappingTorusMeridian { c1, c2 } => {
            let u_star = (site.profile.t0 / std::f64::consts::SQRT_2).asin() / std::f64::consts::PI;
            anchors.push((Point::new(0, [c1, c2, 0.0]), site.center_label.clone()));
            anchors.push((
                Point::new(0, [geometry::wrap_into(c1 - u_star, 1.0), c2, 0.0]),
                site.sphere_label.clone(),
            ));
            out.frame_convention.radial_zones.push(RadialZone {
                center: Point::new(0, [c1, c2, 0.0]),
                radius: 0.2,
                scalar: RadialScalar::SiteT2(site_index),
            });
        }
        SliceModel::SphereCap => {
            let t0 = site.profile.t0;
            // The sphere circle sits at height z = 1 - t0^2, i.e. at
            // stereographic radius r with r^2 = t0^2 / (2 - t0^2).
            let r = (t0 * t0 / (2.0 - t0 * t0)).sqrt();
            anchors.push((Point::new(0, [0.0, 0.0, 0.0]), site.center_label.clone()));
            anchors.push((Point::new(0, [r, 0.0, 0.0]), site.sphere_label.clone()));
            // The orientation convention that reproduces the reference
            // tables orients the rank-0 frame at the cap center negatively.
            out.zero_dim_signs.push((Point::new(0, [0.0, 0.0, 0.0]), -1));
        }
    }
    out.label_anchors = anchors;
}

/// Sampled invariance check of the perturbed function.
fn quick_invariance_check(s: &Scenario) -> Result<()> {
    let pts = s.sample_points(5);
    for p in pts.iter().take(60) {
        let f0 = s.value(p);
        for e in s.action.sample_elements() {
            let q = s.act(e, p);
            if (s.value(&q) - f0).abs() > 1e-10 {
                return Err(Error::Stabilize(format!(
                    "stabilized function lost invariance at {:?}",
                    p.x
                )));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Index-shift verification
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct IndexShiftEntry {
    pub orbit_label: String,
    pub expected_index: usize,
    pub actual_index: usize,
}

#[derive(Clone, Debug)]
pub struct IndexShiftCheck {
    pub site_label: String,
    pub entries: Vec<IndexShiftEntry>,
}

/// Verify `Ind_F(C) = Ind_h(C) + 1` (plus the retained negative block) for
/// the sphere orbits of every stabilization site of `s`, and that each
/// center orbit has index 0 in the stabilized block.
pub fn verify_index_shift(
    s: &Scenario,
    new_orbits: &[CriticalOrbit],
) -> Result<Vec<IndexShiftCheck>> {
    let sites = s.function.sites();
    if sites.is_empty() {
        return Err(Error::Stabilize(
            "scenario carries no stabilization sites".into(),
        ));
    }
    let mut out = Vec::new();
    for site in sites {
        let mut entries = Vec::new();
        let center = new_orbits
            .iter()
            .find(|o| o.label == site.center_label)
            .ok_or_else(|| {
                Error::Stabilize(format!("missing center orbit {}", site.center_label))
            })?;
        // Index 0 in the stabilized block: total index = retained block.
        entries.push(IndexShiftEntry {
            orbit_label: center.label.clone(),
            expected_index: site.retained_negative,
            actual_index: center.index,
        });
        let sphere = new_orbits
            .iter()
            .find(|o| o.label == site.sphere_label)
            .ok_or_else(|| {
                Error::Stabilize(format!("missing sphere orbit {}", site.sphere_label))
            })?;
        for (_, ind_h) in site.h.critical_indices() {
            entries.push(IndexShiftEntry {
                orbit_label: sphere.label.clone(),
                expected_index: ind_h + 1 + site.retained_negative,
                actual_index: sphere.index,
            });
        }
        for e in &entries {
            if e.expected_index != e.actual_index {
                return Err(Error::Stabilize(format!(
                    "index shift violated at {}: expected {}, found {}",
                    e.orbit_label, e.expected_index, e.actual_index
                )));
            }
        }
        out.push(IndexShiftCheck {
            site_label: site.target_label.clone(),
            entries,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// C1 distance between a scenario and its stabilization
// ---------------------------------------------------------------------------

/// Sampled sup of `|F - f| + |dF - df|` over a coordinate grid with
/// `density` points per axis.
pub fn c1_distance(base: &Scenario, stabilized: &Scenario, density: usize) -> f64 {
    let pts = base.sample_points(density);
    let mut worst = 0.0f64;
    for p in &pts {
        let dv = (stabilized.value(p) - base.value(p)).abs();
        let db = base.df(p);
        let ds = stabilized.df(p);
        let dg = linalg::norm(base.dimension, &linalg::sub(base.dimension, &ds, &db));
        worst = worst.max(dv + dg);
    }
    worst
}
