//! The scenario catalogue. Each entry fixes a coordinate model, an invariant
//! function, an invariant metric and a group action, together with label
//! anchors for the expected critical orbits and the frame conventions used
//! to orient negative normal bundles deterministically.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::stabilize::profile::{BumpProfile, SphereFunction};

use super::action::TAU;
use super::field::{ScalarField, SliceModel, StabilizationSite};
use super::metric::MetricField;
use super::{
    Axis, CoordinateChart, FrameConvention, GroupAction, ManifoldKind, Point, RadialScalar,
    RadialZone, Scenario,
};

pub const CATALOGUE_NAMES: [&str; 5] = [
    "sphere_height",
    "sphere_stabilized",
    "torus_with_legs",
    "mapping_torus",
    "mapping_torus_stabilized",
];

/// Default stabilization scale; small enough that perturbation strips at the
/// two mapping-torus sites stay disjoint with a wide margin.
pub const DEFAULT_LAMBDA: f64 = 0.2;

pub fn build_scenario(name: &str, params: &BTreeMap<String, f64>) -> Result<Scenario> {
    match name {
        "sphere_height" => {
            expect_params(name, params, &[])?;
            Ok(sphere_scenario(name, ScalarField::SphereHeight, params.clone()))
        }
        "sphere_stabilized" => {
            expect_params(name, params, &[])?;
            let mut s = sphere_scenario(name, ScalarField::SphereStabilized, params.clone());
            // Equator circle plays the role of the dimple circle.
            s.label_anchors.push((Point::new(0, [1.0, 0.0, 0.0]), "N'".into()));
            // The descending-frame orientation convention that reproduces the
            // reference differential table orients the rank-0 frame at the
            // north pole negatively.
            s.zero_dim_signs = vec![(Point::new(0, [0.0, 0.0, 0.0]), -1)];
            Ok(s)
        }
        "torus_with_legs" => {
            expect_params(name, params, &["n"])?;
            let n_raw = *params
                .get("n")
                .ok_or_else(|| Error::Config("torus_with_legs requires parameter n".into()))?;
            if n_raw < 1.0 || n_raw.fract() != 0.0 {
                return Err(Error::Config(format!(
                    "torus_with_legs parameter n must be a positive integer, got {n_raw}"
                )));
            }
            Ok(torus_legs_scenario(n_raw as u32, params.clone()))
        }
        "mapping_torus" => {
            expect_params(name, params, &[])?;
            Ok(mapping_torus_scenario(
                name,
                ScalarField::MappingTorusHeight,
                params.clone(),
            ))
        }
        "mapping_torus_stabilized" => {
            expect_params(name, params, &["lambda", "delta", "epsilon", "h"])?;
            let lambda = params.get("lambda").copied().unwrap_or(DEFAULT_LAMBDA);
            let delta = params.get("delta").copied().unwrap_or(lambda / 8.0);
            let epsilon = params.get("epsilon").copied().unwrap_or(lambda * lambda / 4.0);
            let h_const = params.get("h").copied().unwrap_or(0.0);
            let sites = mapping_torus_sites(lambda, delta, epsilon, h_const)?;
            let mut s = mapping_torus_scenario(
                name,
                ScalarField::Stabilized {
                    base: Box::new(ScalarField::MappingTorusHeight),
                    sites,
                },
                params.clone(),
            );
            decorate_stabilized_mapping_torus(&mut s);
            Ok(s)
        }
        _ => Err(Error::Config(format!(
            "unknown scenario '{name}'; catalogue entries: {}",
            CATALOGUE_NAMES.join(", ")
        ))),
    }
}

fn expect_params(name: &str, params: &BTreeMap<String, f64>, allowed: &[&str]) -> Result<()> {
    for key in params.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(Error::Config(format!(
                "scenario '{name}' does not accept parameter '{key}'"
            )));
        }
    }
    Ok(())
}

fn sphere_charts() -> Vec<CoordinateChart> {
    vec![
        CoordinateChart {
            id: "stereo_n".into(),
            coordinate_names: vec!["u", "v"],
            axes: vec![
                Axis::Bounded { lo: -2.0, hi: 2.0 },
                Axis::Bounded { lo: -2.0, hi: 2.0 },
            ],
            identification: None,
            validity_radius: Some(2.0),
        },
        CoordinateChart {
            id: "stereo_s".into(),
            coordinate_names: vec!["u", "v"],
            axes: vec![
                Axis::Bounded { lo: -2.0, hi: 2.0 },
                Axis::Bounded { lo: -2.0, hi: 2.0 },
            ],
            identification: None,
            validity_radius: Some(2.0),
        },
    ]
}

fn sphere_scenario(
    name: &str,
    function: ScalarField,
    params: BTreeMap<String, f64>,
) -> Scenario {
    Scenario {
        name: name.into(),
        manifold: ManifoldKind::Sphere,
        dimension: 2,
        charts: sphere_charts(),
        function,
        metric: MetricField::RoundSphere,
        action: GroupAction::CircleSphere,
        catalogue_params: params,
        frame_convention: FrameConvention {
            axes: vec![0, 1],
            radial_zones: vec![RadialZone {
                center: Point::new(0, [0.0, 0.0, 0.0]),
                radius: 10.0,
                scalar: RadialScalar::OneMinusZ,
            }],
        },
        label_anchors: vec![
            (Point::new(0, [0.0, 0.0, 0.0]), "N".into()),
            (Point::new(1, [0.0, 0.0, 0.0]), "S".into()),
        ],
        zero_dim_signs: Vec::new(),
        alt_metrics: vec![MetricField::RoundSphereScaled],
        injectivity_bound: std::f64::consts::SQRT_2,
    }
}

fn torus_legs_scenario(n: u32, params: BTreeMap<String, f64>) -> Scenario {
    let mut anchors = vec![(Point::new(0, [0.0, std::f64::consts::PI, 0.0]), "S".into())];
    for k in 0..n {
        anchors.push((
            Point::new(0, [(2.0 * k as f64 + 1.0) * std::f64::consts::PI / n as f64, 0.0, 0.0]),
            format!("p{k}"),
        ));
        anchors.push((
            Point::new(0, [2.0 * k as f64 * std::f64::consts::PI / n as f64, 0.0, 0.0]),
            format!("q{k}"),
        ));
    }
    Scenario {
        name: "torus_with_legs".into(),
        manifold: ManifoldKind::Torus2,
        dimension: 2,
        charts: vec![CoordinateChart {
            id: "angles".into(),
            coordinate_names: vec!["phi", "psi"],
            axes: vec![Axis::Periodic { period: TAU }, Axis::Periodic { period: TAU }],
            identification: None,
            validity_radius: None,
        }],
        function: ScalarField::TorusLegs { n },
        metric: MetricField::EmbeddedTorus { big_r: 2.0, small_r: 1.0 },
        action: GroupAction::CyclicPhi { n },
        catalogue_params: params,
        frame_convention: FrameConvention {
            axes: vec![0, 1],
            radial_zones: Vec::new(),
        },
        label_anchors: anchors,
        zero_dim_signs: Vec::new(),
        alt_metrics: vec![MetricField::EmbeddedTorusScaled {
            big_r: 2.0,
            small_r: 1.0,
            psi_scale: 2.0,
        }],
        injectivity_bound: std::f64::consts::PI,
    }
}

fn mapping_torus_scenario(
    name: &str,
    function: ScalarField,
    params: BTreeMap<String, f64>,
) -> Scenario {
    Scenario {
        name: name.into(),
        manifold: ManifoldKind::MappingTorus,
        dimension: 3,
        charts: vec![CoordinateChart {
            id: "fundamental".into(),
            coordinate_names: vec!["theta1", "theta2", "tau"],
            axes: vec![
                Axis::Periodic { period: 1.0 },
                Axis::Periodic { period: 1.0 },
                Axis::Periodic { period: 1.0 },
            ],
            identification: Some("(theta1, theta2, 0) ~ (-theta1, theta2, 1)".into()),
            validity_radius: None,
        }],
        function,
        metric: MetricField::FlatMapping,
        action: GroupAction::CircleMappingTorus,
        catalogue_params: params,
        frame_convention: FrameConvention {
            axes: vec![0, 1, 2],
            radial_zones: Vec::new(),
        },
        label_anchors: vec![
            (Point::new(0, [0.0, 0.25, 0.0]), "P2".into()),
            (Point::new(0, [0.5, 0.25, 0.0]), "Q1".into()),
            (Point::new(0, [0.5, 0.75, 0.0]), "R1".into()),
            (Point::new(0, [0.0, 0.75, 0.0]), "S0".into()),
        ],
        zero_dim_signs: Vec::new(),
        alt_metrics: vec![MetricField::FlatMappingScaled { theta2_scale: 2.0 }],
        injectivity_bound: std::f64::consts::SQRT_2,
    }
}

/// Validate the small-epsilon regime: in the exact Morse coordinates every
/// nonzero Hessian eigenvalue is +-2, so the bound is `2 min(0.1, lambda^2)`.
pub fn validate_epsilon(lambda: f64, epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    let bound = 2.0 * (0.1f64).min(lambda * lambda);
    if epsilon >= bound {
        return Err(Error::Config(format!(
            "epsilon = {epsilon} outside the small-epsilon regime (must be < {bound})"
        )));
    }
    Ok(())
}

/// The two stabilization sites of the mapping torus, at P2 (index 2, one
/// retained negative direction) and R1 (index 1, none retained).
pub fn mapping_torus_sites(
    lambda: f64,
    delta: f64,
    epsilon: f64,
    h_const: f64,
) -> Result<Vec<StabilizationSite>> {
    if delta >= lambda {
        return Err(Error::Config(format!(
            "invalid profile parameters: delta = {delta} >= lambda = {lambda}"
        )));
    }
    let profile = BumpProfile::new(lambda, delta)?;
    validate_epsilon(lambda, epsilon)?;
    Ok(vec![
        StabilizationSite {
            target_label: "P2".into(),
            center_label: "Pbar1".into(),
            sphere_label: "P2p".into(),
            profile,
            epsilon,
            h: SphereFunction::Constant(h_const),
            slice: SliceModel::MappingTorusMeridian { c1: 0.0, c2: 0.25 },
            retained_negative: 1,
        },
        StabilizationSite {
            target_label: "R1".into(),
            center_label: "Rbar0".into(),
            sphere_label: "R1p".into(),
            profile,
            epsilon,
            h: SphereFunction::Constant(h_const),
            slice: SliceModel::MappingTorusMeridian { c1: 0.5, c2: 0.75 },
            retained_negative: 0,
        },
    ])
}

/// The sphere-cap site at the north pole.
pub fn sphere_cap_site(
    lambda: f64,
    delta: f64,
    epsilon: f64,
    h: SphereFunction,
) -> Result<StabilizationSite> {
    let profile = BumpProfile::new(lambda, delta)?;
    validate_epsilon(lambda, epsilon)?;
    Ok(StabilizationSite {
        target_label: "N".into(),
        center_label: "N".into(),
        sphere_label: "N'".into(),
        profile,
        epsilon,
        h,
        slice: SliceModel::SphereCap,
        retained_negative: 0,
    })
}

/// Anchor/frame decoration shared by the catalogue entry and recipes applied
/// to the plain mapping torus.
pub fn decorate_stabilized_mapping_torus(s: &mut Scenario) {
    let sites = s.function.sites().to_vec();
    let mut anchors = vec![
        (Point::new(0, [0.0, 0.75, 0.0]), "S0".into()),
        (Point::new(0, [0.5, 0.25, 0.0]), "Q1".into()),
    ];
    let mut zones = Vec::new();
    for (i, site) in sites.iter().enumerate() {
        if let SliceModel::MappingTorusMeridian { c1, c2 } = site.slice {
            anchors.push((Point::new(0, [c1, c2, 0.0]), site.center_label.clone()));
            // The sphere orbit sits where sin(pi u1) = t0 / sqrt(2).
            let u_star = (site.profile.t0 / std::f64::consts::SQRT_2).asin() / std::f64::consts::PI;
            anchors.push((
                Point::new(0, [super::wrap_into(c1 - u_star, 1.0), c2, 0.0]),
                site.sphere_label.clone(),
            ));
            zones.push(RadialZone {
                center: Point::new(0, [c1, c2, 0.0]),
                radius: 0.2,
                scalar: RadialScalar::SiteT2(i),
            });
        }
    }
    s.label_anchors = anchors;
    s.frame_convention.radial_zones = zones;
}
