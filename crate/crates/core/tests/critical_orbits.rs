//! Critical-orbit detection against the worked examples: positions, indices,
//! isotropy and stability flags.

use std::collections::BTreeMap;

use morsebott::critstruct::{
    self, check_stability, component_points, find_critical_orbits, normal_decomposition,
    CriticalOrbit, IsotropyKind,
};
use morsebott::geometry::{build_scenario, GroupElement, Point, Scenario};

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn orbits_of(s: &Scenario, density: usize) -> Vec<CriticalOrbit> {
    let seeds = s.sample_points(density);
    find_critical_orbits(s, &seeds).expect("critical orbit search").orbits
}

fn by_label<'a>(orbits: &'a [CriticalOrbit], label: &str) -> &'a CriticalOrbit {
    orbits
        .iter()
        .find(|o| o.label == label)
        .unwrap_or_else(|| panic!("missing orbit {label}"))
}

#[test]
fn sphere_height_has_poles_with_indices_two_and_zero() {
    let s = build_scenario("sphere_height", &BTreeMap::new()).unwrap();
    let orbits = orbits_of(&s, 8);
    assert_eq!(orbits.len(), 2);
    let north = by_label(&orbits, "N");
    let south = by_label(&orbits, "S");
    assert_eq!(north.index, 2);
    assert_eq!(south.index, 0);
    let na = s.ambient(&north.representative);
    let sa = s.ambient(&south.representative);
    assert!((na[2] - 1.0).abs() < 1e-6 && na[0].abs() < 1e-6 && na[1].abs() < 1e-6);
    assert!((sa[2] + 1.0).abs() < 1e-6);
    assert_eq!(north.isotropy.kind, IsotropyKind::FullCircle);
    assert_eq!(south.isotropy.kind, IsotropyKind::FullCircle);
    // Not stable at the top pole, stable at the bottom.
    assert!(!north.stable);
    assert!(south.stable);
}

#[test]
fn mapping_torus_has_four_circle_orbits_at_the_expected_positions() {
    let s = build_scenario("mapping_torus", &BTreeMap::new()).unwrap();
    let orbits = orbits_of(&s, 8);
    assert_eq!(orbits.len(), 4);
    let expect = [
        ("P2", [0.0, 0.25], 2, false),
        ("Q1", [0.5, 0.25], 1, true),
        ("R1", [0.5, 0.75], 1, false),
        ("S0", [0.0, 0.75], 0, true),
    ];
    for (label, pos, index, stable) in expect {
        let o = by_label(&orbits, label);
        assert_eq!(o.index, index, "{label} index");
        assert_eq!(o.stable, stable, "{label} stability");
        assert_eq!(o.orbit_dim, 1, "{label} is a circle");
        assert!(o.is_group_orbit);
        assert_eq!(o.isotropy.kind, IsotropyKind::Cyclic(2), "{label} isotropy");
        let r = o.representative;
        assert!(
            (r.x[0] - pos[0]).abs() < 1e-6 && (r.x[1] - pos[1]).abs() < 1e-6,
            "{label} at {:?}",
            r.x
        );
    }
}

#[test]
fn torus_with_legs_has_circle_saddles_and_minima() {
    let s = build_scenario("torus_with_legs", &params(&[("n", 3.0)])).unwrap();
    let orbits = orbits_of(&s, 12);
    let circles: Vec<_> = orbits.iter().filter(|o| o.orbit_dim == 1).collect();
    let saddles: Vec<_> = orbits
        .iter()
        .filter(|o| o.orbit_dim == 0 && o.index == 1)
        .collect();
    let minima: Vec<_> = orbits
        .iter()
        .filter(|o| o.orbit_dim == 0 && o.index == 0)
        .collect();
    assert_eq!(circles.len(), 1);
    assert_eq!(saddles.len(), 3);
    assert_eq!(minima.len(), 3);
    assert_eq!(orbits.len(), 7);
    let circle = circles[0];
    assert_eq!(circle.index, 1);
    // The circle is a critical component but not a group orbit: h_n is
    // invariant Morse-Bott yet not G-Morse-Bott.
    assert!(!circle.is_group_orbit);
    assert!(saddles.iter().all(|o| o.is_group_orbit));
    // Free action: trivial isotropy everywhere.
    assert!(orbits.iter().all(|o| o.isotropy.kind == IsotropyKind::Trivial));
    // And stability is vacuous under a free action.
    assert!(orbits.iter().all(|o| o.stable));
}

#[test]
fn sphere_stabilized_has_two_minima_and_an_equator_circle() {
    let s = build_scenario("sphere_stabilized", &BTreeMap::new()).unwrap();
    let orbits = orbits_of(&s, 8);
    assert_eq!(orbits.len(), 3);
    let north = by_label(&orbits, "N");
    let south = by_label(&orbits, "S");
    let circle = by_label(&orbits, "N'");
    assert_eq!(north.index, 0);
    assert_eq!(south.index, 0);
    assert_eq!(circle.index, 1);
    assert_eq!(circle.orbit_dim, 1);
    assert!(orbits.iter().all(|o| o.stable), "stabilized scenario is stable");
    assert_eq!(circle.isotropy.kind, IsotropyKind::Trivial);
}

#[test]
fn stabilized_mapping_torus_has_exactly_six_stable_circles() {
    let s = build_scenario("mapping_torus_stabilized", &BTreeMap::new()).unwrap();
    let orbits = orbits_of(&s, 16);
    assert_eq!(
        orbits.len(),
        6,
        "expected six orbits, got {:?}",
        orbits.iter().map(|o| (o.label.clone(), o.index)).collect::<Vec<_>>()
    );
    let expect = [
        ("S0", 0, IsotropyKind::Cyclic(2)),
        ("Rbar0", 0, IsotropyKind::Cyclic(2)),
        ("R1p", 1, IsotropyKind::Trivial),
        ("Q1", 1, IsotropyKind::Cyclic(2)),
        ("Pbar1", 1, IsotropyKind::Cyclic(2)),
        ("P2p", 2, IsotropyKind::Trivial),
    ];
    // Sorted by f-value the labels come out in the reference order.
    for (i, (label, index, iso)) in expect.iter().enumerate() {
        assert_eq!(orbits[i].label, *label, "position {i}");
        assert_eq!(orbits[i].index, *index, "{label} index");
        assert_eq!(orbits[i].isotropy.kind, *iso, "{label} isotropy");
        assert!(orbits[i].stable, "{label} must be stable");
        assert!(orbits[i].is_group_orbit);
        assert_eq!(orbits[i].orbit_dim, 1);
    }
    let indices: Vec<usize> = orbits.iter().map(|o| o.index).collect();
    assert_eq!(indices, vec![0, 0, 1, 1, 1, 2]);
}

#[test]
fn orbits_are_critical_all_along_and_indices_are_constant() {
    let s = build_scenario("mapping_torus_stabilized", &BTreeMap::new()).unwrap();
    let orbits = orbits_of(&s, 16);
    for o in &orbits {
        for p in component_points(&s, o, 32) {
            let grad = s.grad(&p);
            assert!(
                s.g_norm(&p, &grad) <= 1e-8,
                "{}: gradient {:e} at {:?}",
                o.label,
                s.g_norm(&p, &grad),
                p.x
            );
        }
        for p in component_points(&s, o, 8) {
            let idx = critstruct::transverse_index(&s, o, &p).unwrap();
            assert_eq!(idx, o.index, "{} index drift at {:?}", o.label, p.x);
        }
    }
}

#[test]
fn stability_flag_is_representative_independent() {
    let s = build_scenario("mapping_torus", &BTreeMap::new()).unwrap();
    let orbits = orbits_of(&s, 8);
    for o in &orbits {
        for p in component_points(&s, o, 4) {
            let mut moved = o.clone();
            moved.representative = p;
            moved.isotropy = critstruct::isotropy(&s, &p);
            let nd = normal_decomposition(&s, &moved).unwrap();
            assert_eq!(check_stability(&nd), o.stable, "{} at {:?}", o.label, p.x);
        }
    }
}

#[test]
fn normal_decomposition_matches_the_worked_examples() {
    // Sphere north pole: full-circle isotropy, N'' is the whole normal space.
    let s = build_scenario("sphere_height", &BTreeMap::new()).unwrap();
    let orbits = orbits_of(&s, 8);
    let north = by_label(&orbits, "N");
    let nd = normal_decomposition(&s, north).unwrap();
    assert_eq!(nd.normal_basis.len(), 2);
    assert_eq!(nd.trivial_part.len(), 0);
    assert_eq!(nd.nontrivial_part.len(), 2);

    // Mapping torus Q1: monodromy flips theta1, fixes theta2.
    let m = build_scenario("mapping_torus", &BTreeMap::new()).unwrap();
    let orbits = orbits_of(&m, 8);
    let q1 = by_label(&orbits, "Q1");
    let nd = normal_decomposition(&m, q1).unwrap();
    assert_eq!(nd.normal_basis.len(), 2);
    assert_eq!(nd.trivial_part.len(), 1);
    assert_eq!(nd.nontrivial_part.len(), 1);
    // N' is the theta2 direction, N'' the theta1 direction (in chart coords).
    let to_chart = |coeffs: &[f64; 3], nd: &morsebott::critstruct::NormalDecomposition| {
        let mut v = [0.0; 3];
        for (j, b) in nd.normal_basis.iter().enumerate() {
            for i in 0..3 {
                v[i] += coeffs[j] * b[i];
            }
        }
        v
    };
    let trivial = to_chart(&nd.trivial_part[0], &nd);
    let nontrivial = to_chart(&nd.nontrivial_part[0], &nd);
    assert!(trivial[0].abs() < 1e-9 && trivial[1].abs() > 0.9);
    assert!(nontrivial[1].abs() < 1e-9 && nontrivial[0].abs() > 0.9);

    // Trivial isotropy: N'' = 0.
    let t = build_scenario("torus_with_legs", &params(&[("n", 3.0)])).unwrap();
    let orbits = orbits_of(&t, 12);
    let saddle = orbits.iter().find(|o| o.index == 1 && o.orbit_dim == 0).unwrap();
    let nd = normal_decomposition(&t, saddle).unwrap();
    assert_eq!(nd.nontrivial_part.len(), 0);
}

#[test]
fn stability_equivalences_hold_under_alternative_invariant_metrics() {
    let m = build_scenario("mapping_torus", &BTreeMap::new()).unwrap();
    let orbits = orbits_of(&m, 8);
    let metrics: Vec<(String, morsebott::geometry::MetricField)> =
        std::iter::once(("product".to_string(), m.metric))
            .chain(
                m.alt_metrics
                    .iter()
                    .map(|mf| ("product_scaled".to_string(), *mf)),
            )
            .collect();
    for label in ["Q1", "S0", "P2", "R1"] {
        let o = by_label(&orbits, label);
        let report = critstruct::check_stability_equivalences(&m, o, &metrics).unwrap();
        assert_eq!(report.entries.len(), 2);
        for e in &report.entries {
            assert_eq!(e.verdict_stable, o.stable);
        }
    }
    // Sphere north pole: negative space is everything, N' = 0, unstable.
    let s = build_scenario("sphere_height", &BTreeMap::new()).unwrap();
    let orbits = orbits_of(&s, 8);
    let north = by_label(&orbits, "N");
    let metrics = vec![("round".to_string(), s.metric)];
    let report = critstruct::check_stability_equivalences(&s, north, &metrics).unwrap();
    assert!(!report.entries[0].verdict_stable);
}

#[test]
fn negative_frames_follow_the_orientation_conventions() {
    // Q1 frame points along +theta2 and is constant over the circle.
    let m = build_scenario("mapping_torus", &BTreeMap::new()).unwrap();
    let orbits = orbits_of(&m, 8);
    let q1 = by_label(&orbits, "Q1");
    let frame = critstruct::negative_frame(&m, q1).unwrap();
    assert_eq!(frame.len(), 1);
    assert!(frame[0][1] > 0.99 && frame[0][0].abs() < 1e-9);
    for k in 0..8 {
        let (_, f) = critstruct::frame_at(&m, q1, 0.125 * k as f64);
        assert!((f[0][1] - frame[0][1]).abs() < 1e-9);
    }

    // Index-0 orbits carry an empty, positively oriented frame.
    let s0 = by_label(&orbits, "S0");
    assert!(critstruct::negative_frame(&m, s0).unwrap().is_empty());
    assert_eq!(s0.descending_orientation, 1);

    // Unstable orbits refuse a frame.
    let p2 = by_label(&orbits, "P2");
    assert!(critstruct::negative_frame(&m, p2).is_err());

    // Equator frame of the stabilized sphere descends toward a pole: it
    // pairs positively with d(1 - z).
    let s = build_scenario("sphere_stabilized", &BTreeMap::new()).unwrap();
    let orbits = orbits_of(&s, 8);
    let circle = by_label(&orbits, "N'");
    let frame = critstruct::negative_frame(&s, circle).unwrap();
    assert_eq!(frame.len(), 1);
    let covec = s.radial_covector(morsebott::geometry::RadialScalar::OneMinusZ, &circle.representative);
    let pairing: f64 = (0..2).map(|i| covec[i] * frame[0][i]).sum();
    assert!(pairing > 0.0);
}

#[test]
fn finite_cyclic_isotropy_average_agrees_with_quadrature() {
    // For the mapping torus Z2 isotropy the two-element average must agree
    // with a subgroup-quadrature built from 64 snapped nodes.
    let m = build_scenario("mapping_torus", &BTreeMap::new()).unwrap();
    let orbits = orbits_of(&m, 8);
    let q1 = by_label(&orbits, "Q1");
    let p = q1.representative;
    let v = [1.0, 0.7, 0.0];
    let (_, w) = m.act_on_tangent(GroupElement::Circle(1.0), &p, &v);
    let avg = [(v[0] + w[0]) / 2.0, (v[1] + w[1]) / 2.0, (v[2] + w[2]) / 2.0];
    // Quadrature over 64 nodes snapped to the subgroup {0, 1}.
    let mut acc = [0.0; 3];
    for k in 0..64 {
        let t = 2.0 * (k as f64) / 64.0;
        let snapped = if t < 1.0 { 0.0 } else { 1.0 };
        let (_, u) = m.act_on_tangent(GroupElement::Circle(snapped), &p, &v);
        for i in 0..3 {
            acc[i] += u[i] / 64.0;
        }
    }
    for i in 0..3 {
        assert!((acc[i] - avg[i]).abs() <= 1e-12);
    }
}

#[test]
fn act_on_tangent_matches_the_monodromy_examples() {
    let m = build_scenario("mapping_torus", &BTreeMap::new()).unwrap();
    let p = Point::new(0, [0.25, 0.25, 0.0]);
    let v = [1.0, 0.0, 0.0];
    let (q, w) = m.act_on_tangent(GroupElement::Circle(1.0), &p, &v);
    assert!((q.x[0] - 0.75).abs() < 1e-12 && (q.x[1] - 0.25).abs() < 1e-12);
    assert!((w[0] + 1.0).abs() < 1e-12);

    // Identity leaves tangents unchanged.
    let (_, w_id) = m.act_on_tangent(GroupElement::Identity, &p, &v);
    assert_eq!(w_id, v);

    // Rotation by pi at the north pole flips tangent vectors.
    let s = build_scenario("sphere_height", &BTreeMap::new()).unwrap();
    let np = Point::new(0, [0.0, 0.0, 0.0]);
    let (_, w_rot) = s.act_on_tangent(GroupElement::Circle(0.5), &np, &[1.0, 0.0, 0.0]);
    assert!((w_rot[0] + 1.0).abs() < 1e-12 && w_rot[1].abs() < 1e-12);
}
