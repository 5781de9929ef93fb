//! Flow-line integration, moduli covers with signs, and transversality
//! diagnostics against the worked examples.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use morsebott::critstruct::{find_critical_orbits, CriticalOrbit};
use morsebott::flow::{
    default_pairs, diagnose_transversality, extract_moduli_cover, integrate_flow,
    orientation_sign, shoot_descending_sphere, FlowContext, FlowDirection, FlowOutcome,
    FlowSettings, TransversalityVerdict,
};
use morsebott::geometry::{build_scenario, GroupElement, Point, Scenario};

struct Fixture {
    scenario: Scenario,
    orbits: Vec<CriticalOrbit>,
}

impl Fixture {
    fn new(name: &str, params: &[(&str, f64)]) -> Fixture {
        let params: BTreeMap<String, f64> =
            params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let scenario = build_scenario(name, &params).unwrap();
        let seeds = scenario.sample_points(if scenario.dimension == 2 { 12 } else { 16 });
        let orbits = find_critical_orbits(&scenario, &seeds).unwrap().orbits;
        Fixture { scenario, orbits }
    }

    fn ctx(&self) -> FlowContext<'_> {
        FlowContext::new(&self.scenario, &self.orbits)
    }

    fn id(&self, label: &str) -> usize {
        self.orbits
            .iter()
            .find(|o| o.label == label)
            .unwrap_or_else(|| panic!("no orbit {label}"))
            .id
    }
}

fn stabilized() -> &'static Fixture {
    static FIX: OnceLock<Fixture> = OnceLock::new();
    FIX.get_or_init(|| Fixture::new("mapping_torus_stabilized", &[]))
}

fn settings() -> FlowSettings {
    FlowSettings::default()
}

#[test]
fn sphere_meridian_flow_reaches_the_south_pole() {
    let fix = Fixture::new("sphere_height", &[]);
    let ctx = fix.ctx();
    let line = integrate_flow(
        &ctx,
        &Point::new(0, [1.0, 0.0, 0.0]),
        FlowDirection::Down,
        200.0,
        &settings(),
    )
    .unwrap();
    assert_eq!(line.end_orbit, Some(fix.id("S")));
    // Energy decreases monotonically along the samples.
    let mut prev = f64::INFINITY;
    for (_, p) in &line.samples {
        let v = fix.scenario.value(p);
        assert!(v <= prev + 1e-9);
        prev = v;
    }
}

#[test]
fn mapping_torus_flow_keeps_tau_constant() {
    let fix = Fixture::new("mapping_torus", &[]);
    let ctx = fix.ctx();
    let line = integrate_flow(
        &ctx,
        &Point::new(0, [0.51, 0.25, 0.375]),
        FlowDirection::Down,
        200.0,
        &settings(),
    )
    .unwrap();
    for (_, p) in &line.samples {
        assert!((p.x[2] - 0.375).abs() <= 1e-9, "tau drifted to {}", p.x[2]);
    }
    // The start lies on the invariant line theta2 = 1/4, which descends
    // into Q1 along its stable direction.
    assert_eq!(line.end_orbit, Some(fix.id("Q1")));
}

#[test]
fn starting_on_an_orbit_yields_a_constant_fragment() {
    let fix = Fixture::new("mapping_torus", &[]);
    let ctx = fix.ctx();
    let line = integrate_flow(
        &ctx,
        &Point::new(0, [0.5, 0.25, 0.2]),
        FlowDirection::Down,
        10.0,
        &settings(),
    )
    .unwrap();
    assert_eq!(line.outcome, FlowOutcome::Constant);
}

#[test]
fn torus_with_legs_descent_from_the_circle_reaches_lower_orbits() {
    let fix = Fixture::new("torus_with_legs", &[("n", 3.0)]);
    let ctx = fix.ctx();
    let start = Point::new(0, [1.3, std::f64::consts::PI - 0.01, 0.0]);
    let line = integrate_flow(&ctx, &start, FlowDirection::Down, 400.0, &settings()).unwrap();
    let end = line.end_orbit.expect("must resolve");
    let o = &fix.orbits[end];
    assert!(o.orbit_dim == 0, "ends at a saddle or minimum, got {}", o.label);
}

#[test]
fn flow_is_equivariant() {
    let fix = stabilized();
    let ctx = fix.ctx();
    let s = &fix.scenario;
    // Disable capture so both trajectories run to the same final time.
    let mut free = settings();
    free.capture_radius = 0.0;
    let mut checked = 0;
    for (i, x0) in [
        Point::new(0, [0.30, 0.40, 0.10]),
        Point::new(0, [0.62, 0.11, 0.55]),
        Point::new(0, [0.18, 0.93, 0.80]),
        Point::new(0, [0.77, 0.61, 0.33]),
        Point::new(0, [0.05, 0.37, 0.92]),
    ]
    .iter()
    .enumerate()
    {
        for a in [
            GroupElement::Circle(0.4),
            GroupElement::Circle(0.73),
            GroupElement::Circle(1.0),
            GroupElement::Circle(1.5),
        ] {
            let t_probe = 1.5 + 0.2 * (i as f64);
            let line1 = integrate_flow(&ctx, x0, FlowDirection::Down, t_probe, &free).unwrap();
            let moved = s.act(a, x0);
            let line2 = integrate_flow(&ctx, &moved, FlowDirection::Down, t_probe, &free).unwrap();
            let (t1, p1) = line1.samples.last().unwrap();
            let (t2, p2) = line2.samples.last().unwrap();
            assert!((t1 - t2).abs() <= 1e-9, "final times differ");
            let image = s.act(a, p1);
            assert!(
                s.distance(&image, p2) <= 1e-6,
                "equivariance residual {:e}",
                s.distance(&image, p2)
            );
            checked += 1;
        }
    }
    assert_eq!(checked, 20);
}

#[test]
fn isotropy_locus_is_flow_invariant() {
    let fix = Fixture::new("mapping_torus", &[]);
    let ctx = fix.ctx();
    for th1 in [0.0, 0.5] {
        for th2 in [0.1, 0.36, 0.8] {
            let line = integrate_flow(
                &ctx,
                &Point::new(0, [th1, th2, 0.25]),
                FlowDirection::Down,
                50.0,
                &settings(),
            )
            .unwrap();
            for (_, p) in &line.samples {
                let d0 = (p.x[0] - th1).abs().min((p.x[0] - th1 + 1.0).abs());
                assert!(
                    d0.min((p.x[0] - th1 - 1.0).abs()) <= 1e-8,
                    "left the fixed locus theta1={th1}: {:?}",
                    p.x
                );
            }
        }
    }
}

#[test]
fn capture_is_stable_under_a_smaller_radius() {
    let fix = stabilized();
    let ctx = fix.ctx();
    let mut small = settings();
    small.capture_radius = 1e-4;
    for x0 in [
        Point::new(0, [0.30, 0.40, 0.10]),
        Point::new(0, [0.62, 0.11, 0.55]),
        Point::new(0, [0.18, 0.93, 0.80]),
        Point::new(0, [0.44, 0.51, 0.0]),
    ] {
        let a = integrate_flow(&ctx, &x0, FlowDirection::Down, 400.0, &settings()).unwrap();
        let b = integrate_flow(&ctx, &x0, FlowDirection::Down, 400.0, &small).unwrap();
        assert_eq!(a.end_orbit, b.end_orbit, "capture radius changed the limit");
    }
}

#[test]
fn shooting_an_index1_orbit_gives_two_lines_per_point() {
    let fix = stabilized();
    let ctx = fix.ctx();
    let q1 = fix.id("Q1");
    let lines = shoot_descending_sphere(&ctx, q1, 2, 8, &settings()).unwrap();
    assert_eq!(lines.len(), 16);
    let rbar = fix.id("Rbar0");
    assert!(lines.iter().all(|l| l.end_orbit == Some(rbar)));
}

#[test]
fn moduli_covers_match_the_reference_differential_structure() {
    let fix = stabilized();
    let ctx = fix.ctx();
    let st = settings();
    let (s0, rbar0, r1p, q1, pbar1, p2p) = (
        fix.id("S0"),
        fix.id("Rbar0"),
        fix.id("R1p"),
        fix.id("Q1"),
        fix.id("Pbar1"),
        fix.id("P2p"),
    );

    // M(R1p, S0): one sheet, sign +1, double cover of the target.
    let c = extract_moduli_cover(&ctx, r1p, s0, &st).unwrap();
    assert_eq!(c.dim, 1);
    assert_eq!(c.fiber_dim, 0);
    assert_eq!(c.sheets.len(), 1);
    assert_eq!(c.sheets[0].sign, 1);
    assert_eq!(c.sheets[0].target_winding, 2);
    assert_eq!(c.sheets[0].one_form_coeff, Some((1, 1)));

    // M(R1p, Rbar0): one sheet, sign -1.
    let c = extract_moduli_cover(&ctx, r1p, rbar0, &st).unwrap();
    assert_eq!(c.sheets.len(), 1);
    assert_eq!(c.sheets[0].sign, -1);

    // M(Q1, Rbar0): two sheets with opposite signs (net zero).
    let c = extract_moduli_cover(&ctx, q1, rbar0, &st).unwrap();
    assert_eq!(c.sheets.len(), 2);
    let net: i32 = c.sheets.iter().map(|s| s.sign).sum();
    assert_eq!(net, 0);

    // M(Pbar1, S0): two sheets with opposite signs.
    let c = extract_moduli_cover(&ctx, pbar1, s0, &st).unwrap();
    assert_eq!(c.sheets.len(), 2);
    let net: i32 = c.sheets.iter().map(|s| s.sign).sum();
    assert_eq!(net, 0);

    // M(Q1, S0) is empty: the descending rays of Q1 stay on theta1 = 1/2.
    let c = extract_moduli_cover(&ctx, q1, s0, &st).unwrap();
    assert!(c.sheets.is_empty());

    // M(P2p, Q1): one sheet, sign +1; M(P2p, Pbar1): one sheet, sign -1.
    let c = extract_moduli_cover(&ctx, p2p, q1, &st).unwrap();
    assert_eq!(c.sheets.len(), 1, "saddle connections P2p -> Q1");
    assert_eq!(c.sheets[0].sign, 1);
    assert_eq!(c.sheets[0].target_winding, 2);
    let c = extract_moduli_cover(&ctx, p2p, pbar1, &st).unwrap();
    assert_eq!(c.sheets.len(), 1);
    assert_eq!(c.sheets[0].sign, -1);

    // M(P2p, S0): 1-dimensional fibers; the pulled-back dtau form
    // integrates to zero along the fibers.
    let c = extract_moduli_cover(&ctx, p2p, s0, &st).unwrap();
    assert_eq!(c.fiber_dim, 1);
    assert!(!c.sheets.is_empty());
    for sheet in &c.sheets {
        assert_eq!(sheet.one_form_coeff, Some((0, 1)));
    }

    // M(P2p, R1p): any saddle-saddle connections cancel in pairs.
    let c = extract_moduli_cover(&ctx, p2p, r1p, &st).unwrap();
    let net: i32 = c.sheets.iter().map(|s| s.sign).sum();
    assert_eq!(net, 0, "sheets {:?}", c.sheets);
}

#[test]
fn sphere_stabilized_covers_give_plus_one_into_both_poles() {
    let fix = Fixture::new("sphere_stabilized", &[]);
    let ctx = fix.ctx();
    let st = settings();
    let circle = fix.id("N'");
    for pole in ["N", "S"] {
        let c = extract_moduli_cover(&ctx, circle, fix.id(pole), &st).unwrap();
        assert_eq!(c.sheets.len(), 1, "one family into {pole}");
        assert_eq!(c.sheets[0].sign, 1, "sign into {pole}");
    }
}

#[test]
fn orientation_signs_are_reparametrization_and_group_invariant() {
    let fix = stabilized();
    let ctx = fix.ctx();
    let st = settings();
    let r1p = fix.id("R1p");
    let s0 = fix.id("S0");
    let base = orientation_sign(&ctx, r1p, s0, 0.0, &[1.0], &st).unwrap();
    // Shifting the starting point along the orbit preserves the sign.
    for k in 1..20 {
        let t = 2.0 * (k as f64) / 20.0;
        let sg = orientation_sign(&ctx, r1p, s0, t, &[1.0], &st).unwrap();
        assert_eq!(sg, base, "sign flipped at orbit parameter {t}");
    }
}

#[test]
fn torus_with_legs_has_the_classical_transversality_failure() {
    let fix = Fixture::new("torus_with_legs", &[("n", 3.0)]);
    let ctx = fix.ctx();
    let reports = diagnose_transversality(&ctx, &default_pairs(&fix.orbits), &settings()).unwrap();
    let circle = fix.id("S");
    let mut failures = 0;
    for r in &reports {
        if r.source == circle && fix.orbits[r.target].index == 1 {
            assert_eq!(r.verdict, TransversalityVerdict::FailureDetected);
            assert_eq!(r.expected_dim, -1);
            assert!(r.witness.is_some());
            failures += 1;
        }
    }
    assert_eq!(failures, 3, "one failure per saddle");
}

#[test]
fn mapping_torus_fails_between_the_two_index_one_orbits() {
    let fix = Fixture::new("mapping_torus", &[]);
    let ctx = fix.ctx();
    let reports = diagnose_transversality(&ctx, &default_pairs(&fix.orbits), &settings()).unwrap();
    let q1 = fix.id("Q1");
    let r1 = fix.id("R1");
    let fail = reports
        .iter()
        .find(|r| r.source == q1 && r.target == r1)
        .expect("pair (Q1, R1) must be diagnosed");
    assert_eq!(fail.verdict, TransversalityVerdict::FailureDetected);
    assert_eq!(fail.expected_dim, -1);
    assert!(fail.witness.is_some());
    assert!(fail.weak_self_indexing_violation);
}

#[test]
fn stabilized_mapping_torus_is_transversality_clean() {
    let fix = stabilized();
    let ctx = fix.ctx();
    let reports = diagnose_transversality(&ctx, &default_pairs(&fix.orbits), &settings()).unwrap();
    for r in &reports {
        assert_ne!(
            r.verdict,
            TransversalityVerdict::FailureDetected,
            "unexpected failure between {} and {}",
            fix.orbits[r.source].label,
            fix.orbits[r.target].label
        );
    }
}
