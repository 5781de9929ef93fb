//! Applying stabilization recipes: predicted critical sets, index shifts,
//! locality, stability of the result, and C1-closeness.

use std::collections::BTreeMap;

use morsebott::critstruct::find_critical_orbits;
use morsebott::geometry::{build_scenario, Point, Scenario};
use morsebott::stabilize::{
    apply_stabilization, c1_distance, verify_index_shift, SphereFunction, StabilizationRecipe,
};

fn orbits_of(s: &Scenario, density: usize) -> Vec<morsebott::critstruct::CriticalOrbit> {
    find_critical_orbits(s, &s.sample_points(density)).unwrap().orbits
}

#[test]
fn stabilizing_the_sphere_pole_creates_a_dimple_circle() {
    let s = build_scenario("sphere_height", &BTreeMap::new()).unwrap();
    let orbits = orbits_of(&s, 8);
    let recipe = StabilizationRecipe::with_defaults("N", 0.2).unwrap();
    let applied = apply_stabilization(&s, &orbits, &recipe).unwrap();
    assert!(applied.warnings.is_empty());
    let new_orbits = orbits_of(&applied.scenario, 12);
    assert_eq!(new_orbits.len(), 3);
    let n = new_orbits.iter().find(|o| o.label == "N").unwrap();
    let np = new_orbits.iter().find(|o| o.label == "N'").unwrap();
    let south = new_orbits.iter().find(|o| o.label == "S").unwrap();
    assert_eq!(n.index, 0, "the pole becomes a minimum");
    assert_eq!(np.index, 1, "the dimple circle has index 1");
    assert_eq!(np.orbit_dim, 1);
    assert_eq!(south.index, 0);
    assert!(new_orbits.iter().all(|o| o.stable));
    let checks = verify_index_shift(&applied.scenario, &new_orbits).unwrap();
    assert_eq!(checks.len(), 1);
}

#[test]
fn stabilizing_both_mapping_torus_sites_reproduces_the_catalogue_entry() {
    let s = build_scenario("mapping_torus", &BTreeMap::new()).unwrap();
    let orbits = orbits_of(&s, 8);
    let r1 = StabilizationRecipe::with_defaults("R1", 0.2).unwrap();
    let step1 = apply_stabilization(&s, &orbits, &r1).unwrap();
    let orbits1 = orbits_of(&step1.scenario, 16);
    // R1 replaced by Rbar0 and R1p; P2 still unstable.
    assert_eq!(orbits1.len(), 5);
    assert!(orbits1.iter().any(|o| o.label == "Rbar0" && o.index == 0));
    assert!(orbits1.iter().any(|o| o.label == "R1p" && o.index == 1));
    let p2 = StabilizationRecipe::with_defaults("P2", 0.2).unwrap();
    let step2 = apply_stabilization(&step1.scenario, &orbits1, &p2).unwrap();
    let orbits2 = orbits_of(&step2.scenario, 16);
    let labels: Vec<&str> = orbits2.iter().map(|o| o.label.as_str()).collect();
    assert_eq!(labels, vec!["S0", "Rbar0", "R1p", "Q1", "Pbar1", "P2p"]);
    let indices: Vec<usize> = orbits2.iter().map(|o| o.index).collect();
    assert_eq!(indices, vec![0, 0, 1, 1, 1, 2]);
    assert!(orbits2.iter().all(|o| o.stable), "stabilized function is stable");
    // Index shift at both sites.
    let checks = verify_index_shift(&step2.scenario, &orbits2).unwrap();
    assert_eq!(checks.len(), 2);
    for c in &checks {
        for e in &c.entries {
            assert_eq!(e.expected_index, e.actual_index);
        }
    }
}

#[test]
fn recipes_targeting_stable_orbits_are_refused() {
    let s = build_scenario("mapping_torus", &BTreeMap::new()).unwrap();
    let orbits = orbits_of(&s, 8);
    let recipe = StabilizationRecipe::with_defaults("Q1", 0.2).unwrap();
    let err = apply_stabilization(&s, &orbits, &recipe).unwrap_err();
    assert!(err.to_string().contains("refused"));
}

#[test]
fn nonconstant_sphere_functions_are_rejected_on_zero_spheres() {
    let s = build_scenario("mapping_torus", &BTreeMap::new()).unwrap();
    let orbits = orbits_of(&s, 8);
    let mut recipe = StabilizationRecipe::with_defaults("R1", 0.2).unwrap();
    recipe.sphere_function = SphereFunction::CircleCosine { amplitude: 0.5 };
    assert!(apply_stabilization(&s, &orbits, &recipe).is_err());
}

#[test]
fn oversized_slice_balls_are_flagged() {
    let s = build_scenario("mapping_torus", &BTreeMap::new()).unwrap();
    let orbits = orbits_of(&s, 8);
    let recipe = StabilizationRecipe::with_defaults("R1", 0.3).unwrap();
    let applied = apply_stabilization(&s, &orbits, &recipe).unwrap();
    assert_eq!(applied.warnings.len(), 1);
    assert!(applied.warnings[0].contains("injectivity"));
}

#[test]
fn stabilization_is_local_exactly() {
    let base = build_scenario("mapping_torus", &BTreeMap::new()).unwrap();
    let stab = build_scenario("mapping_torus_stabilized", &BTreeMap::new()).unwrap();
    // Outside both perturbation strips |x1| <= 3 lambda + delta the two
    // functions agree bit for bit.
    let support = 3.0 * 0.2 + 0.025;
    let mut checked = 0;
    for p in base.sample_points(14) {
        let x1_p = (1.0 - (std::f64::consts::TAU * p.x[0]).cos()).sqrt();
        let x1_r = (1.0 + (std::f64::consts::TAU * p.x[0]).cos()).sqrt();
        if x1_p > support + 1e-9 && x1_r > support + 1e-9 {
            assert_eq!(stab.value(&p), base.value(&p), "at {:?}", p.x);
            checked += 1;
        }
    }
    assert!(checked > 500);
}

#[test]
fn c1_distance_decreases_with_lambda() {
    let base = build_scenario("mapping_torus", &BTreeMap::new()).unwrap();
    let mut sups = Vec::new();
    for lambda in [0.2, 0.1, 0.05] {
        let mut params = BTreeMap::new();
        params.insert("lambda".to_string(), lambda);
        let stab = build_scenario("mapping_torus_stabilized", &params).unwrap();
        sups.push(c1_distance(&base, &stab, 24));
    }
    assert!(
        sups[0] > sups[1] && sups[1] > sups[2],
        "C1 distances {sups:?} must decrease"
    );
}

#[test]
fn applied_stabilization_keeps_the_invariance_suite() {
    let s = build_scenario("sphere_height", &BTreeMap::new()).unwrap();
    let orbits = orbits_of(&s, 8);
    let recipe = StabilizationRecipe::with_defaults("N", 0.2).unwrap();
    let applied = apply_stabilization(&s, &orbits, &recipe).unwrap();
    let t = &applied.scenario;
    // Invariance of the new function and its analytic derivatives.
    for p in t.sample_points(9).iter().take(80) {
        let f0 = t.value(p);
        for e in t.action.sample_elements() {
            let q = t.act(e, p);
            assert!((t.value(&q) - f0).abs() <= 1e-10);
        }
        let h = 1e-5;
        let g = t.df(p);
        for i in 0..2 {
            let mut xp = p.x;
            xp[i] += h;
            let mut xm = p.x;
            xm[i] -= h;
            let fd = (t.value(&Point::new(p.chart, xp)) - t.value(&Point::new(p.chart, xm)))
                / (2.0 * h);
            assert!(((g[i] - fd) / g[i].abs().max(1.0)).abs() <= 1e-6);
        }
    }
}
