use std::collections::BTreeMap;
use morsebott::critstruct::find_critical_orbits;
use morsebott::flow::*;
use morsebott::geometry::build_scenario;

fn main() {
    let s = build_scenario("mapping_torus_stabilized", &BTreeMap::new()).unwrap();
    let seeds = s.sample_points(16);
    let orbits = find_critical_orbits(&s, &seeds).unwrap().orbits;
    let ctx = FlowContext::new(&s, &orbits);
    let st = FlowSettings::default();
    let p2p = orbits.iter().find(|o| o.label == "P2p").unwrap().id;
    let r1p = orbits.iter().find(|o| o.label == "R1p").unwrap().id;
    let angles = debug_connection_angles(&ctx, p2p, r1p, 0.0, &st).unwrap();
    println!("angles {:?}", angles);
    debug_transport_trace(&ctx, p2p, r1p, 0.0, angles[0], &st);
}
