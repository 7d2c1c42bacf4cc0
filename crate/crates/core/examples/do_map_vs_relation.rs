//! The contrast in one screenful: a scenario whose input-output relation
//! defines no map at all still has a perfectly healthy interventional
//! evolution map on every branch. (This is the README tour, runnable.)

use docalc::analyzer::{classify, Classification};
use docalc::causal::{do_maps_for_scenario, quantum_do_map};
use docalc::scenarios::{scenario_from_json, Relation, Scenario};

fn main() {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../fixtures/q3.scenario.json"
    );
    let text = std::fs::read_to_string(path).unwrap();
    let Scenario::Quantum(sc) = scenario_from_json(&text).unwrap() else {
        unreachable!()
    };

    // The fitting recipe fails: two branches share an input but not an output.
    let report = classify(&Relation::Quantum(sc.generate_relation().unwrap())).unwrap();
    assert_eq!(report.classification, Classification::NoMap);
    println!("relation classification: {}", report.classification);

    // The interventional map exists anyway, and is CPTP by construction.
    let env = sc.fiducial.reduce(&[1]).unwrap();
    let dm = quantum_do_map(&sc.interaction, &env, sc.d_s1(), sc.d_s2).unwrap();
    assert!(dm.channel.is_completely_positive(1e-9).0);

    // Per preparation branch (the environment marginal can differ per branch,
    // the correlations never matter).
    for (label, dm) in do_maps_for_scenario(&sc).unwrap() {
        println!("branch {label}: {:?}", dm.channel.is_trace_preserving(1e-9));
    }
}
