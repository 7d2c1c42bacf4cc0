//! Structural invariants checked across the whole example corpus and over
//! randomized scenario families.
//!
//! These complement the acceptance suite: instead of pinning specific
//! numbers, they assert the laws the library is built around — evolution
//! maps are always physical, they depend on the environment only through
//! its marginal, branch-dependent inference maps reproduce the realized
//! statistics, and factorization is exactly what makes the two coincide.

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use docalc::analyzer::{classify, Classification};
use docalc::causal::{
    build_comb, classical_do_maps_for_scenario, coincidence_check, do_maps_for_scenario,
    jk_inference_maps, l_map_from_comb, quantum_do_map, steering_state, steering_update,
};
use docalc::classical::{classical_do_map, total_variation};
use docalc::corpus::{all_examples, check_fixture, find_example};
use docalc::mat::{trace_distance, DimSpec};
use docalc::quantum::{
    pauli_six_povm, random_density, random_unitary, DensityOperator, QuantumChannel,
};
use docalc::scenarios::{
    dephase_quantum_scenario, Label, QuantumPreparation, QuantumScenario, Relation, Scenario,
};

fn random_scenario(rng: &mut ChaCha8Rng) -> QuantumScenario {
    let d_s = rng.gen_range(2..=3usize);
    let d_e = rng.gen_range(2..=3usize);
    let fiducial = random_density(d_s * d_e, rng)
        .with_dims(DimSpec(vec![d_s, d_e]))
        .unwrap();
    let mut preps = BTreeMap::new();
    preps.insert(0u32, QuantumChannel::identity(d_s));
    preps.insert(1u32, QuantumChannel::from_unitary(&random_unitary(d_s, rng)));
    QuantumScenario::new(
        "random",
        fiducial,
        QuantumPreparation::SystemTransformation(preps),
        QuantumChannel::from_unitary(&random_unitary(d_s * d_e, rng)),
        d_s,
    )
    .unwrap()
}

/// Every stored expectation in the corpus still holds.
#[test]
fn corpus_expectations_hold() {
    let fixtures = all_examples().unwrap();
    assert_eq!(fixtures.len(), 27);
    for fixture in fixtures {
        let report = check_fixture(&fixture, 1e-9).unwrap();
        assert!(report.passed, "{}: {:?}", fixture.id, report.failures);
    }
}

/// Evolution maps are physical for every corpus scenario, branch by branch
/// and unconditionally — including the scenarios whose input-output
/// relations admit no map at all.
#[test]
fn do_maps_are_physical_across_the_corpus() {
    for fixture in all_examples().unwrap() {
        match &fixture.scenario {
            Scenario::Quantum(q) => {
                let mut channels: Vec<_> = do_maps_for_scenario(q)
                    .unwrap()
                    .into_values()
                    .map(|dm| dm.channel)
                    .collect();
                let env = q.fiducial.reduce(&[1]).unwrap();
                channels.push(quantum_do_map(&q.interaction, &env, q.d_s1(), q.d_s2)
                    .unwrap()
                    .channel);
                for ch in channels {
                    let (cp, min_eig) = ch.is_completely_positive(1e-9);
                    assert!(cp, "{}: Choi eigenvalue {min_eig:.3e}", fixture.id);
                    let (tp, dev) = ch.is_trace_preserving(1e-9);
                    assert!(tp, "{}: trace deviation {dev:.3e}", fixture.id);
                }
            }
            Scenario::Classical(cl) => {
                let mut matrices: Vec<_> = classical_do_maps_for_scenario(cl)
                    .unwrap()
                    .into_values()
                    .map(|dm| dm.matrix)
                    .collect();
                let env = cl.fiducial.marginal(&[1]).unwrap().flatten();
                matrices.push(classical_do_map(&cl.interaction, &env, cl.d_s1(), cl.d_s2).unwrap());
                for m in matrices {
                    assert!(m.matrix().min_entry() >= -1e-12, "{}", fixture.id);
                    assert!(m.matrix().column_sum_deviation() <= 1e-9, "{}", fixture.id);
                }
            }
        }
    }
}

/// Per-branch inference maps reproduce every realized classical pair: feed
/// the branch's input marginal through its own conditional matrix and the
/// branch's output marginal comes back.
#[test]
fn inference_maps_reproduce_realized_pairs() {
    for fixture in all_examples().unwrap() {
        let Scenario::Classical(cl) = &fixture.scenario else {
            continue;
        };
        let relation = cl.generate_relation().unwrap();
        let inferences = jk_inference_maps(cl).unwrap();
        assert_eq!(inferences.len(), relation.pairs().len(), "{}", fixture.id);
        for inf in &inferences {
            let pair = relation
                .pairs()
                .iter()
                .find(|p| p.label == inf.label)
                .unwrap_or_else(|| panic!("{}: no pair for {}", fixture.id, inf.label));
            let predicted = inf.apply(pair.input.as_slice()).unwrap();
            let dev = predicted
                .iter()
                .zip(pair.output.as_slice())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(dev <= 1e-10, "{} branch {}: deviation {dev:.3e}", fixture.id, inf.label);
        }
    }
}

/// Tracing a scenario's comb over its retained output always reproduces the
/// scenario's do-map.
#[test]
fn comb_contraction_equals_do_map_across_the_corpus() {
    for fixture in all_examples().unwrap() {
        let Scenario::Quantum(q) = &fixture.scenario else {
            continue;
        };
        let l_map = l_map_from_comb(&build_comb(q).unwrap()).unwrap();
        let env = q.fiducial.reduce(&[1]).unwrap();
        let dm = quantum_do_map(&q.interaction, &env, q.d_s1(), q.d_s2).unwrap();
        assert!(
            l_map.choi().max_abs_diff(dm.channel.choi()) <= 1e-10,
            "{}",
            fixture.id
        );
    }
}

/// Where correlations carry information, the do-map's prediction and the
/// realized output differ — and by a lot on the designed examples.
#[test]
fn correlated_branches_defeat_do_map_prediction() {
    let Scenario::Quantum(q3) = find_example("q3").unwrap().scenario else {
        panic!("q3 is quantum");
    };
    let env = q3.fiducial.reduce(&[1]).unwrap();
    let dm = quantum_do_map(&q3.interaction, &env, 2, 2).unwrap();
    for pair in q3.generate_relation().unwrap().pairs() {
        let predicted = dm.channel.apply_matrix(pair.input.matrix());
        let gap = trace_distance(&predicted, pair.output.matrix()).unwrap();
        assert!(gap > 0.4, "branch {}: gap {gap}", pair.label);
    }

    let Scenario::Classical(c3) = find_example("c3").unwrap().scenario else {
        panic!("c3 is classical");
    };
    let env = c3.fiducial.marginal(&[1]).unwrap().flatten();
    let dm = classical_do_map(&c3.interaction, &env, 2, 2).unwrap();
    for pair in c3.generate_relation().unwrap().pairs() {
        let predicted = dm.apply(&pair.input).unwrap();
        let gap = total_variation(&predicted, &pair.output).unwrap();
        assert!(gap > 0.4, "branch {}: gap {gap}", pair.label);
    }
}

/// Factorization of the realized joint is exactly the regime where branch
/// inference and intervention coincide: true on the product-state example,
/// false on the correlated one.
#[test]
fn coincidence_tracks_factorization() {
    let q2 = find_example("q2").unwrap().scenario;
    let q3 = find_example("q3").unwrap().scenario;
    for label in [Label::setting(0), Label::setting(1)] {
        assert!(coincidence_check(&q2, label, 1e-9).unwrap(), "q2 {label}");
        assert!(!coincidence_check(&q3, label, 1e-9).unwrap(), "q3 {label}");
    }
    let c2 = find_example("c2").unwrap().scenario;
    let c3 = find_example("c3").unwrap().scenario;
    for label in [Label::setting(0), Label::setting(1)] {
        assert!(coincidence_check(&c2, label, 1e-9).unwrap(), "c2 {label}");
        assert!(!coincidence_check(&c3, label, 1e-9).unwrap(), "c3 {label}");
    }
}

/// Dephasing separates the two sources of pathology: classical correlation
/// survives the translation (the one-to-many example stays map-less), while
/// coherence does not (the distinguishability-expansion example collapses to
/// an ordinary stochastic relation once its superpositions are diagonal).
#[test]
fn dephasing_separates_correlation_from_coherence() {
    let Scenario::Quantum(q3) = find_example("q3").unwrap().scenario else {
        panic!("q3 is quantum");
    };
    let classical = dephase_quantum_scenario(&q3).unwrap();
    let report = classify(&Relation::Classical(classical.generate_relation().unwrap())).unwrap();
    assert_eq!(report.classification, Classification::NoMap);

    let Scenario::Quantum(q2) = find_example("q2").unwrap().scenario else {
        panic!("q2 is quantum");
    };
    let classical = dephase_quantum_scenario(&q2).unwrap();
    let report = classify(&Relation::Classical(classical.generate_relation().unwrap())).unwrap();
    assert_eq!(report.classification, Classification::Stochastic);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Evolution maps of arbitrary unitary scenarios are CPTP on every
    /// branch — no matter how the fiducial state correlates system and
    /// environment.
    #[test]
    fn do_maps_are_physical_for_random_scenarios(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sc = random_scenario(&mut rng);
        for (label, dm) in do_maps_for_scenario(&sc).unwrap() {
            let (cp, min_eig) = dm.channel.is_completely_positive(1e-9);
            prop_assert!(cp, "branch {}: Choi eigenvalue {:.3e}", label, min_eig);
            let (tp, dev) = dm.channel.is_trace_preserving(1e-9);
            prop_assert!(tp, "branch {}: trace deviation {:.3e}", label, dev);
        }
    }

    /// The do-map is a function of the interaction and the environment
    /// marginal alone: erasing all system-environment correlations from the
    /// fiducial state leaves it unchanged.
    #[test]
    fn do_map_ignores_fiducial_correlations(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d_s = rng.gen_range(2..=3usize);
        let d_e = rng.gen_range(2..=3usize);
        let correlated = random_density(d_s * d_e, &mut rng)
            .with_dims(DimSpec(vec![d_s, d_e]))
            .unwrap();
        let product = DensityOperator::product(
            &correlated.reduce(&[0]).unwrap(),
            &correlated.reduce(&[1]).unwrap(),
        );
        let u = QuantumChannel::from_unitary(&random_unitary(d_s * d_e, &mut rng));
        let dm_corr =
            quantum_do_map(&u, &correlated.reduce(&[1]).unwrap(), d_s, d_s).unwrap();
        let dm_prod = quantum_do_map(&u, &product.reduce(&[1]).unwrap(), d_s, d_s).unwrap();
        let dev = dm_corr.channel.choi().max_abs_diff(dm_prod.channel.choi());
        prop_assert!(dev <= 1e-10, "Choi deviation {:.3e}", dev);
    }

    /// Steering updates over a complete measurement form a distribution, and
    /// mixing the conditional states back together returns the slot-agnostic
    /// output of the maximally mixed input.
    #[test]
    fn steering_updates_resolve_the_mixed_output(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d_s = 2usize;
        let d_e = rng.gen_range(2..=3usize);
        let fiducial = random_density(d_s * d_e, &mut rng)
            .with_dims(DimSpec(vec![d_s, d_e]))
            .unwrap();
        let mut preps = BTreeMap::new();
        preps.insert(0u32, QuantumChannel::identity(d_s));
        let sc = QuantumScenario::new(
            "steer",
            fiducial,
            QuantumPreparation::SystemTransformation(preps),
            QuantumChannel::from_unitary(&random_unitary(d_s * d_e, &mut rng)),
            d_s,
        )
        .unwrap();
        let comb = build_comb(&sc).unwrap();
        let sigma = steering_state(&comb).unwrap();
        let l_map = l_map_from_comb(&comb).unwrap();
        let mixed_out = l_map.apply_matrix(
            DensityOperator::maximally_mixed(d_s).matrix(),
        );

        let mut total = 0.0;
        let mut recombined = docalc::mat::ComplexMatrix::zeros(d_s, d_s);
        for effect in pauli_six_povm().effects() {
            let (p, cond) = steering_update(&sigma, effect).unwrap();
            total += p;
            recombined = &recombined + &cond.matrix().scale(docalc::mat::c(p, 0.0));
        }
        prop_assert!((total - 1.0).abs() <= 1e-9, "probabilities sum to {}", total);
        prop_assert!(recombined.max_abs_diff(&mixed_out) <= 1e-9);
    }

    /// Scenario JSON written by the high-precision emitter reloads to a
    /// scenario with bit-identical do-maps.
    #[test]
    fn scenario_json_round_trips(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sc = random_scenario(&mut rng);
        let text = docalc::emit::json_string(&Scenario::Quantum(sc.clone()));
        let reloaded = docalc::scenarios::scenario_from_json(&text).unwrap();
        let Scenario::Quantum(re) = reloaded else {
            panic!("round trip changed the regime");
        };
        let before = do_maps_for_scenario(&sc).unwrap();
        let after = do_maps_for_scenario(&re).unwrap();
        prop_assert_eq!(before.len(), after.len());
        for (label, dm) in &before {
            let dev = dm.channel.choi().max_abs_diff(after[label].channel.choi());
            prop_assert!(dev == 0.0, "branch {}: deviation {:.3e}", label, dev);
        }
    }
}
