//! Worked examples with machine-checkable expectations.
//!
//! Two sources of fixtures live here:
//!
//! * [`builtin_examples`] — nine hand-built circuits (six minimal ones, a
//!   one-time pad, a keyed Pauli scrambler, and a pointer measurement), each
//!   carrying the relation, classification and do-maps it must produce;
//! * [`generate_quantum_family`] / [`generate_classical_family`] — parametric
//!   generators covering every pairing of three circuit shapes with three
//!   relation pathologies, in both regimes (18 cells). A seed rotates each
//!   family through a symmetry of its regime (a random unitary frame, or an
//!   ontic relabelling) without changing what it demonstrates.
//!
//! [`check_fixture`] replays a fixture through the full pipeline and reports
//! every deviation from its expectations; the generators also re-classify
//! their own output and refuse parameters outside the window where the
//! designed pathology actually holds.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analyzer::{classify_with, Classification, ClassifyOptions};
use crate::causal::{
    classical_do_maps_for_scenario, do_maps_for_scenario, quantum_do_map, DoLabel,
};
use crate::classical::{classical_do_map, JointDist, ProbDist, RealMatrix, StochasticMatrix};
use crate::error::{Error, Result};
use crate::mat::{c, tensor, ComplexMatrix, DimSpec, C64};
use crate::quantum::{
    gates, random_unitary, DensityOperator, Instrument, QuantumChannel, UnitaryOperator,
};
use crate::scenarios::{
    ClassicalInstrument, ClassicalPair, ClassicalPreparation, ClassicalRelation,
    ClassicalScenario, Label, QuantumPair, QuantumPreparation, QuantumRelation, QuantumScenario,
    Relation, Scenario,
};
use crate::DEFAULT_TOL;

// ---------------------------------------------------------------------------
// Fixture types
// ---------------------------------------------------------------------------

/// Expected do-maps of a fixture, keyed by the knowledge state they condition
/// on (the unconditional circuit or one realized branch).
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum ExpectedDoMaps {
    Quantum(BTreeMap<DoLabel, QuantumChannel>),
    Classical(BTreeMap<DoLabel, StochasticMatrix>),
}

/// A worked example: a scenario plus everything the pipeline should say
/// about it.
#[derive(Debug, Clone, Serialize)]
pub struct ExampleFixture {
    /// Stable lookup key (`q1`, `c3`, `family-q-b2`, ...).
    pub id: String,
    /// One-line description of the construction and what it demonstrates.
    pub origin: String,
    pub scenario: Scenario,
    pub expected_classification: Classification,
    /// Branch-by-branch relation, when compact enough to state explicitly.
    pub expected_relation: Option<Relation>,
    pub expected_do_maps: ExpectedDoMaps,
    /// Parameter windows, reading hints, caveats.
    pub notes: String,
}

/// Outcome of replaying one fixture through the pipeline.
#[derive(Debug, Clone, Serialize)]
pub struct FixtureReport {
    pub id: String,
    /// What the classifier actually said.
    pub classification: Classification,
    pub passed: bool,
    /// Human-readable mismatch descriptions; empty iff `passed`.
    pub failures: Vec<String>,
}

// ---------------------------------------------------------------------------
// Fixture checking
// ---------------------------------------------------------------------------

/// Replay `fixture.scenario` through relation generation, classification and
/// do-map construction, and compare against every expectation the fixture
/// carries. Mismatches are collected, not short-circuited.
pub fn check_fixture(fixture: &ExampleFixture, tol: f64) -> Result<FixtureReport> {
    let mut failures = Vec::new();

    let relation = fixture.scenario.generate_relation()?;
    let opts = ClassifyOptions {
        tol,
        ..ClassifyOptions::default()
    };
    let report = classify_with(&relation, &opts)?;
    if report.classification != fixture.expected_classification {
        failures.push(format!(
            "classification: expected {:?}, got {:?}",
            fixture.expected_classification, report.classification
        ));
    }

    match (&fixture.expected_relation, &relation) {
        (Some(Relation::Quantum(want)), Relation::Quantum(got)) => {
            diff_quantum_relation(want, got, tol, &mut failures)
        }
        (Some(Relation::Classical(want)), Relation::Classical(got)) => {
            diff_classical_relation(want, got, tol, &mut failures)
        }
        (Some(_), _) => {
            return Err(Error::InvalidParam(
                "expected relation and scenario disagree on the regime".into(),
            ))
        }
        (None, _) => {}
    }

    match (&fixture.scenario, &fixture.expected_do_maps) {
        (Scenario::Quantum(sc), ExpectedDoMaps::Quantum(want)) => {
            diff_quantum_do_maps(sc, want, tol, &mut failures)?
        }
        (Scenario::Classical(sc), ExpectedDoMaps::Classical(want)) => {
            diff_classical_do_maps(sc, want, tol, &mut failures)?
        }
        _ => {
            return Err(Error::InvalidParam(
                "expected do-maps and scenario disagree on the regime".into(),
            ))
        }
    }

    Ok(FixtureReport {
        id: fixture.id.clone(),
        classification: report.classification,
        passed: failures.is_empty(),
        failures,
    })
}

fn diff_quantum_relation(
    want: &QuantumRelation,
    got: &QuantumRelation,
    tol: f64,
    failures: &mut Vec<String>,
) {
    if want.pairs().len() != got.pairs().len() {
        failures.push(format!(
            "relation: expected {} branches, got {}",
            want.pairs().len(),
            got.pairs().len()
        ));
        return;
    }
    let mut want_sorted: Vec<&QuantumPair> = want.pairs().iter().collect();
    want_sorted.sort_by_key(|p| p.label);
    for (w, g) in want_sorted.iter().zip(got.pairs()) {
        if w.label != g.label {
            failures.push(format!("relation: branch {} missing (got {})", w.label, g.label));
            continue;
        }
        if (w.weight - g.weight).abs() > tol {
            failures.push(format!(
                "relation {}: weight {} vs {}",
                w.label, w.weight, g.weight
            ));
        }
        let din = w.input.matrix().max_abs_diff(g.input.matrix());
        if din > tol {
            failures.push(format!("relation {}: input state off by {din:.2e}", w.label));
        }
        let dout = w.output.matrix().max_abs_diff(g.output.matrix());
        if dout > tol {
            failures.push(format!("relation {}: output state off by {dout:.2e}", w.label));
        }
    }
}

fn diff_classical_relation(
    want: &ClassicalRelation,
    got: &ClassicalRelation,
    tol: f64,
    failures: &mut Vec<String>,
) {
    if want.pairs().len() != got.pairs().len() {
        failures.push(format!(
            "relation: expected {} branches, got {}",
            want.pairs().len(),
            got.pairs().len()
        ));
        return;
    }
    let mut want_sorted: Vec<&ClassicalPair> = want.pairs().iter().collect();
    want_sorted.sort_by_key(|p| p.label);
    for (w, g) in want_sorted.iter().zip(got.pairs()) {
        if w.label != g.label {
            failures.push(format!("relation: branch {} missing (got {})", w.label, g.label));
            continue;
        }
        if (w.weight - g.weight).abs() > tol {
            failures.push(format!(
                "relation {}: weight {} vs {}",
                w.label, w.weight, g.weight
            ));
        }
        let din = max_abs_diff_dist(&w.input, &g.input);
        if din > tol {
            failures.push(format!("relation {}: input off by {din:.2e}", w.label));
        }
        let dout = max_abs_diff_dist(&w.output, &g.output);
        if dout > tol {
            failures.push(format!("relation {}: output off by {dout:.2e}", w.label));
        }
    }
}

fn max_abs_diff_dist(a: &ProbDist, b: &ProbDist) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn diff_quantum_do_maps(
    sc: &QuantumScenario,
    want: &BTreeMap<DoLabel, QuantumChannel>,
    tol: f64,
    failures: &mut Vec<String>,
) -> Result<()> {
    let branch_maps = do_maps_for_scenario(sc)?;
    for (key, expected) in want {
        let got = match key {
            DoLabel::Unconditional => {
                let env = sc.fiducial.reduce(&[1])?;
                quantum_do_map(&sc.interaction, &env, sc.d_s1(), sc.d_s2)?.channel
            }
            DoLabel::Branch(label) => match branch_maps.get(label) {
                Some(dm) => dm.channel.clone(),
                None => {
                    failures.push(format!("do-map {key}: branch not realized"));
                    continue;
                }
            },
        };
        let diff = expected.choi().max_abs_diff(got.choi());
        if diff > tol {
            failures.push(format!("do-map {key}: Choi matrix off by {diff:.2e}"));
        }
    }
    Ok(())
}

fn diff_classical_do_maps(
    sc: &ClassicalScenario,
    want: &BTreeMap<DoLabel, StochasticMatrix>,
    tol: f64,
    failures: &mut Vec<String>,
) -> Result<()> {
    let branch_maps = classical_do_maps_for_scenario(sc)?;
    for (key, expected) in want {
        let got = match key {
            DoLabel::Unconditional => {
                let env = sc.fiducial.marginal(&[1])?.flatten();
                classical_do_map(&sc.interaction, &env, sc.d_s1(), sc.d_s2)?
            }
            DoLabel::Branch(label) => match branch_maps.get(label) {
                Some(dm) => dm.matrix.clone(),
                None => {
                    failures.push(format!("do-map {key}: branch not realized"));
                    continue;
                }
            },
        };
        let diff = expected.matrix().max_abs_diff(got.matrix());
        if diff > tol {
            failures.push(format!("do-map {key}: matrix off by {diff:.2e}"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// State-building helpers
// ---------------------------------------------------------------------------

fn pure(amps: &[C64]) -> DensityOperator {
    DensityOperator::single(ComplexMatrix::ket(amps).projector(), DEFAULT_TOL)
        .expect("unit ket projector")
}

fn qb_zero() -> DensityOperator {
    pure(&[c(1.0, 0.0), c(0.0, 0.0)])
}

fn qb_one() -> DensityOperator {
    pure(&[c(0.0, 0.0), c(1.0, 0.0)])
}

fn qb_plus() -> DensityOperator {
    pure(&[c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)])
}

fn qb_minus() -> DensityOperator {
    pure(&[c(FRAC_1_SQRT_2, 0.0), c(-FRAC_1_SQRT_2, 0.0)])
}

fn qb_plus_i() -> DensityOperator {
    pure(&[c(FRAC_1_SQRT_2, 0.0), c(0.0, FRAC_1_SQRT_2)])
}

fn qb_minus_i() -> DensityOperator {
    pure(&[c(FRAC_1_SQRT_2, 0.0), c(0.0, -FRAC_1_SQRT_2)])
}

fn bloch(x: f64, y: f64, z: f64) -> DensityOperator {
    let m = ComplexMatrix::from_rows(vec![
        vec![c(0.5 * (1.0 + z), 0.0), c(0.5 * x, -0.5 * y)],
        vec![c(0.5 * x, 0.5 * y), c(0.5 * (1.0 - z), 0.0)],
    ])
    .expect("2x2 rows");
    DensityOperator::single(m, DEFAULT_TOL).expect("Bloch vector inside the ball")
}

/// Four pure states whose Bloch vectors form a regular tetrahedron: an
/// informationally complete set averaging to the maximally mixed state.
fn tetrahedral() -> Vec<DensityOperator> {
    let r = 1.0 / 3.0f64.sqrt();
    vec![
        bloch(r, r, r),
        bloch(r, -r, -r),
        bloch(-r, r, -r),
        bloch(-r, -r, r),
    ]
}

fn transposed(rho: &DensityOperator) -> DensityOperator {
    DensityOperator::single(rho.matrix().transpose(), DEFAULT_TOL)
        .expect("transpose of a state is a state")
}

fn rotate(rho: &DensityOperator, frame: Option<&UnitaryOperator>) -> DensityOperator {
    match frame {
        None => rho.clone(),
        Some(w) => DensityOperator::single(rho.matrix().conjugate_by(w.matrix()), DEFAULT_TOL)
            .expect("unitary image of a state"),
    }
}

fn rotate_all(states: &[DensityOperator], frame: Option<&UnitaryOperator>) -> Vec<DensityOperator> {
    states.iter().map(|s| rotate(s, frame)).collect()
}

fn add_scaled(acc: &mut ComplexMatrix, other: &ComplexMatrix, factor: C64) {
    for r in 0..other.rows() {
        for col in 0..other.cols() {
            acc.add_at(r, col, other.get(r, col) * factor);
        }
    }
}

/// `(1 - w) a + w b`.
fn mix_states(a: &DensityOperator, b: &DensityOperator, w: f64) -> DensityOperator {
    let mut m = a.matrix().scale(c(1.0 - w, 0.0));
    add_scaled(&mut m, b.matrix(), c(w, 0.0));
    DensityOperator::single(m, DEFAULT_TOL).expect("convex mixture of states")
}

fn average_state(states: &[DensityOperator]) -> DensityOperator {
    let d = states[0].dim_total();
    let mut m = ComplexMatrix::zeros(d, d);
    let w = c(1.0 / states.len() as f64, 0.0);
    for s in states {
        add_scaled(&mut m, s.matrix(), w);
    }
    DensityOperator::single(m, DEFAULT_TOL).expect("average of states")
}

fn basis_proj(d: usize, i: usize) -> ComplexMatrix {
    ComplexMatrix::basis_ket(d, i).projector()
}

/// Maximally entangled pair of qubits, dims `[2, 2]`.
fn entangled_pair() -> DensityOperator {
    let s = FRAC_1_SQRT_2;
    let ket = ComplexMatrix::ket(&[c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(s, 0.0)]);
    DensityOperator::new(ket.projector(), DimSpec(vec![2, 2]), DEFAULT_TOL)
        .expect("entangled pair")
}

fn joint_state(system: &DensityOperator, env: &DensityOperator) -> DensityOperator {
    DensityOperator::new(
        tensor(system.matrix(), env.matrix()),
        DimSpec(vec![system.dim_total(), env.dim_total()]),
        DEFAULT_TOL,
    )
    .expect("product joint state")
}

fn dist(values: &[f64]) -> ProbDist {
    ProbDist::new(values.to_vec(), DEFAULT_TOL).expect("probability vector")
}

fn average_dist(dists: &[ProbDist]) -> ProbDist {
    let mut v = vec![0.0; dists[0].len()];
    for p in dists {
        for (slot, x) in v.iter_mut().zip(p.as_slice()) {
            *slot += x / dists.len() as f64;
        }
    }
    dist(&v)
}

/// Every column equals `target`.
fn constant_stochastic(target: &ProbDist, d_in: usize) -> StochasticMatrix {
    let mut m = RealMatrix::zeros(target.len(), d_in);
    for col in 0..d_in {
        for (row, &v) in target.as_slice().iter().enumerate() {
            m.set(row, col, v);
        }
    }
    StochasticMatrix::new(m, DEFAULT_TOL).expect("columns are distributions")
}

/// Uniform distribution on the diagonal: perfectly correlated pair.
fn maximally_correlated(d: usize) -> JointDist {
    let mut v = vec![0.0; d * d];
    for s in 0..d {
        v[s * d + s] = 1.0 / d as f64;
    }
    JointDist::new(v, DimSpec(vec![d, d]), DEFAULT_TOL).expect("correlated pair")
}

/// Swap of two d-valued registers as a column-stochastic permutation.
fn swap_stochastic(d: usize) -> StochasticMatrix {
    let mut f = vec![0usize; d * d];
    for s in 0..d {
        for e in 0..d {
            f[s * d + e] = e * d + s;
        }
    }
    StochasticMatrix::from_function(&f, d * d).expect("swap permutation")
}

// ---------------------------------------------------------------------------
// Interaction builders shared by fixtures and families
// ---------------------------------------------------------------------------

/// Read the environment label `e` and reprepare the system in `targets[e]`,
/// discarding everything else. A measure-and-reprepare channel
/// `(S1, E) -> S2` with a trivial final environment.
fn env_readout_channel(targets: &[DensityOperator], d_s: usize) -> QuantumChannel {
    let n = targets.len();
    let d_out = targets[0].dim_total();
    QuantumChannel::from_action(d_s * n, d_out, |m| {
        let mut out = ComplexMatrix::zeros(d_out, d_out);
        for (k, t) in targets.iter().enumerate() {
            let mut p = c(0.0, 0.0);
            for s in 0..d_s {
                p += m.get(s * n + k, s * n + k);
            }
            add_scaled(&mut out, t.matrix(), p);
        }
        out
    })
    .expect("measure-and-reprepare channel")
}

/// Measure two qubits in the maximally entangled basis and reprepare a
/// single qubit in `targets[k]` on outcome `k`.
fn bell_readout_channel(targets: &[DensityOperator]) -> QuantumChannel {
    let s = FRAC_1_SQRT_2;
    let phi = ComplexMatrix::ket(&[c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(s, 0.0)]);
    let bells: Vec<ComplexMatrix> = gates::paulis()
        .iter()
        .map(|p| tensor(p, &ComplexMatrix::identity(2)).matmul(&phi))
        .collect();
    let targets = targets.to_vec();
    QuantumChannel::from_action(4, 2, move |m| {
        let mut out = ComplexMatrix::zeros(2, 2);
        for (b, t) in bells.iter().zip(&targets) {
            let amp = b.adjoint().matmul(m).matmul(b).get(0, 0);
            add_scaled(&mut out, t.matrix(), amp);
        }
        out
    })
    .expect("entangled-basis readout channel")
}

/// With probability `1 - eps` conjugate by `unitary`; with probability `eps`
/// discard and reprepare `reprepare`.
fn noisy_recode_channel(
    unitary: &ComplexMatrix,
    reprepare: &DensityOperator,
    eps: f64,
) -> QuantumChannel {
    let d = unitary.rows();
    let unitary = unitary.clone();
    let reprepare = reprepare.clone();
    QuantumChannel::from_action(d, d, move |m| {
        let mut out = m.conjugate_by(&unitary).scale(c(1.0 - eps, 0.0));
        add_scaled(&mut out, reprepare.matrix(), m.trace() * eps);
        out
    })
    .expect("noisy recode channel")
}

/// Two-element instrument: outcome 0 fires with probability `Tr(effect ρ)`
/// and reprepares `target`; outcome 1 completes the instrument by dumping
/// the remaining weight on the maximally mixed state.
fn effect_reprepare_instrument(
    effect: &ComplexMatrix,
    target: &DensityOperator,
) -> Result<Instrument> {
    let d = effect.rows();
    let keep = {
        let effect = effect.clone();
        let target = target.clone();
        QuantumChannel::from_action(d, d, move |m| {
            target.matrix().scale(effect.matmul(m).trace())
        })?
    };
    let rest = {
        let mut residual = ComplexMatrix::identity(d);
        add_scaled(&mut residual, effect, c(-1.0, 0.0));
        let dump = DensityOperator::maximally_mixed(d);
        QuantumChannel::from_action(d, d, move |m| {
            dump.matrix().scale(residual.matmul(m).trace())
        })?
    };
    Instrument::new(vec![keep, rest], DEFAULT_TOL)
}

/// Classical mirror of [`effect_reprepare_instrument`]: outcome 0 fires with
/// probability `nu(s)` and reprepares `omega`.
fn outcome_reprepare_instrument(nu: &ProbDist, omega: &ProbDist) -> Result<ClassicalInstrument> {
    let d = nu.len();
    let mut keep = RealMatrix::zeros(d, d);
    let mut rest = RealMatrix::zeros(d, d);
    for s in 0..d {
        for s2 in 0..d {
            keep.set(s2, s, nu.get(s) * omega.get(s2));
            rest.set(s2, s, (1.0 - nu.get(s)) / d as f64);
        }
    }
    ClassicalInstrument::new(vec![keep, rest], DEFAULT_TOL)
}

/// Read the environment register `e` and output a fresh draw from
/// `targets[e]`, ignoring the system input.
fn env_readout_stochastic(targets: &[ProbDist], d_s: usize) -> StochasticMatrix {
    let n = targets.len();
    let d_out = targets[0].len();
    let mut m = RealMatrix::zeros(d_out, d_s * n);
    for s in 0..d_s {
        for (e, t) in targets.iter().enumerate() {
            for (row, &v) in t.as_slice().iter().enumerate() {
                m.set(row, s * n + e, v);
            }
        }
    }
    StochasticMatrix::new(m, DEFAULT_TOL).expect("readout matrix")
}

/// The Klein four-group of double transpositions on `{0,1,2,3}`: a regular
/// action, so for every `(s, e)` exactly one member maps `s` to `e`.
fn klein_permutations() -> Vec<Vec<usize>> {
    vec![
        vec![0, 1, 2, 3],
        vec![1, 0, 3, 2],
        vec![2, 3, 0, 1],
        vec![3, 2, 1, 0],
    ]
}

/// `by ∘ p ∘ by⁻¹`.
fn conjugate_perm(p: &[usize], by: &[usize]) -> Vec<usize> {
    let mut inv = vec![0usize; by.len()];
    for (i, &b) in by.iter().enumerate() {
        inv[b] = i;
    }
    (0..p.len()).map(|i| by[p[inv[i]]]).collect()
}

/// Detect which member of a regular permutation family links `s1` to `e`
/// and output a fresh draw from the matching target distribution.
fn perm_match_readout(perms: &[Vec<usize>], targets: &[ProbDist]) -> StochasticMatrix {
    let d = perms[0].len();
    let mut m = RealMatrix::zeros(targets[0].len(), d * d);
    for s1 in 0..d {
        for e in 0..d {
            let k = perms
                .iter()
                .position(|p| p[s1] == e)
                .expect("regular permutation family");
            for (row, &v) in targets[k].as_slice().iter().enumerate() {
                m.set(row, s1 * d + e, v);
            }
        }
    }
    StochasticMatrix::new(m, DEFAULT_TOL).expect("match-readout matrix")
}

/// With probability `1 - eps` apply the permutation; with probability `eps`
/// reprepare a fresh draw from `reprepare`.
fn noisy_recode_stochastic(perm: &[usize], reprepare: &ProbDist, eps: f64) -> StochasticMatrix {
    let d = perm.len();
    let mut m = RealMatrix::zeros(d, d);
    for s in 0..d {
        m.set(perm[s], s, 1.0 - eps);
        for (row, &v) in reprepare.as_slice().iter().enumerate() {
            m.set(row, s, m.get(row, s) + eps * v);
        }
    }
    StochasticMatrix::new(m, DEFAULT_TOL).expect("noisy recode matrix")
}

// ---------------------------------------------------------------------------
// Relation assembly
// ---------------------------------------------------------------------------

fn qrel(pairs: Vec<(Label, f64, DensityOperator, DensityOperator)>) -> Result<Relation> {
    let pairs = pairs
        .into_iter()
        .map(|(label, weight, input, output)| QuantumPair {
            label,
            weight,
            input,
            output,
        })
        .collect();
    Ok(Relation::Quantum(QuantumRelation::new(pairs)?))
}

fn crel(pairs: Vec<(Label, f64, ProbDist, ProbDist)>) -> Result<Relation> {
    let pairs = pairs
        .into_iter()
        .map(|(label, weight, input, output)| ClassicalPair {
            label,
            weight,
            input,
            output,
        })
        .collect();
    Ok(Relation::Classical(ClassicalRelation::new(pairs)?))
}

// ---------------------------------------------------------------------------
// Built-in examples
// ---------------------------------------------------------------------------

/// The nine hand-built fixtures, fully populated: six minimal circuits (three
/// quantum, three classical), the classical one-time pad, the keyed Pauli
/// scrambler, and the pointer measurement.
pub fn builtin_examples() -> Result<Vec<ExampleFixture>> {
    Ok(vec![
        q1_fixture()?,
        q2_fixture()?,
        q3_fixture()?,
        c1_fixture()?,
        c2_fixture()?,
        c3_fixture()?,
        one_time_pad_fixture()?,
        private_quantum_channel_fixture()?,
        measurement_update_fixture()?,
    ])
}

/// Post-selected basis measurements on half an entangled pair, swapped out:
/// the relation forces the (non-CP) transpose as its unique linear fit.
fn q1_fixture() -> Result<ExampleFixture> {
    let bases: Vec<[DensityOperator; 2]> = vec![
        [qb_zero(), qb_one()],
        [qb_one(), qb_zero()],
        [qb_plus(), qb_minus()],
        [qb_plus_i(), qb_minus_i()],
    ];
    let mut instruments = BTreeMap::new();
    for (j, basis) in bases.iter().enumerate() {
        let elements = basis
            .iter()
            .map(|b| QuantumChannel::from_kraus(&[b.matrix().clone()]))
            .collect::<Result<Vec<_>>>()?;
        instruments.insert(j as u32, Instrument::new(elements, DEFAULT_TOL)?);
    }
    let swap = UnitaryOperator::new(gates::swap(2), DEFAULT_TOL)?;
    let scenario = QuantumScenario::with_unitary(
        "q1",
        entangled_pair(),
        QuantumPreparation::SystemMeasurement {
            instruments,
            post_select: Some(vec![0]),
        },
        &swap,
        2,
    )?;

    let mut pairs = Vec::new();
    let mut maps = BTreeMap::new();
    maps.insert(
        DoLabel::Unconditional,
        QuantumChannel::constant(&DensityOperator::maximally_mixed(2), 2),
    );
    for (j, basis) in bases.iter().enumerate() {
        let kept = &basis[0];
        let out = transposed(kept);
        pairs.push((Label::outcome(j as u32, 0), 0.5, kept.clone(), out.clone()));
        maps.insert(
            DoLabel::Branch(Label::outcome(j as u32, 0)),
            QuantumChannel::constant(&out, 2),
        );
    }

    Ok(ExampleFixture {
        id: "q1".into(),
        origin: "post-selected basis readouts steering half an entangled pair through a swap"
            .into(),
        scenario: Scenario::Quantum(scenario),
        expected_classification: Classification::LinearPositiveNotCp,
        expected_relation: Some(qrel(pairs)?),
        expected_do_maps: ExpectedDoMaps::Quantum(maps),
        notes: "The four kept inputs are informationally complete, so the fit is unique: \
                the transpose, positive but not completely positive."
            .into(),
    })
}

/// A setting-dependent joint repreparation feeding a controlled gate: the
/// relation sends nonorthogonal inputs to orthogonal outputs, so only
/// nonlinear maps fit it.
fn q2_fixture() -> Result<ExampleFixture> {
    let xh = gates::pauli_x().matmul(&gates::hadamard());
    let mut prep = BTreeMap::new();
    prep.insert(0, QuantumChannel::identity(4));
    prep.insert(
        1,
        QuantumChannel::from_unitary(&UnitaryOperator::new(
            tensor(&gates::hadamard(), &gates::pauli_x()),
            DEFAULT_TOL,
        )?),
    );
    let interaction = UnitaryOperator::new(
        gates::controlled_by_second(&[ComplexMatrix::identity(2), xh.clone()]),
        DEFAULT_TOL,
    )?;
    let scenario = QuantumScenario::with_unitary(
        "q2",
        joint_state(&qb_zero(), &qb_zero()),
        QuantumPreparation::JointTransformation(prep),
        &interaction,
        2,
    )?;

    let pairs = vec![
        (Label::setting(0), 1.0, qb_zero(), qb_zero()),
        (Label::setting(1), 1.0, qb_plus(), qb_one()),
    ];
    let mut maps = BTreeMap::new();
    maps.insert(DoLabel::Unconditional, QuantumChannel::identity(2));
    maps.insert(DoLabel::Branch(Label::setting(0)), QuantumChannel::identity(2));
    maps.insert(
        DoLabel::Branch(Label::setting(1)),
        QuantumChannel::from_unitary(&UnitaryOperator::new(xh, DEFAULT_TOL)?),
    );

    Ok(ExampleFixture {
        id: "q2".into(),
        origin: "setting-dependent joint repreparation feeding a gate controlled by the \
                 environment"
            .into(),
        scenario: Scenario::Quantum(scenario),
        expected_classification: Classification::NonlinearOnly,
        expected_relation: Some(qrel(pairs)?),
        expected_do_maps: ExpectedDoMaps::Quantum(maps),
        notes: "Inputs at trace distance 1/sqrt(2) map to orthogonal outputs; each branch \
                evolution is nevertheless unitary."
            .into(),
    })
}

/// A correlated flip: the system transformation scrambles which environment
/// branch it sits in, and the relation becomes one-to-many.
fn q3_fixture() -> Result<ExampleFixture> {
    let mut fid = ComplexMatrix::zeros(4, 4);
    fid.set(0, 0, c(0.5, 0.0));
    fid.set(3, 3, c(0.5, 0.0));
    let fiducial = DensityOperator::new(fid, DimSpec(vec![2, 2]), DEFAULT_TOL)?;
    let mut prep = BTreeMap::new();
    prep.insert(0, QuantumChannel::identity(2));
    prep.insert(
        1,
        QuantumChannel::from_unitary(&UnitaryOperator::new(gates::pauli_x(), DEFAULT_TOL)?),
    );
    let scenario = QuantumScenario::with_unitary(
        "q3",
        fiducial,
        QuantumPreparation::SystemTransformation(prep),
        &gates::cnot_env_controls_system(),
        2,
    )?;

    let mixed = DensityOperator::maximally_mixed(2);
    let pairs = vec![
        (Label::setting(0), 1.0, mixed.clone(), qb_zero()),
        (Label::setting(1), 1.0, mixed, qb_one()),
    ];
    let s = FRAC_1_SQRT_2;
    let flip_dephase = QuantumChannel::from_kraus(&[
        ComplexMatrix::identity(2).scale(c(s, 0.0)),
        gates::pauli_x().scale(c(s, 0.0)),
    ])?;
    let mut maps = BTreeMap::new();
    maps.insert(DoLabel::Unconditional, flip_dephase.clone());
    maps.insert(DoLabel::Branch(Label::setting(0)), flip_dephase.clone());
    maps.insert(DoLabel::Branch(Label::setting(1)), flip_dephase);

    Ok(ExampleFixture {
        id: "q3".into(),
        origin: "conditional flip on one half of a classically correlated pair".into(),
        scenario: Scenario::Quantum(scenario),
        expected_classification: Classification::NoMap,
        expected_relation: Some(qrel(pairs)?),
        expected_do_maps: ExpectedDoMaps::Quantum(maps),
        notes: "Both settings present the same maximally mixed input with different outputs, \
                so no map of any kind fits; the do-map is the uniform flip mixture in every \
                branch."
            .into(),
    })
}

/// Disturbing readouts of one half of a correlated four-valued register,
/// swapped out: a linear fit exists but no stochastic one.
fn c1_fixture() -> Result<ExampleFixture> {
    let sets: [[usize; 2]; 3] = [[2, 3], [1, 3], [1, 2]];
    let mut instruments = BTreeMap::new();
    let mut pairs = Vec::new();
    let mut maps = BTreeMap::new();
    maps.insert(
        DoLabel::Unconditional,
        constant_stochastic(&ProbDist::uniform(4), 4),
    );
    for (j, set) in sets.iter().enumerate() {
        let complement: Vec<usize> = (0..4).filter(|s| !set.contains(s)).collect();
        let mut found = RealMatrix::zeros(4, 4);
        let mut missed = RealMatrix::zeros(4, 4);
        for &s in set {
            for &s2 in &complement {
                found.set(s2, s, 0.5);
            }
        }
        for &s in &complement {
            for &s2 in set {
                missed.set(s2, s, 0.5);
            }
        }
        instruments.insert(j as u32, ClassicalInstrument::new(vec![missed, found], DEFAULT_TOL)?);

        let mut input = vec![0.0; 4];
        for &s in &complement {
            input[s] = 0.5;
        }
        let mut output = vec![0.0; 4];
        for &s in set {
            output[s] = 0.5;
        }
        let (input, output) = (dist(&input), dist(&output));
        pairs.push((Label::outcome(j as u32, 1), 0.5, input, output.clone()));
        maps.insert(
            DoLabel::Branch(Label::outcome(j as u32, 1)),
            constant_stochastic(&output, 4),
        );
    }
    let scenario = ClassicalScenario::new(
        "c1",
        maximally_correlated(4),
        ClassicalPreparation::SystemMeasurement {
            instruments,
            post_select: Some(vec![1]),
        },
        swap_stochastic(4),
        4,
    )?;

    Ok(ExampleFixture {
        id: "c1".into(),
        origin: "disturbing subset readouts of a correlated register, then a swap".into(),
        scenario: Scenario::Classical(scenario),
        expected_classification: Classification::LinearNotStochastic,
        expected_relation: Some(crel(pairs)?),
        expected_do_maps: ExpectedDoMaps::Classical(maps),
        notes: "Each kept outcome reprepares the system uniformly outside the set it found, \
                while the swap hands over the set itself; the three pairs admit a linear fit \
                with negative entries only."
            .into(),
    })
}

/// A modular shift keyed by an environment bit the second setting flips:
/// overlapping inputs map to disjoint outputs.
fn c2_fixture() -> Result<ExampleFixture> {
    let mut prep = BTreeMap::new();
    prep.insert(0, StochasticMatrix::identity(6));
    prep.insert(
        1,
        constant_stochastic(&dist(&[0.0, 0.5, 0.0, 0.5, 0.0, 0.0]), 6),
    );
    let scenario = ClassicalScenario::new(
        "c2",
        JointDist::product(&ProbDist::point(3, 0), &ProbDist::point(2, 0)),
        ClassicalPreparation::JointTransformation(prep),
        StochasticMatrix::from_function(&[0, 3, 2, 5, 4, 1], 6)?,
        3,
    )?;

    let pairs = vec![
        (
            Label::setting(0),
            1.0,
            ProbDist::point(3, 0),
            ProbDist::point(3, 0),
        ),
        (
            Label::setting(1),
            1.0,
            dist(&[0.5, 0.5, 0.0]),
            dist(&[0.0, 0.5, 0.5]),
        ),
    ];
    let shift = StochasticMatrix::from_permutation(&[1, 2, 0])?;
    let mut maps = BTreeMap::new();
    maps.insert(DoLabel::Unconditional, StochasticMatrix::identity(3));
    maps.insert(DoLabel::Branch(Label::setting(0)), StochasticMatrix::identity(3));
    maps.insert(DoLabel::Branch(Label::setting(1)), shift);

    Ok(ExampleFixture {
        id: "c2".into(),
        origin: "modular shift keyed by an environment bit the second setting sets".into(),
        scenario: Scenario::Classical(scenario),
        expected_classification: Classification::NonlinearOnly,
        expected_relation: Some(crel(pairs)?),
        expected_do_maps: ExpectedDoMaps::Classical(maps),
        notes: "Inputs overlap (total variation 1/2) while the outputs do not (distance 1); \
                per branch the dynamics is a plain shift by the key."
            .into(),
    })
}

/// XOR with a shared random bit: the uniform input hides which flip happened.
fn c3_fixture() -> Result<ExampleFixture> {
    let mut prep = BTreeMap::new();
    prep.insert(0, StochasticMatrix::identity(2));
    prep.insert(1, StochasticMatrix::from_permutation(&[1, 0])?);
    let scenario = ClassicalScenario::new(
        "c3",
        JointDist::new(vec![0.5, 0.0, 0.0, 0.5], DimSpec(vec![2, 2]), DEFAULT_TOL)?,
        ClassicalPreparation::SystemTransformation(prep),
        StochasticMatrix::from_function(&[0, 3, 2, 1], 4)?,
        2,
    )?;

    let u = ProbDist::uniform(2);
    let pairs = vec![
        (Label::setting(0), 1.0, u.clone(), ProbDist::point(2, 0)),
        (Label::setting(1), 1.0, u.clone(), ProbDist::point(2, 1)),
    ];
    let randomize = constant_stochastic(&u, 2);
    let mut maps = BTreeMap::new();
    maps.insert(DoLabel::Unconditional, randomize.clone());
    maps.insert(DoLabel::Branch(Label::setting(0)), randomize.clone());
    maps.insert(DoLabel::Branch(Label::setting(1)), randomize);

    Ok(ExampleFixture {
        id: "c3".into(),
        origin: "XOR against a bit perfectly correlated with the input".into(),
        scenario: Scenario::Classical(scenario),
        expected_classification: Classification::NoMap,
        expected_relation: Some(crel(pairs)?),
        expected_do_maps: ExpectedDoMaps::Classical(maps),
        notes: "Identical uniform inputs with deterministic, differing outputs: one-to-many. \
                The do-map is the full randomizer in every branch."
            .into(),
    })
}

/// The classical one-time pad with a biased plaintext: ciphertext reveals
/// nothing without the key, everything with it.
fn one_time_pad_fixture() -> Result<ExampleFixture> {
    let mut prep = BTreeMap::new();
    prep.insert(0, StochasticMatrix::from_function(&[0, 0, 2, 2], 4)?);
    prep.insert(1, StochasticMatrix::from_function(&[1, 1, 3, 3], 4)?);
    let plaintext = dist(&[0.75, 0.25]);
    let scenario = ClassicalScenario::new(
        "one-time-pad",
        JointDist::product(&plaintext, &ProbDist::uniform(2)),
        ClassicalPreparation::JointTransformation(prep),
        StochasticMatrix::from_function(&[0, 3, 2, 1], 4)?,
        2,
    )?;

    let pairs = vec![
        (Label::setting(0), 1.0, plaintext.clone(), plaintext.clone()),
        (Label::setting(1), 1.0, plaintext.clone(), dist(&[0.25, 0.75])),
    ];
    let mut maps = BTreeMap::new();
    maps.insert(
        DoLabel::Unconditional,
        constant_stochastic(&ProbDist::uniform(2), 2),
    );
    maps.insert(DoLabel::Branch(Label::setting(0)), StochasticMatrix::identity(2));
    maps.insert(
        DoLabel::Branch(Label::setting(1)),
        StochasticMatrix::from_permutation(&[1, 0])?,
    );

    Ok(ExampleFixture {
        id: "one-time-pad".into(),
        origin: "XOR cipher with a shared key bit; settings fix the key".into(),
        scenario: Scenario::Classical(scenario),
        expected_classification: Classification::NoMap,
        expected_relation: Some(crel(pairs)?),
        expected_do_maps: ExpectedDoMaps::Classical(maps),
        notes: "Without the key the evolution is the randomizer (the cipher is secure); \
                knowing the key it is the identity or the flip. The biased plaintext makes \
                the two branch outputs differ, so the relation itself is one-to-many."
            .into(),
    })
}

/// A Pauli applied according to a uniformly random two-bit key: the keyless
/// description is complete depolarization, each keyed one a unitary.
fn private_quantum_channel_fixture() -> Result<ExampleFixture> {
    let paulis = gates::paulis();
    let mut prep = BTreeMap::new();
    for j in 0..4u32 {
        let set_key = QuantumChannel::identity(2).tensor_with(&QuantumChannel::constant(
            &DensityOperator::single(basis_proj(4, j as usize), DEFAULT_TOL)?,
            4,
        ));
        prep.insert(j, set_key);
    }
    let interaction = UnitaryOperator::new(gates::controlled_by_second(&paulis), DEFAULT_TOL)?;
    let fiducial = DensityOperator::new(
        tensor(qb_zero().matrix(), &ComplexMatrix::identity(4).scale(c(0.25, 0.0))),
        DimSpec(vec![2, 4]),
        DEFAULT_TOL,
    )?;
    let scenario = QuantumScenario::with_unitary(
        "private-quantum-channel",
        fiducial,
        QuantumPreparation::JointTransformation(prep),
        &interaction,
        2,
    )?;

    let mut pairs = Vec::new();
    let mut maps = BTreeMap::new();
    maps.insert(
        DoLabel::Unconditional,
        QuantumChannel::constant(&DensityOperator::maximally_mixed(2), 2),
    );
    for (j, p) in paulis.iter().enumerate() {
        let out = DensityOperator::single(
            qb_zero().matrix().conjugate_by(p),
            DEFAULT_TOL,
        )?;
        pairs.push((Label::setting(j as u32), 1.0, qb_zero(), out));
        maps.insert(
            DoLabel::Branch(Label::setting(j as u32)),
            QuantumChannel::from_unitary(&UnitaryOperator::new(p.clone(), DEFAULT_TOL)?),
        );
    }

    Ok(ExampleFixture {
        id: "private-quantum-channel".into(),
        origin: "Pauli scrambling keyed by a uniform two-bit register".into(),
        scenario: Scenario::Quantum(scenario),
        expected_classification: Classification::NoMap,
        expected_relation: Some(qrel(pairs)?),
        expected_do_maps: ExpectedDoMaps::Quantum(maps),
        notes: "All four settings present the same input; two distinct outputs appear, so \
                the relation is one-to-many. Keyless evolution is the constant map to the \
                maximally mixed state; each keyed evolution is the matching Pauli unitary."
            .into(),
    })
}

/// A pointer measurement: the environment copies the measured basis, and the
/// do-map is the dephasing (non-selective) update whatever the outcome.
fn measurement_update_fixture() -> Result<ExampleFixture> {
    let p0 = basis_proj(2, 0);
    let p1 = basis_proj(2, 1);
    let mut instruments = BTreeMap::new();
    instruments.insert(
        0,
        Instrument::new(
            vec![
                QuantumChannel::from_kraus(std::slice::from_ref(&p0))?,
                QuantumChannel::from_kraus(std::slice::from_ref(&p1))?,
            ],
            DEFAULT_TOL,
        )?,
    );
    let scenario = QuantumScenario::with_unitary(
        "measurement-update",
        joint_state(&qb_plus(), &qb_zero()),
        QuantumPreparation::SystemMeasurement {
            instruments,
            post_select: None,
        },
        &gates::cnot_system_controls_env(),
        2,
    )?;

    let pairs = vec![
        (Label::outcome(0, 0), 0.5, qb_zero(), qb_zero()),
        (Label::outcome(0, 1), 0.5, qb_one(), qb_one()),
    ];
    let dephase = QuantumChannel::from_kraus(&[p0, p1])?;
    let mut maps = BTreeMap::new();
    maps.insert(DoLabel::Unconditional, dephase.clone());
    maps.insert(DoLabel::Branch(Label::outcome(0, 0)), dephase.clone());
    maps.insert(DoLabel::Branch(Label::outcome(0, 1)), dephase);

    Ok(ExampleFixture {
        id: "measurement-update".into(),
        origin: "pointer measurement copying the basis into the environment".into(),
        scenario: Scenario::Quantum(scenario),
        expected_classification: Classification::Cptp,
        expected_relation: Some(qrel(pairs)?),
        expected_do_maps: ExpectedDoMaps::Quantum(maps),
        notes: "The selective update on outcome k is the projection onto k (visible in the \
                relation branches); the do-map conditioned on either outcome is still the \
                non-selective dephasing, because the outcome tells us nothing about the \
                pointer's initial state."
            .into(),
    })
}

// ---------------------------------------------------------------------------
// Parametric families
// ---------------------------------------------------------------------------

/// The three circuit shapes every pathology can be built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum CircuitType {
    /// Each setting writes a label into the environment alongside a fresh
    /// system state; the interaction reads the label back and reprepares.
    A,
    /// Each setting is a post-selected instrument steering the far half of a
    /// perfectly correlated pair; the interaction is a swap.
    B,
    /// Each setting recodes the system half of a correlated pair (a group
    /// element, optionally smeared with a repreparation); the interaction
    /// detects the group element and reprepares.
    C,
}

impl CircuitType {
    pub fn token(self) -> char {
        match self {
            CircuitType::A => 'a',
            CircuitType::B => 'b',
            CircuitType::C => 'c',
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "a" | "A" => Ok(CircuitType::A),
            "b" | "B" => Ok(CircuitType::B),
            "c" | "C" => Ok(CircuitType::C),
            other => Err(Error::UnknownLabel(format!("circuit type {other:?}"))),
        }
    }

    pub fn all() -> [CircuitType; 3] {
        [CircuitType::A, CircuitType::B, CircuitType::C]
    }

    fn describe(self) -> &'static str {
        match self {
            CircuitType::A => "environment-pointer readout",
            CircuitType::B => "steered repreparation through a swap",
            CircuitType::C => "noisy recoding of a correlated pair",
        }
    }
}

/// The three ways an input-output relation can fail to be a channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Pathology {
    /// A unique linear fit exists but is not a physical evolution (not
    /// completely positive / not stochastic).
    UnphysicalLinearFit,
    /// Only nonlinear maps fit: some output pair is strictly more
    /// distinguishable than its input pair.
    NonlinearOnly,
    /// One input appears with several outputs: no map at all.
    OneToMany,
}

impl Pathology {
    pub fn index(self) -> u8 {
        match self {
            Pathology::UnphysicalLinearFit => 1,
            Pathology::NonlinearOnly => 2,
            Pathology::OneToMany => 3,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(Pathology::UnphysicalLinearFit),
            "2" => Ok(Pathology::NonlinearOnly),
            "3" => Ok(Pathology::OneToMany),
            other => Err(Error::UnknownLabel(format!("pathology {other:?}"))),
        }
    }

    pub fn all() -> [Pathology; 3] {
        [
            Pathology::UnphysicalLinearFit,
            Pathology::NonlinearOnly,
            Pathology::OneToMany,
        ]
    }

    fn designed_quantum(self) -> Classification {
        match self {
            Pathology::UnphysicalLinearFit => Classification::LinearPositiveNotCp,
            Pathology::NonlinearOnly => Classification::NonlinearOnly,
            Pathology::OneToMany => Classification::NoMap,
        }
    }

    fn designed_classical(self) -> Classification {
        match self {
            Pathology::UnphysicalLinearFit => Classification::LinearNotStochastic,
            Pathology::NonlinearOnly => Classification::NonlinearOnly,
            Pathology::OneToMany => Classification::NoMap,
        }
    }

    fn describe(self) -> &'static str {
        match self {
            Pathology::UnphysicalLinearFit => "a linear fit that is no physical evolution",
            Pathology::NonlinearOnly => "a relation only nonlinear maps fit",
            Pathology::OneToMany => "a one-to-many relation",
        }
    }
}

/// Knobs for the parametric families.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FamilyParams {
    /// Repreparation probability of the noisy recoding (type `c`) circuits
    /// with pathologies 1 and 2; ignored elsewhere.
    pub epsilon: f64,
}

impl Default for FamilyParams {
    fn default() -> Self {
        FamilyParams { epsilon: 0.5 }
    }
}

impl FamilyParams {
    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidParam(format!(
                "epsilon must lie strictly between 0 and 1, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

fn family_id(regime: char, circuit: CircuitType, pathology: Pathology, seed: u64) -> String {
    let base = format!("family-{regime}-{}{}", circuit.token(), pathology.index());
    if seed == 0 {
        base
    } else {
        format!("{base}-s{seed}")
    }
}

/// Re-classify a freshly generated fixture and refuse to hand it out if the
/// designed pathology does not actually hold (e.g. `epsilon` outside its
/// window).
fn validate_designed(fixture: &ExampleFixture, window: &str) -> Result<()> {
    let relation = fixture.scenario.generate_relation()?;
    let report = classify_with(&relation, &ClassifyOptions::default())?;
    if report.classification != fixture.expected_classification {
        return Err(Error::InvalidParam(format!(
            "{}: parameters leave the designed behaviour ({:?} became {:?}); {window}",
            fixture.id, fixture.expected_classification, report.classification
        )));
    }
    Ok(())
}

fn quantum_frame(seed: u64) -> Option<UnitaryOperator> {
    if seed == 0 {
        None
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Some(random_unitary(2, &mut rng))
    }
}

fn classical_relabel(seed: u64, d: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..d).collect();
    if seed != 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        p.shuffle(&mut rng);
    }
    p
}

fn relabel_dist(p: &ProbDist, perm: &[usize]) -> ProbDist {
    let mut v = vec![0.0; p.len()];
    for (i, &target) in perm.iter().enumerate() {
        v[target] = p.get(i);
    }
    dist(&v)
}

fn relabel_all(dists: &[ProbDist], perm: &[usize]) -> Vec<ProbDist> {
    dists.iter().map(|p| relabel_dist(p, perm)).collect()
}

/// Branch (input, output) targets for the readout-style quantum circuits.
fn quantum_pair_sets(
    pathology: Pathology,
    frame: Option<&UnitaryOperator>,
) -> (Vec<DensityOperator>, Vec<DensityOperator>) {
    match pathology {
        Pathology::UnphysicalLinearFit => {
            let inputs = rotate_all(&tetrahedral(), frame);
            let outputs = inputs.iter().map(transposed).collect();
            (inputs, outputs)
        }
        Pathology::NonlinearOnly => (
            rotate_all(&[qb_zero(), qb_plus()], frame),
            rotate_all(&[qb_zero(), qb_one()], frame),
        ),
        Pathology::OneToMany => (
            vec![DensityOperator::maximally_mixed(2); 4],
            rotate_all(&tetrahedral(), frame),
        ),
    }
}

/// Recode/readout target sets for the quantum type-`c` circuit.
fn quantum_recode_sets(
    pathology: Pathology,
    frame: Option<&UnitaryOperator>,
) -> (Vec<DensityOperator>, Vec<DensityOperator>) {
    match pathology {
        Pathology::UnphysicalLinearFit => {
            let recodes = rotate_all(&tetrahedral(), frame);
            let readouts = recodes.iter().map(transposed).collect();
            (recodes, readouts)
        }
        Pathology::NonlinearOnly => (
            rotate_all(&[qb_zero(), qb_plus(), qb_one(), qb_minus()], frame),
            rotate_all(&[qb_zero(), qb_one(), qb_one(), qb_zero()], frame),
        ),
        Pathology::OneToMany => (Vec::new(), rotate_all(&tetrahedral(), frame)),
    }
}

/// Branch (input, output) targets for the readout-style classical circuits.
fn classical_pair_sets(pathology: Pathology, perm: &[usize]) -> (Vec<ProbDist>, Vec<ProbDist>) {
    match pathology {
        Pathology::UnphysicalLinearFit => {
            let inputs = relabel_all(&halves_base(), perm);
            let outputs = inputs.iter().map(complement_half).collect();
            (inputs, outputs)
        }
        Pathology::NonlinearOnly => (
            relabel_all(&[ProbDist::point(4, 0), dist(&[0.5, 0.5, 0.0, 0.0])], perm),
            relabel_all(&[ProbDist::point(4, 0), dist(&[0.0, 0.5, 0.5, 0.0])], perm),
        ),
        Pathology::OneToMany => (
            vec![ProbDist::uniform(4); 4],
            (0..4).map(|j| ProbDist::point(4, perm[j])).collect(),
        ),
    }
}

/// Recode/readout target sets for the classical type-`c` circuit.
fn classical_recode_sets(pathology: Pathology, perm: &[usize]) -> (Vec<ProbDist>, Vec<ProbDist>) {
    match pathology {
        Pathology::UnphysicalLinearFit => {
            let recodes = relabel_all(&halves_base(), perm);
            let readouts = recodes.iter().map(complement_half).collect();
            (recodes, readouts)
        }
        Pathology::NonlinearOnly => (
            relabel_all(
                &[
                    ProbDist::point(4, 0),
                    dist(&[0.5, 0.5, 0.0, 0.0]),
                    ProbDist::point(4, 2),
                    dist(&[0.0, 0.0, 0.5, 0.5]),
                ],
                perm,
            ),
            (0..4).map(|j| ProbDist::point(4, perm[j])).collect(),
        ),
        Pathology::OneToMany => (
            Vec::new(),
            (0..4).map(|j| ProbDist::point(4, perm[j])).collect(),
        ),
    }
}

/// Four two-point distributions spanning the four-state simplex.
fn halves_base() -> Vec<ProbDist> {
    vec![
        dist(&[0.5, 0.5, 0.0, 0.0]),
        dist(&[0.5, 0.0, 0.5, 0.0]),
        dist(&[0.5, 0.0, 0.0, 0.5]),
        dist(&[0.0, 0.0, 0.5, 0.5]),
    ]
}

/// `s ↦ 1/2 - p(s)`: the uniform distribution on the complementary support
/// for a two-point distribution on four states.
fn complement_half(p: &ProbDist) -> ProbDist {
    dist(
        &p.as_slice()
            .iter()
            .map(|&v| 0.5 - v)
            .collect::<Vec<f64>>(),
    )
}

/// Window notes for the recoding circuits; empty for everything else.
fn window_note(regime: char, circuit: CircuitType, pathology: Pathology) -> String {
    if circuit != CircuitType::C {
        return String::new();
    }
    match (regime, pathology) {
        ('q', Pathology::UnphysicalLinearFit) => {
            "valid for epsilon in [0.5, 0.75): below 0.5 the outputs become more \
             distinguishable than the inputs, from 0.75 on the fitted map is a channel"
                .into()
        }
        ('q', Pathology::NonlinearOnly) => {
            "valid for epsilon below 2 - sqrt(2) (about 0.586), where the output pair stays \
             more distinguishable than the input pair"
                .into()
        }
        ('c', Pathology::UnphysicalLinearFit) => {
            "valid for epsilon in [0.5, 4 - sqrt(10)) (about [0.5, 0.838)): below 0.5 a \
             distance expansion appears, above the window the fit turns stochastic"
                .into()
        }
        ('c', Pathology::NonlinearOnly) => {
            "valid for epsilon below 2/3, where the output pair stays more distinguishable \
             than the input pair"
                .into()
        }
        _ => String::new(),
    }
}

/// Build one cell of the quantum family matrix.
pub fn generate_quantum_family(
    circuit: CircuitType,
    pathology: Pathology,
    params: &FamilyParams,
    seed: u64,
) -> Result<ExampleFixture> {
    params.validate()?;
    let frame = quantum_frame(seed);
    let id = family_id('q', circuit, pathology, seed);

    let (scenario, relation, maps) = match circuit {
        CircuitType::A => quantum_family_a(&id, pathology, frame.as_ref())?,
        CircuitType::B => quantum_family_b(&id, pathology, frame.as_ref())?,
        CircuitType::C => quantum_family_c(&id, pathology, params.epsilon, frame.as_ref())?,
    };

    let fixture = ExampleFixture {
        id,
        origin: format!(
            "generated family: {} producing {}",
            circuit.describe(),
            pathology.describe()
        ),
        scenario: Scenario::Quantum(scenario),
        expected_classification: pathology.designed_quantum(),
        expected_relation: Some(relation),
        expected_do_maps: ExpectedDoMaps::Quantum(maps),
        notes: window_note('q', circuit, pathology),
    };
    let window = window_note('q', circuit, pathology);
    validate_designed(&fixture, if window.is_empty() { "no free parameters" } else { &window })?;
    Ok(fixture)
}

type QuantumCell = (
    QuantumScenario,
    Relation,
    BTreeMap<DoLabel, QuantumChannel>,
);

fn quantum_family_a(
    id: &str,
    pathology: Pathology,
    frame: Option<&UnitaryOperator>,
) -> Result<QuantumCell> {
    let (inputs, outputs) = quantum_pair_sets(pathology, frame);
    let n = inputs.len();
    let env0 = DensityOperator::single(basis_proj(n, 0), DEFAULT_TOL)?;
    let fiducial = joint_state(&qb_zero(), &env0);
    let mut prep = BTreeMap::new();
    for (j, input) in inputs.iter().enumerate() {
        let env_j = DensityOperator::single(basis_proj(n, j), DEFAULT_TOL)?;
        prep.insert(
            j as u32,
            QuantumChannel::constant(&joint_state(input, &env_j), 2 * n),
        );
    }
    let scenario = QuantumScenario::new(
        id,
        fiducial,
        QuantumPreparation::JointTransformation(prep),
        env_readout_channel(&outputs, 2),
        2,
    )?;

    let mut pairs = Vec::new();
    let mut maps = BTreeMap::new();
    maps.insert(DoLabel::Unconditional, QuantumChannel::constant(&outputs[0], 2));
    for (j, (input, output)) in inputs.iter().zip(&outputs).enumerate() {
        pairs.push((Label::setting(j as u32), 1.0, input.clone(), output.clone()));
        maps.insert(
            DoLabel::Branch(Label::setting(j as u32)),
            QuantumChannel::constant(output, 2),
        );
    }
    Ok((scenario, qrel(pairs)?, maps))
}

fn quantum_family_b(
    id: &str,
    pathology: Pathology,
    frame: Option<&UnitaryOperator>,
) -> Result<QuantumCell> {
    let (inputs, outputs) = quantum_pair_sets(pathology, frame);
    let mut instruments = BTreeMap::new();
    for (j, (input, output)) in inputs.iter().zip(&outputs).enumerate() {
        let effect = output.matrix().transpose();
        instruments.insert(j as u32, effect_reprepare_instrument(&effect, input)?);
    }
    let swap = UnitaryOperator::new(gates::swap(2), DEFAULT_TOL)?;
    let scenario = QuantumScenario::with_unitary(
        id,
        entangled_pair(),
        QuantumPreparation::SystemMeasurement {
            instruments,
            post_select: Some(vec![0]),
        },
        &swap,
        2,
    )?;

    let mut pairs = Vec::new();
    let mut maps = BTreeMap::new();
    maps.insert(
        DoLabel::Unconditional,
        QuantumChannel::constant(&DensityOperator::maximally_mixed(2), 2),
    );
    for (j, (input, output)) in inputs.iter().zip(&outputs).enumerate() {
        pairs.push((
            Label::outcome(j as u32, 0),
            0.5,
            input.clone(),
            output.clone(),
        ));
        maps.insert(
            DoLabel::Branch(Label::outcome(j as u32, 0)),
            QuantumChannel::constant(output, 2),
        );
    }
    Ok((scenario, qrel(pairs)?, maps))
}

fn quantum_family_c(
    id: &str,
    pathology: Pathology,
    eps: f64,
    frame: Option<&UnitaryOperator>,
) -> Result<QuantumCell> {
    let (recodes, readouts) = quantum_recode_sets(pathology, frame);
    let paulis = gates::paulis();
    let mut prep = BTreeMap::new();
    for (j, pauli) in paulis.iter().enumerate() {
        let channel = match pathology {
            Pathology::OneToMany => {
                QuantumChannel::from_unitary(&UnitaryOperator::new(pauli.clone(), DEFAULT_TOL)?)
            }
            _ => noisy_recode_channel(pauli, &recodes[j], eps),
        };
        prep.insert(j as u32, channel);
    }
    let scenario = QuantumScenario::new(
        id,
        entangled_pair(),
        QuantumPreparation::SystemTransformation(prep),
        bell_readout_channel(&readouts),
        2,
    )?;

    let mixed = DensityOperator::maximally_mixed(2);
    let readout_avg = average_state(&readouts);
    let mut pairs = Vec::new();
    for (j, readout) in readouts.iter().enumerate() {
        let (input, output) = match pathology {
            Pathology::OneToMany => (mixed.clone(), readout.clone()),
            _ => (
                mix_states(&mixed, &recodes[j], eps),
                mix_states(readout, &readout_avg, eps),
            ),
        };
        pairs.push((Label::setting(j as u32), 1.0, input, output));
    }
    let constant_avg = QuantumChannel::constant(&readout_avg, 2);
    let mut maps = BTreeMap::new();
    maps.insert(DoLabel::Unconditional, constant_avg.clone());
    for j in 0..4u32 {
        maps.insert(DoLabel::Branch(Label::setting(j)), constant_avg.clone());
    }
    Ok((scenario, qrel(pairs)?, maps))
}

/// Build one cell of the classical family matrix.
pub fn generate_classical_family(
    circuit: CircuitType,
    pathology: Pathology,
    params: &FamilyParams,
    seed: u64,
) -> Result<ExampleFixture> {
    params.validate()?;
    let perm = classical_relabel(seed, 4);
    let id = family_id('c', circuit, pathology, seed);

    let (scenario, relation, maps) = match circuit {
        CircuitType::A => classical_family_a(&id, pathology, &perm)?,
        CircuitType::B => classical_family_b(&id, pathology, &perm)?,
        CircuitType::C => classical_family_c(&id, pathology, params.epsilon, &perm)?,
    };

    let fixture = ExampleFixture {
        id,
        origin: format!(
            "generated family: {} producing {}",
            circuit.describe(),
            pathology.describe()
        ),
        scenario: Scenario::Classical(scenario),
        expected_classification: pathology.designed_classical(),
        expected_relation: Some(relation),
        expected_do_maps: ExpectedDoMaps::Classical(maps),
        notes: window_note('c', circuit, pathology),
    };
    let window = window_note('c', circuit, pathology);
    validate_designed(&fixture, if window.is_empty() { "no free parameters" } else { &window })?;
    Ok(fixture)
}

type ClassicalCell = (
    ClassicalScenario,
    Relation,
    BTreeMap<DoLabel, StochasticMatrix>,
);

fn classical_family_a(
    id: &str,
    pathology: Pathology,
    perm: &[usize],
) -> Result<ClassicalCell> {
    let (inputs, outputs) = classical_pair_sets(pathology, perm);
    let n = inputs.len();
    let fiducial = JointDist::product(&ProbDist::point(4, 0), &ProbDist::point(n, 0));
    let mut prep = BTreeMap::new();
    for (j, input) in inputs.iter().enumerate() {
        let target = input.tensor_with(&ProbDist::point(n, j));
        prep.insert(j as u32, constant_stochastic(&target, 4 * n));
    }
    let scenario = ClassicalScenario::new(
        id,
        fiducial,
        ClassicalPreparation::JointTransformation(prep),
        env_readout_stochastic(&outputs, 4),
        4,
    )?;

    let mut pairs = Vec::new();
    let mut maps = BTreeMap::new();
    maps.insert(DoLabel::Unconditional, constant_stochastic(&outputs[0], 4));
    for (j, (input, output)) in inputs.iter().zip(&outputs).enumerate() {
        pairs.push((Label::setting(j as u32), 1.0, input.clone(), output.clone()));
        maps.insert(
            DoLabel::Branch(Label::setting(j as u32)),
            constant_stochastic(output, 4),
        );
    }
    Ok((scenario, crel(pairs)?, maps))
}

fn classical_family_b(
    id: &str,
    pathology: Pathology,
    perm: &[usize],
) -> Result<ClassicalCell> {
    let (inputs, outputs) = classical_pair_sets(pathology, perm);
    let mut instruments = BTreeMap::new();
    for (j, (input, output)) in inputs.iter().zip(&outputs).enumerate() {
        instruments.insert(j as u32, outcome_reprepare_instrument(output, input)?);
    }
    let scenario = ClassicalScenario::new(
        id,
        maximally_correlated(4),
        ClassicalPreparation::SystemMeasurement {
            instruments,
            post_select: Some(vec![0]),
        },
        swap_stochastic(4),
        4,
    )?;

    let mut pairs = Vec::new();
    let mut maps = BTreeMap::new();
    maps.insert(
        DoLabel::Unconditional,
        constant_stochastic(&ProbDist::uniform(4), 4),
    );
    for (j, (input, output)) in inputs.iter().zip(&outputs).enumerate() {
        pairs.push((
            Label::outcome(j as u32, 0),
            0.25,
            input.clone(),
            output.clone(),
        ));
        maps.insert(
            DoLabel::Branch(Label::outcome(j as u32, 0)),
            constant_stochastic(output, 4),
        );
    }
    Ok((scenario, crel(pairs)?, maps))
}

fn classical_family_c(
    id: &str,
    pathology: Pathology,
    eps: f64,
    perm: &[usize],
) -> Result<ClassicalCell> {
    let (recodes, readouts) = classical_recode_sets(pathology, perm);
    let perms: Vec<Vec<usize>> = klein_permutations()
        .iter()
        .map(|p| conjugate_perm(p, perm))
        .collect();
    let mut prep = BTreeMap::new();
    for (j, group_perm) in perms.iter().enumerate() {
        let matrix = match pathology {
            Pathology::OneToMany => StochasticMatrix::from_permutation(group_perm)?,
            _ => noisy_recode_stochastic(group_perm, &recodes[j], eps),
        };
        prep.insert(j as u32, matrix);
    }
    let scenario = ClassicalScenario::new(
        id,
        maximally_correlated(4),
        ClassicalPreparation::SystemTransformation(prep),
        perm_match_readout(&perms, &readouts),
        4,
    )?;

    let uniform = ProbDist::uniform(4);
    let readout_avg = average_dist(&readouts);
    let mut pairs = Vec::new();
    for (j, readout) in readouts.iter().enumerate() {
        let (input, output) = match pathology {
            Pathology::OneToMany => (uniform.clone(), readout.clone()),
            _ => (
                mix_dists(&uniform, &recodes[j], eps),
                mix_dists(readout, &readout_avg, eps),
            ),
        };
        pairs.push((Label::setting(j as u32), 1.0, input, output));
    }
    let constant_avg = constant_stochastic(&readout_avg, 4);
    let mut maps = BTreeMap::new();
    maps.insert(DoLabel::Unconditional, constant_avg.clone());
    for j in 0..4u32 {
        maps.insert(DoLabel::Branch(Label::setting(j)), constant_avg.clone());
    }
    Ok((scenario, crel(pairs)?, maps))
}

/// `(1 - w) a + w b`.
fn mix_dists(a: &ProbDist, b: &ProbDist, w: f64) -> ProbDist {
    let v: Vec<f64> = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (1.0 - w) * x + w * y)
        .collect();
    dist(&v)
}

// ---------------------------------------------------------------------------
// Corpus assembly and lookup
// ---------------------------------------------------------------------------

/// All 18 generated family fixtures for the given parameters and seed.
pub fn family_examples(params: &FamilyParams, seed: u64) -> Result<Vec<ExampleFixture>> {
    let mut out = Vec::with_capacity(18);
    for circuit in CircuitType::all() {
        for pathology in Pathology::all() {
            out.push(generate_quantum_family(circuit, pathology, params, seed)?);
            out.push(generate_classical_family(circuit, pathology, params, seed)?);
        }
    }
    Ok(out)
}

/// The full corpus: nine built-in fixtures plus the 18-cell family matrix at
/// default parameters, ordered by id.
pub fn all_examples() -> Result<Vec<ExampleFixture>> {
    let mut out = builtin_examples()?;
    out.extend(family_examples(&FamilyParams::default(), 0)?);
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// Look a fixture up by id (`q2`, `one-time-pad`, `family-c-b3`, ...).
pub fn find_example(id: &str) -> Result<ExampleFixture> {
    for fixture in builtin_examples()? {
        if fixture.id == id {
            return Ok(fixture);
        }
    }
    for regime in ['q', 'c'] {
        if let Some(cell) = id.strip_prefix(&format!("family-{regime}-")) {
            if cell.len() == 2 {
                let circuit = CircuitType::parse(&cell[0..1])?;
                let pathology = Pathology::parse(&cell[1..2])?;
                let params = FamilyParams::default();
                return if regime == 'q' {
                    generate_quantum_family(circuit, pathology, &params, 0)
                } else {
                    generate_classical_family(circuit, pathology, &params, 0)
                };
            }
        }
    }
    Err(Error::UnknownLabel(format!("fixture {id:?}")))
}
