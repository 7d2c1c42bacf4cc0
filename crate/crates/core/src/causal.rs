//! The constructions that stay well-defined when inputs and outputs are
//! correlated with the environment: per-branch do-maps, inference maps,
//! combs, link products, steering states, composition diagnostics, and
//! simulated tomography.
//!
//! The central object is the *do-map*: the evolution obtained by severing
//! the system from whatever produced it and feeding in a chosen state,
//! `E(□) = Tr_{E'}[ U (□ ⊗ ρ_E) ]`. Unlike a map fitted to input-output
//! pairs, it is completely positive and trace-preserving by construction —
//! it depends only on the dynamics and on the environment's marginal, never
//! on the system-environment correlations.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analyzer::fit::{apply_raw_choi, quantum_span_rank, HermitianBasis};
use crate::classical::{classical_do_map, classical_inference_map, ProbDist, StochasticMatrix};
use crate::eig::{lstsq, psd_projection, real_rank};
use crate::error::{Error, Result};
use crate::mat::{partial_trace, tensor, ComplexMatrix, DimSpec};
use crate::quantum::{
    apply_on_factor, DensityOperator, Povm, QuantumChannel, UnitaryOperator,
};
use crate::scenarios::{ClassicalScenario, Label, QuantumScenario, Scenario};
use crate::ZERO_MASS;

/// Which knowledge state a do-map was computed under: the unconditional
/// circuit, or one realized branch `(j)` / `(j,k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DoLabel {
    Unconditional,
    Branch(Label),
}

impl fmt::Display for DoLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DoLabel::Unconditional => f.write_str("unconditional"),
            DoLabel::Branch(l) => write!(f, "{l}"),
        }
    }
}

impl Serialize for DoLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// A quantum do-map with its provenance: the label it conditions on and the
/// environment marginal it was built from. CP and TP by construction (and
/// re-validated on build).
#[derive(Debug, Clone, Serialize)]
pub struct DoMap {
    pub channel: QuantumChannel,
    pub label: DoLabel,
    pub env_marginal: DensityOperator,
}

/// Classical counterpart: always a genuine stochastic matrix.
#[derive(Debug, Clone, Serialize)]
pub struct ClassicalDoMap {
    pub matrix: StochasticMatrix,
    pub label: DoLabel,
    pub env_marginal: ProbDist,
}

/// Do-maps of either flavour, keyed by branch label.
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum ScenarioDoMaps {
    Quantum(BTreeMap<Label, DoMap>),
    Classical(BTreeMap<Label, ClassicalDoMap>),
}

/// `E(□) = Tr_{E'}[ N (□ ⊗ ρ_E) ]` for an arbitrary CPTP interaction `N` on
/// `(S1, E) -> (S2, E')`. Returns an unconditional [`DoMap`].
pub fn quantum_do_map(
    interaction: &QuantumChannel,
    rho_e: &DensityOperator,
    d_s1: usize,
    d_s2: usize,
) -> Result<DoMap> {
    let d_e = rho_e.dim_total();
    if interaction.d_in() != d_s1 * d_e {
        return Err(Error::DimMismatch(format!(
            "interaction input {} != d_s1 * d_e = {}",
            interaction.d_in(),
            d_s1 * d_e
        )));
    }
    if interaction.d_out() % d_s2 != 0 {
        return Err(Error::DimMismatch(format!(
            "interaction output {} does not split off d_s2 = {}",
            interaction.d_out(),
            d_s2
        )));
    }
    let d_e2 = interaction.d_out() / d_s2;
    let out_dims = DimSpec(vec![d_s2, d_e2]);
    let channel = QuantumChannel::from_action(d_s1, d_s2, |unit| {
        let joint = tensor(unit, rho_e.matrix());
        let evolved = interaction.apply_matrix(&joint);
        partial_trace(&evolved, &out_dims, &[0]).expect("output dims fixed above")
    })?;
    let (cp, min_eig) = channel.is_completely_positive(1e-7);
    let (tp, dev) = channel.is_trace_preserving(1e-7);
    if !cp || !tp {
        return Err(Error::InvariantViolation(format!(
            "do-map construction must be CPTP (min eig {min_eig:.3e}, TP dev {dev:.3e})"
        )));
    }
    Ok(DoMap {
        channel,
        label: DoLabel::Unconditional,
        env_marginal: rho_e.clone(),
    })
}

/// One do-map per realized branch, each built from that branch's environment
/// marginal. Branches whose marginals coincide get entrywise-identical maps:
/// the correlations themselves never enter.
pub fn do_maps_for_scenario(sc: &QuantumScenario) -> Result<BTreeMap<Label, DoMap>> {
    let mut out = BTreeMap::new();
    for (label, env) in sc.environment_marginals()? {
        let mut dm = quantum_do_map(&sc.interaction, &env, sc.d_s1(), sc.d_s2)?;
        dm.label = DoLabel::Branch(label);
        out.insert(label, dm);
    }
    Ok(out)
}

/// Classical mirror of [`do_maps_for_scenario`].
pub fn classical_do_maps_for_scenario(
    sc: &ClassicalScenario,
) -> Result<BTreeMap<Label, ClassicalDoMap>> {
    let mut out = BTreeMap::new();
    for (label, env) in sc.environment_marginals()? {
        let matrix = classical_do_map(&sc.interaction, &env, sc.d_s1(), sc.d_s2)?;
        out.insert(
            label,
            ClassicalDoMap {
                matrix,
                label: DoLabel::Branch(label),
                env_marginal: env,
            },
        );
    }
    Ok(out)
}

/// Dispatch over scenario flavours.
pub fn scenario_do_maps(sc: &Scenario) -> Result<ScenarioDoMaps> {
    Ok(match sc {
        Scenario::Quantum(q) => ScenarioDoMaps::Quantum(do_maps_for_scenario(q)?),
        Scenario::Classical(cl) => ScenarioDoMaps::Classical(classical_do_maps_for_scenario(cl)?),
    })
}

/// Does the realized joint for `label` factorize into system ⊗ environment
/// (max entrywise deviation ≤ `tol`)? Exactly when it does, the branch's
/// input-output pair is guaranteed consistent with its do-map — which this
/// function re-verifies before answering `true`.
pub fn coincidence_check(sc: &Scenario, label: Label, tol: f64) -> Result<bool> {
    match sc {
        Scenario::Quantum(q) => {
            let branches = q.realize_joint_states()?;
            let (_, _, joint) = branches
                .iter()
                .find(|(l, _, _)| *l == label)
                .ok_or_else(|| Error::UnknownLabel(format!("branch ({label})")))?;
            let sys = joint.reduce(&[0])?;
            let env = joint.reduce(&[1])?;
            let product = tensor(sys.matrix(), env.matrix());
            if joint.matrix().max_abs_diff(&product) > tol {
                return Ok(false);
            }
            // Factorized branch: the do-map must reproduce this branch's
            // output marginal from its input marginal (a theorem; failing it
            // means the library is broken, so surface that loudly).
            let dm = quantum_do_map(&q.interaction, &env, q.d_s1(), q.d_s2)?;
            let out = q.evolve_joint(joint)?.reduce(&[0])?;
            let predicted = dm.channel.apply_matrix(sys.matrix());
            if predicted.max_abs_diff(out.matrix()) > 1e-8 {
                return Err(Error::InvariantViolation(
                    "factorized branch disagrees with its do-map".into(),
                ));
            }
            Ok(true)
        }
        Scenario::Classical(cl) => {
            let branches = cl.realize_joint_states()?;
            let (_, _, joint) = branches
                .iter()
                .find(|(l, _, _)| *l == label)
                .ok_or_else(|| Error::UnknownLabel(format!("branch ({label})")))?;
            let sys = joint.marginal(&[0])?.flatten();
            let env = joint.marginal(&[1])?.flatten();
            let mut max_dev = 0.0f64;
            for (s, &ps) in sys.as_slice().iter().enumerate() {
                for (e, &pe) in env.as_slice().iter().enumerate() {
                    let idx = s * env.len() + e;
                    max_dev = max_dev.max((joint.probabilities()[idx] - ps * pe).abs());
                }
            }
            if max_dev > tol {
                return Ok(false);
            }
            // Factorized branch: inference map and do-map must agree on
            // every supported input value, and the pair must be consistent.
            let dm = classical_do_map(&cl.interaction, &env, cl.d_s1(), cl.d_s2)?;
            let inference = classical_inference_map(joint, &cl.interaction, cl.d_s2)?;
            for (s1, col) in inference.iter().enumerate() {
                if let Some(cond) = col {
                    let do_col = dm.matrix().column(s1);
                    let dev = cond
                        .as_slice()
                        .iter()
                        .zip(&do_col)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0f64, f64::max);
                    if dev > 1e-8 {
                        return Err(Error::InvariantViolation(
                            "factorized branch: inference map disagrees with do-map".into(),
                        ));
                    }
                }
            }
            let out = cl.evolve_joint(joint)?.marginal(&[0])?.flatten();
            let predicted = dm.matrix().apply(sys.as_slice());
            let dev = predicted
                .iter()
                .zip(out.as_slice())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            if dev > 1e-8 {
                return Err(Error::InvariantViolation(
                    "factorized branch disagrees with its do-map".into(),
                ));
            }
            Ok(true)
        }
    }
}

/// A branch's conditional transition probabilities `P(s2 | s1)`, with
/// columns masked (`None`) where that branch gives `s1` zero mass. This is
/// what an observer predicting `S2` from a *passively observed* `S1` uses —
/// and it genuinely depends on the branch, unlike the do-map.
#[derive(Debug, Clone, Serialize)]
pub struct InferenceMap {
    pub label: Label,
    pub columns: Vec<Option<ProbDist>>,
}

impl InferenceMap {
    /// Apply to a distribution supported on the unmasked columns.
    pub fn apply(&self, p: &[f64]) -> Result<Vec<f64>> {
        if p.len() != self.columns.len() {
            return Err(Error::DimMismatch("distribution length".into()));
        }
        let d_out = self
            .columns
            .iter()
            .flatten()
            .next()
            .map(|c| c.len())
            .ok_or_else(|| Error::ZeroProbability("all columns masked".into()))?;
        let mut out = vec![0.0; d_out];
        for (s1, &mass) in p.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            match &self.columns[s1] {
                Some(cond) => {
                    for (s2, &q) in cond.as_slice().iter().enumerate() {
                        out[s2] += mass * q;
                    }
                }
                None => {
                    return Err(Error::ZeroProbability(format!(
                        "inference map is undefined at s1 = {s1}"
                    )))
                }
            }
        }
        Ok(out)
    }

    /// The full matrix when no column is masked.
    pub fn as_stochastic(&self) -> Option<StochasticMatrix> {
        let d_out = self.columns.iter().flatten().next()?.len();
        let mut m = crate::classical::RealMatrix::zeros(d_out, self.columns.len());
        for (s1, col) in self.columns.iter().enumerate() {
            let cond = col.as_ref()?;
            for (s2, &q) in cond.as_slice().iter().enumerate() {
                m.set(s2, s1, q);
            }
        }
        StochasticMatrix::new(m, 1e-9).ok()
    }
}

/// Per-branch inference maps `P^{(j,k)}(s2 | s1)`, each verified to carry
/// that branch's input marginal to its output marginal.
pub fn jk_inference_maps(sc: &ClassicalScenario) -> Result<Vec<InferenceMap>> {
    let mut out = Vec::new();
    for (label, _, joint) in sc.realize_joint_states()? {
        let columns = classical_inference_map(&joint, &sc.interaction, sc.d_s2)?;
        let map = InferenceMap { label, columns };
        let p_in = joint.marginal(&[0])?.flatten();
        let p_out = sc.evolve_joint(&joint)?.marginal(&[0])?.flatten();
        let predicted = map.apply(p_in.as_slice())?;
        let dev = predicted
            .iter()
            .zip(p_out.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if dev > 1e-10 {
            return Err(Error::InvariantViolation(format!(
                "inference map for ({label}) violates its own marginal (dev {dev:.3e})"
            )));
        }
        out.push(map);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Combs
// ---------------------------------------------------------------------------

/// The circuit fragment around the cut at `S1`: a CPTP channel from the
/// inserted input `S1'` to the *joint* of the retained pre-cut output `S1`
/// and the final output `S2` (output factors ordered `(S1, S2)`).
///
/// Unlike the bare do-map, the comb remembers how the inserted input's fate
/// correlates with what came out at the cut.
#[derive(Debug, Clone, Serialize)]
pub struct Comb {
    channel: QuantumChannel,
    d_s1: usize,
    d_s2: usize,
}

impl Comb {
    pub fn channel(&self) -> &QuantumChannel {
        &self.channel
    }

    /// Dimension of the retained pre-cut output (also of the inserted slot).
    pub fn d_s1(&self) -> usize {
        self.d_s1
    }

    pub fn d_s2(&self) -> usize {
        self.d_s2
    }
}

/// Assemble the comb by direct contraction of the fiducial state with the
/// interaction: `□ ↦ (id_{S1} ⊗ Tr_{E'} N)( ρ_{S1E} with □ inserted )`.
pub fn build_comb(sc: &QuantumScenario) -> Result<Comb> {
    let (d_s1, d_e) = (sc.d_s1(), sc.d_e());
    let (d_s2, d_e2) = (sc.d_s2, sc.d_e2());
    let fid = sc.fiducial.matrix();
    let tripartite = DimSpec(vec![d_s1, d_s1 * d_e]);
    let evolved_dims = DimSpec(vec![d_s1, d_s2, d_e2]);
    let channel = QuantumChannel::from_action(d_s1, d_s1 * d_s2, |unit| {
        // Tripartite order (S1, S1', E): fiducial entries on factors (0, 2),
        // the inserted unit on factor 1.
        let side = d_s1 * d_s1 * d_e;
        let mut t = ComplexMatrix::zeros(side, side);
        for a in 0..d_s1 {
            for b in 0..d_e {
                for cc in 0..d_s1 {
                    for dd in 0..d_e {
                        let f = fid.get(a * d_e + b, cc * d_e + dd);
                        if f.norm_sqr() == 0.0 {
                            continue;
                        }
                        for m in 0..d_s1 {
                            for n in 0..d_s1 {
                                let v = f * unit.get(m, n);
                                if v.norm_sqr() != 0.0 {
                                    t.add_at(
                                        (a * d_s1 + m) * d_e + b,
                                        (cc * d_s1 + n) * d_e + dd,
                                        v,
                                    );
                                }
                            }
                        }
                    }
                }
            }
        }
        // The interaction acts on the contiguous (S1', E) block.
        let (evolved, _) = apply_on_factor(&t, &tripartite, 1, &sc.interaction)
            .expect("block dims fixed above");
        partial_trace(&evolved, &evolved_dims, &[0, 1]).expect("output dims fixed above")
    })?;
    let (cp, min_eig) = channel.is_completely_positive(1e-7);
    let (tp, dev) = channel.is_trace_preserving(1e-7);
    if !cp || !tp {
        return Err(Error::InvariantViolation(format!(
            "comb must be CPTP (min eig {min_eig:.3e}, TP dev {dev:.3e})"
        )));
    }
    Ok(Comb {
        channel,
        d_s1,
        d_s2,
    })
}

/// Close the comb's loop with an instrument element `A : S1 -> S1'`: the
/// retained output feeds the element and the element's output enters the
/// slot. Returns the realization probability and the conditional `S2` state.
pub fn link_product(comb: &Comb, element: &QuantumChannel) -> Result<(f64, DensityOperator)> {
    let (d_s1, d_s2) = (comb.d_s1, comb.d_s2);
    if element.d_in() != d_s1 || element.d_out() != d_s1 {
        return Err(Error::DimMismatch(format!(
            "element must map S1 ({d_s1}) to the slot ({d_s1}), got {}x{}",
            element.d_out(),
            element.d_in()
        )));
    }
    let choi = comb.channel.choi();
    // Row index of the comb Choi: ((s1 * d_s2 + s2) * d_s1) + a, with `a`
    // the slot index.
    let mut sigma = ComplexMatrix::zeros(d_s2, d_s2);
    for s1 in 0..d_s1 {
        for t1 in 0..d_s1 {
            let mut unit = ComplexMatrix::zeros(d_s1, d_s1);
            unit.set(s1, t1, crate::mat::c(1.0, 0.0));
            let acted = element.apply_matrix(&unit);
            for s2 in 0..d_s2 {
                for t2 in 0..d_s2 {
                    let mut acc = crate::mat::c(0.0, 0.0);
                    for a in 0..d_s1 {
                        for ap in 0..d_s1 {
                            acc += choi.get(
                                (s1 * d_s2 + s2) * d_s1 + a,
                                (t1 * d_s2 + t2) * d_s1 + ap,
                            ) * acted.get(a, ap);
                        }
                    }
                    sigma.add_at(s2, t2, acc);
                }
            }
        }
    }
    let prob = sigma.trace().re;
    if prob < ZERO_MASS {
        return Err(Error::ZeroProbability(
            "link product has vanishing realization probability".into(),
        ));
    }
    let state = DensityOperator::single(
        sigma.scale(crate::mat::c(1.0 / prob, 0.0)).hermitize(),
        1e-7,
    )?;
    Ok((prob, state))
}

/// Forget the retained output: trace the comb over its `S1` factor, leaving
/// the plain channel slot → `S2`. Identical to the scenario's do-map.
pub fn l_map_from_comb(comb: &Comb) -> Result<QuantumChannel> {
    let dims = DimSpec(vec![comb.d_s1, comb.d_s2, comb.d_s1]);
    let traced = partial_trace(comb.channel.choi(), &dims, &[1, 2])?;
    QuantumChannel::from_choi(traced, comb.d_s1, comb.d_s2)
}

/// Feed the maximally mixed state into the slot: the bipartite `(S1, S2)`
/// state whose conditionals encode what each measurement on `S1` implies
/// about `S2`.
pub fn steering_state(comb: &Comb) -> Result<DensityOperator> {
    let mixed = ComplexMatrix::identity(comb.d_s1)
        .scale(crate::mat::c(1.0 / comb.d_s1 as f64, 0.0));
    let out = comb.channel.apply_matrix(&mixed).hermitize();
    DensityOperator::new(out, DimSpec(vec![comb.d_s1, comb.d_s2]), 1e-7)
}

/// Condition a steering state on a POVM effect measured on its `S1` factor:
/// `σ ∝ Tr_{S1}[(F ⊗ 1) ρ]`. Returns the outcome probability and the
/// conditional `S2` state.
pub fn steering_update(
    state: &DensityOperator,
    effect: &ComplexMatrix,
) -> Result<(f64, DensityOperator)> {
    let dims = state.dims();
    if dims.len() != 2 {
        return Err(Error::DimMismatch("steering state must be bipartite".into()));
    }
    let (d_s1, d_s2) = (dims.0[0], dims.0[1]);
    if effect.rows() != d_s1 || !effect.is_square() {
        return Err(Error::DimMismatch("effect must act on the S1 factor".into()));
    }
    if effect.max_abs_diff(&effect.adjoint()) > 1e-8 {
        return Err(Error::NotHermitian {
            deviation: effect.max_abs_diff(&effect.adjoint()),
            tolerance: 1e-8,
        });
    }
    let (eigs, _) = crate::eig::hermitian_eigen(effect);
    if eigs.iter().any(|&v| v < -1e-8 || v > 1.0 + 1e-8) {
        return Err(Error::InvalidParam(
            "effect must satisfy 0 ≤ F ≤ 1".into(),
        ));
    }
    let lifted = tensor(effect, &ComplexMatrix::identity(d_s2));
    let weighted = lifted.matmul(state.matrix());
    let sigma = partial_trace(&weighted, dims, &[1])?;
    let prob = sigma.trace().re;
    if prob < ZERO_MASS {
        return Err(Error::ZeroProbability(
            "effect has vanishing probability on the steering state".into(),
        ));
    }
    let cond = DensityOperator::single(
        sigma.scale(crate::mat::c(1.0 / prob, 0.0)).hermitize(),
        1e-7,
    )?;
    Ok((prob, cond))
}

// ---------------------------------------------------------------------------
// Two-step composition
// ---------------------------------------------------------------------------

/// Two unitary interactions threading the *same* environment:
/// `S0 ⊗ E  --first-->  S1 ⊗ E1  --second-->  S2 ⊗ E2`.
#[derive(Debug, Clone)]
pub struct TwoStepCircuit {
    pub env: DensityOperator,
    pub first: UnitaryOperator,
    pub second: UnitaryOperator,
    /// System dimension, constant across the chain.
    pub d_s: usize,
    /// State fed at `S0` when *defining* the second step's environment
    /// marginal (the do-map at `S1` needs one).
    pub reference_input: DensityOperator,
}

/// Deviations of two composition laws from the true end-to-end do-map, as
/// max entrywise differences between channel representations.
#[derive(Debug, Clone, Serialize)]
pub struct CompositionReport {
    /// `E_{S2|do S1} ∘ E_{S1|do S0}` vs `E_{S2|do S0}`: the naive chain that
    /// forgets the environment threading through.
    pub naive_gap: f64,
    /// `E_{S2|do(S1,E1)} ∘ E_{S1E1|do S0}` vs `E_{S2|do S0}`: treating the
    /// joint `(S1, E1)` as the mediary, which is complete.
    pub mediary_gap: f64,
}

/// Compare the naive system-only composition and the joint-mediary
/// composition against the true two-step do-map.
pub fn compose_and_check(circuit: &TwoStepCircuit) -> Result<CompositionReport> {
    let d_s = circuit.d_s;
    let d_e = circuit.env.dim_total();
    let total = d_s * d_e;
    if circuit.first.dim() != total || circuit.second.dim() != total {
        return Err(Error::DimMismatch(format!(
            "both steps must act on d_s * d_e = {total}"
        )));
    }
    if circuit.reference_input.dim_total() != d_s {
        return Err(Error::DimMismatch("reference input must live on S0".into()));
    }

    // True end-to-end map: both unitaries, one environment, traced at the end.
    let u_total = UnitaryOperator::new(
        circuit.second.matrix().matmul(circuit.first.matrix()),
        1e-8,
    )?;
    let truth = crate::quantum::stinespring_channel(&u_total, &circuit.env, d_s, d_s)?;

    // Naive chain: do-map of step one, then do-map of step two built from
    // the environment marginal that the reference input induces.
    let step1 = crate::quantum::stinespring_channel(&circuit.first, &circuit.env, d_s, d_s)?;
    let joint_dims = DimSpec(vec![d_s, d_e]);
    let after_first = circuit.first.matrix().matmul(
        &tensor(circuit.reference_input.matrix(), circuit.env.matrix())
            .matmul(&circuit.first.matrix().adjoint()),
    );
    let env_mid = DensityOperator::new(
        partial_trace(&after_first, &joint_dims, &[1])?.hermitize(),
        DimSpec(vec![d_e]),
        1e-7,
    )?;
    let step2 = crate::quantum::stinespring_channel(&circuit.second, &env_mid, d_s, d_s)?;
    let naive = step1.then(&step2)?;
    let naive_gap = naive.choi().max_abs_diff(truth.choi());

    // Joint-mediary chain: keep E1 alongside S1, then do the second step on
    // the pair.
    let env_mat = circuit.env.matrix().clone();
    let u1 = circuit.first.matrix().clone();
    let lift = QuantumChannel::from_action(d_s, total, |unit| {
        u1.matmul(&tensor(unit, &env_mat).matmul(&u1.adjoint()))
    })?;
    let u2 = circuit.second.matrix().clone();
    let drop_env = QuantumChannel::from_action(total, d_s, |joint| {
        partial_trace(&u2.matmul(&joint.matmul(&u2.adjoint())), &joint_dims, &[0])
            .expect("joint dims fixed above")
    })?;
    let mediary = lift.then(&drop_env)?;
    let mediary_gap = mediary.choi().max_abs_diff(truth.choi());

    Ok(CompositionReport {
        naive_gap,
        mediary_gap,
    })
}

// ---------------------------------------------------------------------------
// Simulated tomography
// ---------------------------------------------------------------------------

/// A linear-inversion reconstruction of a channel from (simulated)
/// preparation/measurement statistics. The raw estimate is not forced
/// positive; `psd_projected` records whether the optional projection ran.
#[derive(Debug, Clone, Serialize)]
pub struct TomographyEstimate {
    pub choi: ComplexMatrix,
    pub d_in: usize,
    pub d_out: usize,
    /// Frobenius distance between the estimate and the simulated truth.
    pub choi_error_frobenius: f64,
    pub samples: Option<usize>,
    pub seed: u64,
    pub psd_projected: bool,
}

impl TomographyEstimate {
    /// The estimate as a channel; fails if the raw estimate is too far from
    /// Hermitian (it never is — the inversion basis is Hermitian).
    pub fn channel(&self) -> Result<QuantumChannel> {
        QuantumChannel::from_choi(self.choi.clone(), self.d_in, self.d_out)
    }
}

/// Draw multinomial counts by inverse-CDF sampling (deterministic given the
/// RNG state).
fn multinomial_counts(rng: &mut ChaCha8Rng, n: usize, probs: &[f64]) -> Vec<usize> {
    let mut cumulative = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for &p in probs {
        acc += p.max(0.0);
        cumulative.push(acc);
    }
    let total = acc;
    let mut counts = vec![0usize; probs.len()];
    for _ in 0..n {
        let u: f64 = rng.gen::<f64>() * total;
        let idx = match cumulative.binary_search_by(|c| c.partial_cmp(&u).expect("finite")) {
            Ok(i) => i,
            Err(i) => i.min(probs.len() - 1),
        };
        counts[idx] += 1;
    }
    counts
}

/// Reconstruct a channel from preparation/measurement statistics simulated
/// against `truth`. With `samples = None` the Born probabilities are used
/// exactly; with `samples = Some(n)`, each preparation draws `n` multinomial
/// counts from a sub-seeded RNG (sub-seed = `seed + 1 + prep index`, so
/// settings can be re-simulated independently).
pub fn process_tomography(
    truth: &QuantumChannel,
    preps: &[DensityOperator],
    povm: &Povm,
    samples: Option<usize>,
    seed: u64,
    project_psd: bool,
) -> Result<TomographyEstimate> {
    let d_in = truth.d_in();
    let d_out = truth.d_out();
    if preps.iter().any(|p| p.dim_total() != d_in) {
        return Err(Error::DimMismatch("preparations must live on the input space".into()));
    }
    if povm.dim() != d_out {
        return Err(Error::DimMismatch("POVM must act on the output space".into()));
    }
    let prep_rank = quantum_span_rank(preps.iter().map(|p| p.matrix()), d_in)?;
    if prep_rank != d_in * d_in {
        return Err(Error::RankDeficient {
            space: "preparation span on the input space".into(),
            rank: prep_rank,
            required: d_in * d_in,
        });
    }
    let out_basis = HermitianBasis::new(d_out);
    let effect_rows: Vec<Vec<f64>> = povm
        .effects()
        .iter()
        .map(|f| out_basis.coefficients(f))
        .collect();
    let effect_rank = real_rank(&effect_rows);
    if effect_rank != d_out * d_out {
        return Err(Error::RankDeficient {
            space: "effect span on the output space".into(),
            rank: effect_rank,
            required: d_out * d_out,
        });
    }

    let basis = HermitianBasis::new(d_in * d_out);
    let mut a_rows = Vec::new();
    let mut b_vals = Vec::new();
    for (i, prep) in preps.iter().enumerate() {
        let out = truth.apply_matrix(prep.matrix()).hermitize();
        let mut probs: Vec<f64> = povm
            .effects()
            .iter()
            .map(|f| f.matmul(&out).trace().re.max(0.0))
            .collect();
        let norm: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= norm;
        }
        let freqs: Vec<f64> = match samples {
            None => probs,
            Some(n) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1 + i as u64));
                multinomial_counts(&mut rng, n, &probs)
                    .into_iter()
                    .map(|count| count as f64 / n as f64)
                    .collect()
            }
        };
        // One linear equation per effect: Tr(F_m E(σ_i)) is linear in the
        // Choi coefficients.
        for (f, freq) in povm.effects().iter().zip(freqs) {
            let row: Vec<f64> = (0..basis.len())
                .map(|a| {
                    let action = apply_raw_choi(basis.element(a), d_in, d_out, prep.matrix());
                    f.matmul(&action).trace().re
                })
                .collect();
            a_rows.push(row);
            b_vals.push(freq);
        }
    }
    let (x, _) = lstsq(&a_rows, &b_vals);
    let mut choi = basis.reconstruct(&x).hermitize();
    if project_psd {
        choi = psd_projection(&choi);
    }
    let diff = &choi - truth.choi();
    Ok(TomographyEstimate {
        choi,
        d_in,
        d_out,
        choi_error_frobenius: diff.frobenius_norm(),
        samples,
        seed,
        psd_projected: project_psd,
    })
}

/// Joint estimates for a scenario's comb and its do-map. The comb is
/// reconstructed from joint `(S1, S2)` measurements; the do-map estimate is
/// its partial trace (ignoring `S1` entirely).
#[derive(Debug, Clone, Serialize)]
pub struct TomographyReport {
    pub comb: TomographyEstimate,
    pub do_map: TomographyEstimate,
}

/// Simulate preparation of the slot in each of `preps`, joint measurement of
/// `(S1, S2)` with `povm`, and reconstruct both the comb and the do-map.
pub fn causal_tomography(
    sc: &QuantumScenario,
    preps: &[DensityOperator],
    povm: &Povm,
    samples: Option<usize>,
    seed: u64,
    project_psd: bool,
) -> Result<TomographyReport> {
    let comb = build_comb(sc)?;
    let comb_est = process_tomography(comb.channel(), preps, povm, samples, seed, project_psd)?;
    let do_truth = l_map_from_comb(&comb)?;
    let dims = DimSpec(vec![comb.d_s1(), comb.d_s2(), comb.d_s1()]);
    let mut do_choi = partial_trace(&comb_est.choi, &dims, &[1, 2])?;
    if project_psd {
        do_choi = psd_projection(&do_choi);
    }
    let do_err = (&do_choi - do_truth.choi()).frobenius_norm();
    let do_map = TomographyEstimate {
        choi: do_choi,
        d_in: comb.d_s1(),
        d_out: comb.d_s2(),
        choi_error_frobenius: do_err,
        samples,
        seed,
        psd_projected: project_psd,
    };
    Ok(TomographyReport {
        comb: comb_est,
        do_map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat::c;
    use crate::quantum::{gates, pauli_six_povm};
    use crate::scenarios::QuantumPreparation;
    use std::collections::BTreeMap as Map;

    fn ket(amps: &[(f64, f64)]) -> ComplexMatrix {
        ComplexMatrix::ket(&amps.iter().map(|&(re, im)| c(re, im)).collect::<Vec<_>>())
    }

    fn bitflip_randomization() -> QuantumChannel {
        let s = 1.0 / 2f64.sqrt();
        QuantumChannel::from_kraus(&[
            ComplexMatrix::identity(2).scale(c(s, 0.0)),
            gates::pauli_x().scale(c(s, 0.0)),
        ])
        .unwrap()
    }

    /// Correlated-mixture circuit: fiducial ½(|00><00| + |11><11|), both
    /// branch preparations reprepare the joint, interaction CNOT with the
    /// environment as control.
    fn correlated_mixture_scenario() -> QuantumScenario {
        let fid_mat = {
            let mut m = ComplexMatrix::zeros(4, 4);
            m.set(0, 0, c(0.5, 0.0));
            m.set(3, 3, c(0.5, 0.0));
            m
        };
        let fid = DensityOperator::new(fid_mat, DimSpec(vec![2, 2]), 1e-9).unwrap();
        let mut preps = Map::new();
        let corr = fid.clone();
        let anti = {
            let mut m = ComplexMatrix::zeros(4, 4);
            m.set(1, 1, c(0.5, 0.0));
            m.set(2, 2, c(0.5, 0.0));
            DensityOperator::new(m, DimSpec(vec![2, 2]), 1e-9).unwrap()
        };
        preps.insert(0, QuantumChannel::constant(&corr, 4));
        preps.insert(1, QuantumChannel::constant(&anti, 4));
        QuantumScenario::new(
            "correlated-mixture",
            fid,
            QuantumPreparation::JointTransformation(preps),
            QuantumChannel::from_unitary(&gates::cnot_env_controls_system()),
            2,
        )
        .unwrap()
    }

    fn product_fiducial_scenario() -> QuantumScenario {
        let s = 1.0 / 2f64.sqrt();
        let sys = DensityOperator::from_ket(&ket(&[(s, 0.0), (s, 0.0)])).unwrap();
        let env = DensityOperator::basis(2, 0);
        let fid = DensityOperator::product(&sys, &env);
        let mut preps = Map::new();
        preps.insert(0, QuantumChannel::identity(2));
        QuantumScenario::new(
            "product-fiducial",
            fid,
            QuantumPreparation::SystemTransformation(preps),
            QuantumChannel::from_unitary(&gates::cnot_env_controls_system()),
            2,
        )
        .unwrap()
    }

    /// Maximally entangled fiducial, Lüders readout in a chosen basis on S1,
    /// SWAP interaction: the classic remote-steering circuit.
    fn steering_scenario() -> QuantumScenario {
        let s = 1.0 / 2f64.sqrt();
        let fid = DensityOperator::from_ket(&ket(&[(s, 0.0), (0.0, 0.0), (0.0, 0.0), (s, 0.0)]))
            .unwrap()
            .with_dims(DimSpec(vec![2, 2]))
            .unwrap();
        let mut instruments = Map::new();
        let z = crate::quantum::luders_instrument(&[
            ket(&[(1.0, 0.0), (0.0, 0.0)]).projector(),
            ket(&[(0.0, 0.0), (1.0, 0.0)]).projector(),
        ])
        .unwrap();
        let y = crate::quantum::luders_instrument(&[
            ket(&[(s, 0.0), (0.0, s)]).projector(),
            ket(&[(s, 0.0), (0.0, -s)]).projector(),
        ])
        .unwrap();
        instruments.insert(0, z);
        instruments.insert(1, y);
        QuantumScenario::new(
            "steering",
            fid,
            QuantumPreparation::SystemMeasurement {
                instruments,
                post_select: None,
            },
            QuantumChannel::from_unitary(&UnitaryOperator::new(gates::swap(2), 1e-9).unwrap()),
            2,
        )
        .unwrap()
    }

    #[test]
    fn do_map_of_correlated_env_is_the_randomizing_channel() {
        let cnot = QuantumChannel::from_unitary(
            &gates::cnot_env_controls_system(),
        );
        let dm = quantum_do_map(&cnot, &DensityOperator::maximally_mixed(2), 2, 2).unwrap();
        assert!(dm.channel.choi().max_abs_diff(bitflip_randomization().choi()) < 1e-12);
        assert_eq!(dm.label, DoLabel::Unconditional);
    }

    #[test]
    fn do_map_of_swap_reprepares_the_environment_state() {
        let swap = QuantumChannel::from_unitary(
            &UnitaryOperator::new(gates::swap(2), 1e-9).unwrap(),
        );
        let s = 1.0 / 2f64.sqrt();
        let tau = DensityOperator::from_ket(&ket(&[(s, 0.0), (0.0, -s)])).unwrap();
        let dm = quantum_do_map(&swap, &tau, 2, 2).unwrap();
        let reprepare = QuantumChannel::constant(&tau, 2);
        assert!(dm.channel.choi().max_abs_diff(reprepare.choi()) < 1e-12);
    }

    #[test]
    fn do_map_of_controlled_interaction_depends_on_the_control_state() {
        let s = 1.0 / 2f64.sqrt();
        let xh = gates::pauli_x().matmul(&gates::hadamard());
        let u = UnitaryOperator::new(
            gates::controlled_by_second(&[ComplexMatrix::identity(2), xh.clone()]),
            1e-9,
        )
        .unwrap();
        let ch = QuantumChannel::from_unitary(&u);

        let idle = quantum_do_map(&ch, &DensityOperator::basis(2, 0), 2, 2).unwrap();
        assert!(idle.channel.choi().max_abs_diff(QuantumChannel::identity(2).choi()) < 1e-12);

        let active = quantum_do_map(&ch, &DensityOperator::basis(2, 1), 2, 2).unwrap();
        let expected = QuantumChannel::from_unitary(&UnitaryOperator::new(xh, 1e-9).unwrap());
        assert!(active.channel.choi().max_abs_diff(expected.choi()) < 1e-12);
        // Sanity: |0> goes to |+> under H, and X leaves |+> alone.
        let out = active.channel.apply_matrix(&ket(&[(1.0, 0.0), (0.0, 0.0)]).projector());
        let plus = ket(&[(s, 0.0), (s, 0.0)]).projector();
        assert!(out.max_abs_diff(&plus) < 1e-12);
    }

    #[test]
    fn correlated_mixture_do_maps_are_label_independent() {
        let sc = correlated_mixture_scenario();
        let maps = do_maps_for_scenario(&sc).unwrap();
        assert_eq!(maps.len(), 2);
        let choi0 = maps[&Label::setting(0)].channel.choi().clone();
        for (label, dm) in &maps {
            assert_eq!(dm.label, DoLabel::Branch(*label));
            assert!(dm.channel.choi().max_abs_diff(&choi0) < 1e-10);
            assert!(
                dm.env_marginal
                    .matrix()
                    .max_abs_diff(DensityOperator::maximally_mixed(2).matrix())
                    < 1e-10
            );
        }
        assert!(choi0.max_abs_diff(bitflip_randomization().choi()) < 1e-10);
    }

    #[test]
    fn coincidence_fails_for_correlated_joints_and_holds_for_products() {
        let corr = Scenario::Quantum(correlated_mixture_scenario());
        assert!(!coincidence_check(&corr, Label::setting(0), 1e-9).unwrap());
        assert!(!coincidence_check(&corr, Label::setting(1), 1e-9).unwrap());

        let prod = Scenario::Quantum(product_fiducial_scenario());
        assert!(coincidence_check(&prod, Label::setting(0), 1e-9).unwrap());

        assert!(matches!(
            coincidence_check(&corr, Label::setting(9), 1e-9),
            Err(Error::UnknownLabel(_))
        ));
    }

    #[test]
    fn post_measurement_branches_are_products() {
        // After a Lüders readout on S1, the joint collapses to a product, so
        // every (j, k) branch passes the coincidence check.
        let sc = Scenario::Quantum(steering_scenario());
        for j in 0..2u32 {
            for k in 0..2u32 {
                assert!(
                    coincidence_check(&sc, Label::outcome(j, k), 1e-9).unwrap(),
                    "branch ({j},{k})"
                );
            }
        }
    }

    #[test]
    fn classical_do_maps_carry_env_marginals_per_branch() {
        use crate::classical::JointDist;
        use crate::scenarios::{ClassicalPreparation, ClassicalScenario};
        // XOR circuit: S2 = S1 xor E, fiducial perfectly correlated.
        let fid = JointDist::new(
            vec![0.5, 0.0, 0.0, 0.5],
            DimSpec(vec![2, 2]),
            1e-12,
        )
        .unwrap();
        // (s1, e) -> (s1 xor e, e), flat index s1 * 2 + e.
        let xor = StochasticMatrix::from_function(&[0, 3, 2, 1], 4).unwrap();
        let mut preps = Map::new();
        preps.insert(0, StochasticMatrix::identity(4));
        // Branch 1 flips E; the env marginal stays uniform either way.
        preps.insert(1, StochasticMatrix::from_function(&[1, 0, 3, 2], 4).unwrap());
        let sc = ClassicalScenario::new(
            "xor",
            fid,
            ClassicalPreparation::JointTransformation(preps),
            xor,
            2,
        )
        .unwrap();
        let maps = classical_do_maps_for_scenario(&sc).unwrap();
        assert_eq!(maps.len(), 2);
        for dm in maps.values() {
            // Uniform env marginal makes the do-map the full randomizer.
            for col in 0..2 {
                let column = dm.matrix.matrix().column(col);
                assert!((column[0] - 0.5).abs() < 1e-12);
                assert!((column[1] - 0.5).abs() < 1e-12);
            }
            assert!((dm.env_marginal.as_slice()[0] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn inference_maps_depend_on_the_branch_but_do_maps_do_not() {
        use crate::classical::JointDist;
        use crate::scenarios::{ClassicalPreparation, ClassicalScenario};
        let correlated = JointDist::new(
            vec![0.5, 0.0, 0.0, 0.5],
            DimSpec(vec![2, 2]),
            1e-12,
        )
        .unwrap();
        // (s1, e) -> (s1 xor e, e), flat index s1 * 2 + e.
        let xor = StochasticMatrix::from_function(&[0, 3, 2, 1], 4).unwrap();
        let mut preps = Map::new();
        preps.insert(0, StochasticMatrix::identity(4));
        // Branch 1 flips E, anticorrelating it with S1.
        preps.insert(1, StochasticMatrix::from_function(&[1, 0, 3, 2], 4).unwrap());
        let sc = ClassicalScenario::new(
            "xor-branches",
            correlated.clone(),
            ClassicalPreparation::JointTransformation(preps),
            xor,
            2,
        )
        .unwrap();
        let inf = jk_inference_maps(&sc).unwrap();
        assert_eq!(inf.len(), 2);
        // Branch 0 (correlated): observing S1 = s pins E = s, so S2 = 0
        // deterministically. Branch 1 (anticorrelated): S2 = 1.
        for (map, expect) in inf.iter().zip([0usize, 1usize]) {
            for col in &map.columns {
                let cond = col.as_ref().expect("both values supported");
                assert!((cond.as_slice()[expect] - 1.0).abs() < 1e-12);
            }
        }
        // The do-maps, by contrast, coincide across branches.
        let maps = classical_do_maps_for_scenario(&sc).unwrap();
        let m0 = maps[&Label::setting(0)].matrix.matrix().clone();
        let m1 = maps[&Label::setting(1)].matrix.matrix().clone();
        assert!(m0.max_abs_diff(&m1) < 1e-12);
    }

    #[test]
    fn comb_is_cptp_and_its_l_map_is_the_do_map() {
        let sc = correlated_mixture_scenario();
        let comb = build_comb(&sc).unwrap();
        let (cp, _) = comb.channel().is_completely_positive(1e-9);
        let (tp, _) = comb.channel().is_trace_preserving(1e-9);
        assert!(cp && tp);

        let l_map = l_map_from_comb(&comb).unwrap();
        let dm = quantum_do_map(
            &sc.interaction,
            &DensityOperator::maximally_mixed(2),
            2,
            2,
        )
        .unwrap();
        assert!(l_map.choi().max_abs_diff(dm.channel.choi()) < 1e-10);

        // Feeding the maximally mixed state and ignoring the retained output
        // returns the maximally mixed state.
        let steer = steering_state(&comb).unwrap();
        let s2 = steer.reduce(&[1]).unwrap();
        assert!(
            s2.matrix()
                .max_abs_diff(DensityOperator::maximally_mixed(2).matrix())
                < 1e-10
        );
        // For this circuit the steering state is completely uncorrelated.
        let expected = ComplexMatrix::identity(4).scale(c(0.25, 0.0));
        assert!(steer.matrix().max_abs_diff(&expected) < 1e-10);
    }

    #[test]
    fn product_fiducial_comb_factorizes() {
        let sc = product_fiducial_scenario();
        let comb = build_comb(&sc).unwrap();
        let sys = sc.fiducial.reduce(&[0]).unwrap();
        let dm = quantum_do_map(
            &sc.interaction,
            &sc.fiducial.reduce(&[1]).unwrap(),
            2,
            2,
        )
        .unwrap();
        let s = 1.0 / 2f64.sqrt();
        for input in [
            ket(&[(1.0, 0.0), (0.0, 0.0)]).projector(),
            ket(&[(s, 0.0), (0.0, s)]).projector(),
        ] {
            let out = comb.channel().apply_matrix(&input);
            let expected = tensor(sys.matrix(), &dm.channel.apply_matrix(&input));
            assert!(out.max_abs_diff(&expected) < 1e-10);
        }
        // No common cause: steering updates are effect-independent.
        let steer = steering_state(&comb).unwrap();
        let (_, cond_zero) =
            steering_update(&steer, &ket(&[(1.0, 0.0), (0.0, 0.0)]).projector()).unwrap();
        let (_, cond_plus) =
            steering_update(&steer, &ket(&[(s, 0.0), (s, 0.0)]).projector()).unwrap();
        assert!(cond_zero.matrix().max_abs_diff(cond_plus.matrix()) < 1e-10);
    }

    #[test]
    fn link_product_with_identity_gives_the_natural_output() {
        let sc = correlated_mixture_scenario();
        let comb = build_comb(&sc).unwrap();
        let (p, state) = link_product(&comb, &QuantumChannel::identity(2)).unwrap();
        assert!((p - 1.0).abs() < 1e-10);
        let natural = sc
            .evolve_joint(&sc.fiducial)
            .unwrap()
            .reduce(&[0])
            .unwrap();
        assert!(state.matrix().max_abs_diff(natural.matrix()) < 1e-10);
    }

    #[test]
    fn link_product_with_reprepare_equals_the_do_map() {
        let sc = correlated_mixture_scenario();
        let comb = build_comb(&sc).unwrap();
        let dm = l_map_from_comb(&comb).unwrap();
        let s = 1.0 / 2f64.sqrt();
        for sigma in [
            ket(&[(1.0, 0.0), (0.0, 0.0)]).projector(),
            ket(&[(s, 0.0), (s, 0.0)]).projector(),
            ket(&[(s, 0.0), (0.0, s)]).projector(),
        ] {
            let reprepare = QuantumChannel::constant(
                &DensityOperator::single(sigma.clone(), 1e-9).unwrap(),
                2,
            );
            let (p, state) = link_product(&comb, &reprepare).unwrap();
            assert!((p - 1.0).abs() < 1e-10);
            assert!(state.matrix().max_abs_diff(&dm.apply_matrix(&sigma)) < 1e-10);
        }
    }

    #[test]
    fn link_product_with_luders_elements_matches_the_measurement_pipeline() {
        // Remote steering: measuring the entangled fiducial with a Lüders
        // projector and swapping out the environment hands over the
        // transposed state.
        let sc = steering_scenario();
        let comb = build_comb(&sc).unwrap();
        let s = 1.0 / 2f64.sqrt();
        let kets_and_transposes = [
            (ket(&[(1.0, 0.0), (0.0, 0.0)]), ket(&[(1.0, 0.0), (0.0, 0.0)])),
            (ket(&[(s, 0.0), (s, 0.0)]), ket(&[(s, 0.0), (s, 0.0)])),
            (ket(&[(s, 0.0), (0.0, s)]), ket(&[(s, 0.0), (0.0, -s)])),
        ];
        for (psi, transpose) in kets_and_transposes {
            // A Lüders element is the (trace-decreasing) CP map □ ↦ P□P.
            let luders = QuantumChannel::from_kraus(&[psi.projector()]).unwrap();
            let (p, state) = link_product(&comb, &luders).unwrap();
            assert!((p - 0.5).abs() < 1e-10, "every outcome has probability 1/2");
            assert!(state.matrix().max_abs_diff(&transpose.projector()) < 1e-10);
        }
    }

    #[test]
    fn entangled_comb_steers_while_its_do_map_cannot() {
        // SWAP interaction on the classically correlated fiducial: the
        // steering state is the correlated pair, and conditioning on the
        // retained output genuinely moves the S2 state.
        let fid_mat = {
            let mut m = ComplexMatrix::zeros(4, 4);
            m.set(0, 0, c(0.5, 0.0));
            m.set(3, 3, c(0.5, 0.0));
            m
        };
        let fid = DensityOperator::new(fid_mat, DimSpec(vec![2, 2]), 1e-9).unwrap();
        let mut preps = Map::new();
        preps.insert(0, QuantumChannel::identity(4));
        let sc = QuantumScenario::new(
            "swap-correlated",
            fid,
            QuantumPreparation::JointTransformation(preps),
            QuantumChannel::from_unitary(&UnitaryOperator::new(gates::swap(2), 1e-9).unwrap()),
            2,
        )
        .unwrap();
        let comb = build_comb(&sc).unwrap();
        let steer = steering_state(&comb).unwrap();
        let mut expected = ComplexMatrix::zeros(4, 4);
        expected.set(0, 0, c(0.5, 0.0));
        expected.set(3, 3, c(0.5, 0.0));
        assert!(steer.matrix().max_abs_diff(&expected) < 1e-10);

        let (p, cond) = steering_update(&steer, &ket(&[(1.0, 0.0), (0.0, 0.0)]).projector())
            .unwrap();
        assert!((p - 0.5).abs() < 1e-10);
        assert!(
            cond.matrix()
                .max_abs_diff(&ket(&[(1.0, 0.0), (0.0, 0.0)]).projector())
                < 1e-10
        );

        // Effect = identity recovers the unconditional S2 marginal.
        let (p_all, uncond) = steering_update(&steer, &ComplexMatrix::identity(2)).unwrap();
        assert!((p_all - 1.0).abs() < 1e-10);
        assert!(
            uncond
                .matrix()
                .max_abs_diff(DensityOperator::maximally_mixed(2).matrix())
                < 1e-10
        );

        // An out-of-range effect is rejected.
        assert!(steering_update(&steer, &ComplexMatrix::identity(2).scale(c(2.0, 0.0))).is_err());
    }

    #[test]
    fn naive_composition_fails_where_the_joint_mediary_succeeds() {
        // Two identical CNOTs threading one environment: the second undoes
        // the first, but the naive do-map chain cannot know that.
        let cnot = gates::cnot_env_controls_system();
        let circuit = TwoStepCircuit {
            env: DensityOperator::maximally_mixed(2),
            first: cnot.clone(),
            second: cnot,
            d_s: 2,
            reference_input: DensityOperator::maximally_mixed(2),
        };
        let report = compose_and_check(&circuit).unwrap();
        assert!((report.naive_gap - 0.5).abs() < 1e-10, "gap {}", report.naive_gap);
        assert!(report.mediary_gap < 1e-10);
    }

    #[test]
    fn markovian_second_step_composes_naively() {
        let cnot = gates::cnot_env_controls_system();
        let sys_only = UnitaryOperator::new(
            tensor(&gates::hadamard(), &ComplexMatrix::identity(2)),
            1e-9,
        )
        .unwrap();
        let circuit = TwoStepCircuit {
            env: DensityOperator::basis(2, 0),
            first: cnot,
            second: sys_only,
            d_s: 2,
            reference_input: DensityOperator::maximally_mixed(2),
        };
        let report = compose_and_check(&circuit).unwrap();
        assert!(report.naive_gap < 1e-10);
        assert!(report.mediary_gap < 1e-10);
    }

    fn ic_qubit_preps() -> Vec<DensityOperator> {
        let s = 1.0 / 2f64.sqrt();
        vec![
            DensityOperator::basis(2, 0),
            DensityOperator::basis(2, 1),
            DensityOperator::from_ket(&ket(&[(s, 0.0), (s, 0.0)])).unwrap(),
            DensityOperator::from_ket(&ket(&[(s, 0.0), (0.0, s)])).unwrap(),
        ]
    }

    #[test]
    fn exact_tomography_recovers_the_channel() {
        let truth = bitflip_randomization();
        let est = process_tomography(&truth, &ic_qubit_preps(), &pauli_six_povm(), None, 7, false)
            .unwrap();
        assert!(est.choi_error_frobenius < 1e-8);
        assert!(est.choi.max_abs_diff(truth.choi()) < 1e-8);
    }

    #[test]
    fn sampled_tomography_error_shrinks_with_more_samples() {
        let truth = bitflip_randomization();
        let preps = ic_qubit_preps();
        let povm = pauli_six_povm();
        let coarse = process_tomography(&truth, &preps, &povm, Some(500), 42, false).unwrap();
        let fine = process_tomography(&truth, &preps, &povm, Some(50_000), 42, false).unwrap();
        assert!(coarse.choi_error_frobenius > fine.choi_error_frobenius);
        assert!(fine.choi_error_frobenius < 0.1);
        // Determinism under a fixed seed.
        let again = process_tomography(&truth, &preps, &povm, Some(500), 42, false).unwrap();
        assert!(again.choi.max_abs_diff(&coarse.choi) < 1e-15);
    }

    #[test]
    fn rank_deficient_preparations_are_rejected_by_name() {
        let truth = bitflip_randomization();
        let preps = vec![DensityOperator::basis(2, 0), DensityOperator::basis(2, 1)];
        match process_tomography(&truth, &preps, &pauli_six_povm(), None, 7, false) {
            Err(e @ Error::RankDeficient { .. }) => {
                assert!(e.to_string().contains("input"))
            }
            other => panic!("expected rank-deficiency, got {other:?}"),
        }
    }

    #[test]
    fn causal_tomography_reconstructs_comb_and_do_map() {
        let sc = correlated_mixture_scenario();
        let povm = pauli_six_povm().tensor_with(&pauli_six_povm());
        let report = causal_tomography(&sc, &ic_qubit_preps(), &povm, None, 7, false).unwrap();
        assert!(report.comb.choi_error_frobenius < 1e-8);
        assert!(report.do_map.choi_error_frobenius < 1e-8);

        // Sampled reconstruction with PSD projection stays a positive
        // operator and still lands near the truth.
        let sampled =
            causal_tomography(&sc, &ic_qubit_preps(), &povm, Some(20_000), 11, true).unwrap();
        assert!(crate::mat::is_psd(&sampled.comb.choi, 1e-9));
        assert!(sampled.comb.choi_error_frobenius < 0.5);
    }

    #[test]
    fn do_map_json_exposes_label_and_env_marginal() {
        let cnot = QuantumChannel::from_unitary(
            &gates::cnot_env_controls_system(),
        );
        let dm = quantum_do_map(&cnot, &DensityOperator::maximally_mixed(2), 2, 2).unwrap();
        let v = serde_json::to_value(&dm).unwrap();
        assert_eq!(v["label"], "unconditional");
        assert!(v["env_marginal"].is_object() || v["env_marginal"].is_array());
        assert!(v["channel"].is_object());

        let sc = correlated_mixture_scenario();
        let maps = do_maps_for_scenario(&sc).unwrap();
        let v = serde_json::to_value(&maps).unwrap();
        assert!(v.get("0").is_some() && v.get("1").is_some());
    }
}
