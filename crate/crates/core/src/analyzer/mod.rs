//! Classification of input-output relations.
//!
//! Given the relation realized by a circuit — the list of system states in
//! and out, per preparation branch — this module answers the operational
//! question: *what kind of map, if any, is consistent with it?* The verdicts
//! range from "no map at all" (the relation is one-to-many) through "only
//! nonlinear maps" and "linear but never completely positive / stochastic"
//! to a recovered CPTP channel or stochastic matrix. Every negative verdict
//! carries a machine-checkable witness: a state pair, a fit residual, a Choi
//! eigenvalue or an LP certificate.

pub mod dykstra;
pub mod fit;
pub mod simplex;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::classical::{total_variation, RealMatrix, StochasticMatrix};
use crate::error::{Error, Result};
use crate::mat::{trace_distance, ComplexMatrix};
use crate::quantum::{positivity_scan, PositivityScan, QuantumChannel};
use crate::scenarios::{ClassicalRelation, Label, QuantumRelation, Relation};
use crate::DEFAULT_TOL;

pub use dykstra::{choi_feasibility, DykstraOptions, DykstraOutcome};
pub use fit::{fit_classical_pairs, fit_quantum_pairs, ClassicalFit, QuantumFit};
pub use simplex::{stochastic_feasibility_lp, LpOutcome};

/// A pair of branches exhibiting a pathology, with the distances that prove
/// it (trace distance for quantum relations, total variation for classical).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Witness {
    pub label_a: Label,
    pub label_b: Label,
    pub input_distance: f64,
    pub output_distance: f64,
}

/// The five-way verdict lattice for a relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    /// Two branches share the input but not the output: the relation is
    /// one-to-many and defines no map whatsoever.
    #[serde(rename = "NoMap")]
    NoMap,
    /// A map exists, but every state-to-state map fitting the relation is
    /// nonlinear (witnessed by distance expansion or by an inconsistent
    /// linear span).
    #[serde(rename = "NonlinearOnly")]
    NonlinearOnly,
    /// A linear map fits, but none is completely positive — and the fit
    /// is not even positive on the scanned states.
    #[serde(rename = "LinearNotCP")]
    LinearNotCp,
    /// A linear map fits, but none is stochastic.
    #[serde(rename = "LinearNotStochastic")]
    LinearNotStochastic,
    /// A linear, positive (as far as scanning can tell) map fits, but not a
    /// completely positive one.
    #[serde(rename = "LinearPositiveNotCP")]
    LinearPositiveNotCp,
    /// A completely positive trace-preserving map fits.
    #[serde(rename = "CPTP")]
    Cptp,
    /// A stochastic matrix fits.
    #[serde(rename = "Stochastic")]
    Stochastic,
    /// The fit is non-unique and no feasibility question resolved within
    /// budget.
    #[serde(rename = "Underdetermined")]
    Underdetermined,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Classification::NoMap => "NoMap",
            Classification::NonlinearOnly => "NonlinearOnly",
            Classification::LinearNotCp => "LinearNotCP",
            Classification::LinearNotStochastic => "LinearNotStochastic",
            Classification::LinearPositiveNotCp => "LinearPositiveNotCP",
            Classification::Cptp => "CPTP",
            Classification::Stochastic => "Stochastic",
            Classification::Underdetermined => "Underdetermined",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Classification {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "NoMap" => Classification::NoMap,
            "NonlinearOnly" => Classification::NonlinearOnly,
            "LinearNotCP" => Classification::LinearNotCp,
            "LinearNotStochastic" => Classification::LinearNotStochastic,
            "LinearPositiveNotCP" => Classification::LinearPositiveNotCp,
            "CPTP" => Classification::Cptp,
            "Stochastic" => Classification::Stochastic,
            "Underdetermined" => Classification::Underdetermined,
            other => return Err(Error::UnknownLabel(format!("classification {other:?}"))),
        })
    }
}

/// Either flavour of fitted map.
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum FittedMap {
    Quantum(QuantumChannel),
    Classical(RealMatrix),
}

/// The least-squares fit and its quality.
#[derive(Debug, Clone, Serialize)]
pub struct LinearFit {
    pub residual: f64,
    /// True when the inputs span the whole operator/distribution space, so
    /// the fit is the only linear candidate.
    pub unique: bool,
    pub map: FittedMap,
}

/// Verdict of the CP / stochastic feasibility search.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "verdict")]
pub enum Feasibility {
    /// A valid map satisfying the relation (CPTP Choi or stochastic matrix).
    #[serde(rename = "FEASIBLE")]
    Feasible { map: FittedMap },
    /// No such map. `evidence` is the minimum Choi eigenvalue of the unique
    /// fit (certified) / the stabilized Dykstra gap (numerical) / the LP
    /// phase-1 objective (certified). `certified` distinguishes exact
    /// certificates from numerical evidence.
    #[serde(rename = "INFEASIBLE")]
    Infeasible { evidence: f64, certified: bool },
    /// The search exhausted its budget without resolving.
    #[serde(rename = "UNDETERMINED")]
    Undetermined,
}

/// Everything the pipeline learned about one relation. Serializes with this
/// exact field order; `classification` uses the stable strings of
/// [`Classification`].
#[derive(Debug, Clone, Serialize)]
pub struct RelationReport {
    pub kind: String,
    pub functional: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub one_to_many_witness: Option<Witness>,
    pub span_rank: usize,
    pub informationally_complete: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linear_fit: Option<LinearFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distinguishability_witness: Option<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cp_or_stochastic: Option<Feasibility>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub positivity_scan: Option<PositivityScan>,
    pub classification: Classification,
}

/// Tuning for [`classify_with`]; [`ClassifyOptions::default`] matches the
/// documented defaults.
#[derive(Debug, Clone)]
pub struct ClassifyOptions {
    /// General numerical tolerance (fit residuals, witnesses, eigenvalues).
    pub tol: f64,
    /// Tolerance for treating two inputs as "the same state" in the
    /// one-to-many check.
    pub grouping_tol: f64,
    /// Require trace preservation in the CP feasibility question.
    pub require_tp: bool,
    pub dykstra: DykstraOptions,
    /// Random pure states probed by the positivity scan.
    pub scan_random: usize,
    pub scan_seed: u64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            tol: DEFAULT_TOL,
            grouping_tol: 1e-8,
            require_tp: true,
            dykstra: DykstraOptions::default(),
            scan_random: 256,
            scan_seed: 7,
        }
    }
}

// ---------------------------------------------------------------------------
// Witness search
// ---------------------------------------------------------------------------

/// Scan for a one-to-many witness: two branches whose inputs coincide within
/// `tol` while the outputs differ by more than `tol`. The returned pair
/// satisfies both inequalities directly (not merely through a chain of
/// near-equal inputs), so it can be re-checked independently.
pub fn detect_one_to_many(rel: &Relation, tol: f64) -> Option<Witness> {
    scan_pairs(rel, |input_d, output_d| {
        if input_d <= tol && output_d > tol {
            Some(output_d)
        } else {
            None
        }
    })
}

/// Scan for a distance-expansion witness: a branch pair whose outputs are
/// strictly farther apart than their inputs (by more than `tol`). Positive,
/// normalization-preserving linear maps are contractive for these distances,
/// so a witness rules the whole class out.
pub fn distinguishability_witness(rel: &Relation, tol: f64) -> Option<Witness> {
    scan_pairs(rel, |input_d, output_d| {
        let excess = output_d - input_d;
        if excess > tol {
            Some(excess)
        } else {
            None
        }
    })
}

/// Shared pair scan: returns the admissible pair maximizing the score, ties
/// broken towards smaller labels for determinism.
fn scan_pairs<F: Fn(f64, f64) -> Option<f64>>(rel: &Relation, admit: F) -> Option<Witness> {
    let mut best: Option<(f64, Witness)> = None;
    let mut consider = |w: Witness, score: f64| {
        let better = match &best {
            None => true,
            Some((s, b)) => {
                score > *s + 1e-15
                    || ((score - *s).abs() <= 1e-15
                        && (w.label_a, w.label_b) < (b.label_a, b.label_b))
            }
        };
        if better {
            best = Some((score, w));
        }
    };
    match rel {
        Relation::Quantum(r) => {
            let pairs = r.pairs();
            for a in 0..pairs.len() {
                for b in (a + 1)..pairs.len() {
                    let din = trace_distance(pairs[a].input.matrix(), pairs[b].input.matrix())
                        .expect("relation pairs share dims");
                    let dout = trace_distance(pairs[a].output.matrix(), pairs[b].output.matrix())
                        .expect("relation pairs share dims");
                    if let Some(score) = admit(din, dout) {
                        consider(
                            Witness {
                                label_a: pairs[a].label,
                                label_b: pairs[b].label,
                                input_distance: din,
                                output_distance: dout,
                            },
                            score,
                        );
                    }
                }
            }
        }
        Relation::Classical(r) => {
            let pairs = r.pairs();
            for a in 0..pairs.len() {
                for b in (a + 1)..pairs.len() {
                    let din = total_variation(&pairs[a].input, &pairs[b].input)
                        .expect("relation pairs share dims");
                    let dout = total_variation(&pairs[a].output, &pairs[b].output)
                        .expect("relation pairs share dims");
                    if let Some(score) = admit(din, dout) {
                        consider(
                            Witness {
                                label_a: pairs[a].label,
                                label_b: pairs[b].label,
                                input_distance: din,
                                output_distance: dout,
                            },
                            score,
                        );
                    }
                }
            }
        }
    }
    best.map(|(_, w)| w)
}

// ---------------------------------------------------------------------------
// Feasibility front-ends
// ---------------------------------------------------------------------------

fn quantum_pair_matrices(rel: &QuantumRelation) -> Vec<(ComplexMatrix, ComplexMatrix)> {
    rel.pairs()
        .iter()
        .map(|p| (p.input.matrix().clone(), p.output.matrix().clone()))
        .collect()
}

fn classical_pair_vecs(rel: &ClassicalRelation) -> Vec<(Vec<f64>, Vec<f64>)> {
    rel.pairs()
        .iter()
        .map(|p| (p.input.as_slice().to_vec(), p.output.as_slice().to_vec()))
        .collect()
}

/// Is some CPTP (or just CP when `require_tp` is off) map consistent with
/// the relation? Unique fits are certified directly by their Choi spectrum;
/// otherwise Dykstra's alternating projections search the intersection of
/// the constraint set with the PSD cone, warm-started at the fit.
pub fn cp_feasibility(
    rel: &QuantumRelation,
    require_tp: bool,
    tol: f64,
    opts: &DykstraOptions,
) -> Result<Feasibility> {
    let pairs = quantum_pair_matrices(rel);
    let fit = fit_quantum_pairs(&pairs, rel.d_in(), rel.d_out())?;
    if fit.residual > tol.max(1e-9) {
        // No linear map at all, a fortiori no CP one; the residual certifies.
        return Ok(Feasibility::Infeasible {
            evidence: fit.residual,
            certified: true,
        });
    }
    let unique = fit.span_rank == rel.d_in() * rel.d_in();
    cp_feasibility_of_fit(&pairs, &fit, unique, require_tp, tol, opts)
}

fn cp_feasibility_of_fit(
    pairs: &[(ComplexMatrix, ComplexMatrix)],
    fit: &QuantumFit,
    unique: bool,
    require_tp: bool,
    tol: f64,
    opts: &DykstraOptions,
) -> Result<Feasibility> {
    let tol = tol.max(1e-9);
    if unique {
        let (cp, min_eig) = fit.channel.is_completely_positive(tol);
        let (tp, tp_dev) = fit.channel.is_trace_preserving(tol);
        if cp && (tp || !require_tp) {
            return Ok(Feasibility::Feasible {
                map: FittedMap::Quantum(fit.channel.clone()),
            });
        }
        // The unique candidate fails: certified, with the most telling
        // number as evidence (negative eigenvalue, or TP deviation as a
        // negative magnitude when positivity holds).
        let evidence = if cp { -tp_dev } else { min_eig };
        return Ok(Feasibility::Infeasible {
            evidence,
            certified: true,
        });
    }
    match choi_feasibility(
        pairs,
        fit.channel.d_in(),
        fit.channel.d_out(),
        require_tp,
        Some(fit.channel.choi()),
        opts,
    ) {
        DykstraOutcome::Feasible(choi) => {
            let validation_tol = (opts.gap_tol * 100.0).max(1e-7);
            let ch = QuantumChannel::from_choi(choi, fit.channel.d_in(), fit.channel.d_out())?;
            let (cp, _) = ch.is_completely_positive(validation_tol);
            let tp_ok = !require_tp || ch.is_trace_preserving(validation_tol).0;
            let fits = pairs
                .iter()
                .all(|(s, t)| ch.apply_matrix(s).max_abs_diff(t) <= validation_tol);
            if cp && tp_ok && fits {
                Ok(Feasibility::Feasible {
                    map: FittedMap::Quantum(ch),
                })
            } else {
                Ok(Feasibility::Undetermined)
            }
        }
        DykstraOutcome::Infeasible { gap } => Ok(Feasibility::Infeasible {
            evidence: gap,
            certified: false,
        }),
        DykstraOutcome::Undetermined => Ok(Feasibility::Undetermined),
    }
}

/// Is some column-stochastic matrix consistent with the relation? Exact
/// either way: feasibility exhibits the matrix, infeasibility carries the
/// LP certificate.
pub fn stochastic_feasibility(rel: &ClassicalRelation, tol: f64) -> Result<Feasibility> {
    let pairs = classical_pair_vecs(rel);
    match stochastic_feasibility_lp(&pairs, rel.d_in(), rel.d_out())? {
        LpOutcome::Feasible(x) => {
            let m = simplex::solution_matrix(&x, rel.d_in(), rel.d_out());
            let stoch = StochasticMatrix::new(m, tol.max(1e-7))?;
            Ok(Feasibility::Feasible {
                map: FittedMap::Classical(stoch.matrix().clone()),
            })
        }
        LpOutcome::Infeasible { objective } => Ok(Feasibility::Infeasible {
            evidence: objective,
            certified: true,
        }),
    }
}

// ---------------------------------------------------------------------------
// The pipeline
// ---------------------------------------------------------------------------

/// Classify with default options.
pub fn classify(rel: &Relation) -> Result<RelationReport> {
    classify_with(rel, &ClassifyOptions::default())
}

/// Full pipeline: one-to-many, distance expansion, least-squares fit,
/// CP/stochastic feasibility, positivity scan.
pub fn classify_with(rel: &Relation, opts: &ClassifyOptions) -> Result<RelationReport> {
    match rel {
        Relation::Quantum(q) => classify_quantum(rel, q, opts),
        Relation::Classical(cl) => classify_classical(rel, cl, opts),
    }
}

fn classify_quantum(
    rel: &Relation,
    q: &QuantumRelation,
    opts: &ClassifyOptions,
) -> Result<RelationReport> {
    let pairs = quantum_pair_matrices(q);
    let span_rank = fit::quantum_span_rank(pairs.iter().map(|(s, _)| s), q.d_in())?;
    let ic = span_rank == q.d_in() * q.d_in();
    let mut report = RelationReport {
        kind: "quantum".into(),
        functional: true,
        one_to_many_witness: None,
        span_rank,
        informationally_complete: ic,
        linear_fit: None,
        distinguishability_witness: None,
        cp_or_stochastic: None,
        positivity_scan: None,
        classification: Classification::Underdetermined,
    };

    if let Some(w) = detect_one_to_many(rel, opts.grouping_tol) {
        report.functional = false;
        report.one_to_many_witness = Some(w);
        report.classification = Classification::NoMap;
        return Ok(report);
    }

    if let Some(w) = distinguishability_witness(rel, opts.tol.max(1e-9)) {
        report.distinguishability_witness = Some(w);
        report.classification = Classification::NonlinearOnly;
        return Ok(report);
    }

    let fit = fit_quantum_pairs(&pairs, q.d_in(), q.d_out())?;
    let unique = fit.span_rank == q.d_in() * q.d_in();
    report.linear_fit = Some(LinearFit {
        residual: fit.residual,
        unique,
        map: FittedMap::Quantum(fit.channel.clone()),
    });
    if fit.residual > opts.tol.max(1e-9) {
        // The relation is functional yet no linear map reproduces it: the
        // inputs obey a linear dependency the outputs break. The residual is
        // the witness.
        report.classification = Classification::NonlinearOnly;
        return Ok(report);
    }

    let feas = cp_feasibility_of_fit(&pairs, &fit, unique, opts.require_tp, opts.tol, &opts.dykstra)?;
    report.classification = match &feas {
        Feasibility::Feasible { .. } => Classification::Cptp,
        Feasibility::Undetermined => Classification::Underdetermined,
        Feasibility::Infeasible { .. } => {
            // CP failed; is the fit at least positive on states? A found
            // violation settles LinearNotCP; a clean scan is (heuristic)
            // evidence for LinearPositiveNotCP.
            let scan = positivity_scan(&fit.channel, opts.scan_random, opts.scan_seed, opts.tol);
            let verdict = if scan.violation.is_some() {
                Classification::LinearNotCp
            } else {
                Classification::LinearPositiveNotCp
            };
            report.positivity_scan = Some(scan);
            verdict
        }
    };
    report.cp_or_stochastic = Some(feas);
    Ok(report)
}

fn classify_classical(
    rel: &Relation,
    cl: &ClassicalRelation,
    opts: &ClassifyOptions,
) -> Result<RelationReport> {
    let pairs = classical_pair_vecs(cl);
    let inputs: Vec<Vec<f64>> = pairs.iter().map(|(w, _)| w.clone()).collect();
    let span_rank = crate::eig::real_rank(&inputs);
    let ic = span_rank == cl.d_in();
    let mut report = RelationReport {
        kind: "classical".into(),
        functional: true,
        one_to_many_witness: None,
        span_rank,
        informationally_complete: ic,
        linear_fit: None,
        distinguishability_witness: None,
        cp_or_stochastic: None,
        positivity_scan: None,
        classification: Classification::Underdetermined,
    };

    if let Some(w) = detect_one_to_many(rel, opts.grouping_tol) {
        report.functional = false;
        report.one_to_many_witness = Some(w);
        report.classification = Classification::NoMap;
        return Ok(report);
    }

    if let Some(w) = distinguishability_witness(rel, opts.tol.max(1e-9)) {
        report.distinguishability_witness = Some(w);
        report.classification = Classification::NonlinearOnly;
        return Ok(report);
    }

    let fit = fit_classical_pairs(&pairs, cl.d_in(), cl.d_out())?;
    let unique = fit.span_rank == cl.d_in();
    report.linear_fit = Some(LinearFit {
        residual: fit.residual,
        unique,
        map: FittedMap::Classical(fit.matrix.clone()),
    });
    if fit.residual > opts.tol.max(1e-9) {
        report.classification = Classification::NonlinearOnly;
        return Ok(report);
    }

    let feas = stochastic_feasibility(cl, opts.tol)?;
    report.classification = match &feas {
        Feasibility::Feasible { .. } => Classification::Stochastic,
        Feasibility::Infeasible { .. } => Classification::LinearNotStochastic,
        Feasibility::Undetermined => Classification::Underdetermined,
    };
    report.cp_or_stochastic = Some(feas);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::ProbDist;
    use crate::mat::c;
    use crate::quantum::{random_density, random_unitary, stinespring_channel, DensityOperator};
    use crate::scenarios::{ClassicalPair, QuantumPair};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn qpair(j: u32, input: ComplexMatrix, output: ComplexMatrix) -> QuantumPair {
        QuantumPair {
            label: Label::setting(j),
            weight: 1.0,
            input: DensityOperator::single(input, 1e-9).unwrap(),
            output: DensityOperator::single(output, 1e-9).unwrap(),
        }
    }

    fn cpair(j: u32, input: Vec<f64>, output: Vec<f64>) -> ClassicalPair {
        ClassicalPair {
            label: Label::setting(j),
            weight: 1.0,
            input: ProbDist::new(input, 1e-12).unwrap(),
            output: ProbDist::new(output, 1e-12).unwrap(),
        }
    }

    fn proj(amps: &[(f64, f64)]) -> ComplexMatrix {
        ComplexMatrix::ket(&amps.iter().map(|&(re, im)| c(re, im)).collect::<Vec<_>>())
            .projector()
    }

    fn transpose_relation() -> Relation {
        let s = 1.0 / 2f64.sqrt();
        let states = [
            proj(&[(1.0, 0.0), (0.0, 0.0)]),
            proj(&[(0.0, 0.0), (1.0, 0.0)]),
            proj(&[(s, 0.0), (s, 0.0)]),
            proj(&[(s, 0.0), (0.0, s)]),
        ];
        let pairs = states
            .iter()
            .enumerate()
            .map(|(j, st)| {
                let mut p = qpair(j as u32, st.clone(), st.transpose());
                p.weight = 0.5;
                p
            })
            .collect();
        Relation::Quantum(QuantumRelation::new(pairs).unwrap())
    }

    #[test]
    fn one_to_many_witness_found_and_labelled() {
        let half = ComplexMatrix::identity(2).scale(c(0.5, 0.0));
        let rel = Relation::Quantum(
            QuantumRelation::new(vec![
                qpair(0, half.clone(), proj(&[(1.0, 0.0), (0.0, 0.0)])),
                qpair(1, half.clone(), proj(&[(0.0, 0.0), (1.0, 0.0)])),
            ])
            .unwrap(),
        );
        let w = detect_one_to_many(&rel, 1e-8).expect("witness");
        assert_eq!((w.label_a, w.label_b), (Label::setting(0), Label::setting(1)));
        assert!(w.input_distance <= 1e-8);
        assert!((w.output_distance - 1.0).abs() < 1e-12);

        let report = classify(&rel).unwrap();
        assert_eq!(report.classification, Classification::NoMap);
        assert!(!report.functional);
        assert!(report.one_to_many_witness.is_some());
        assert!(report.linear_fit.is_none());
    }

    #[test]
    fn transpose_relation_has_no_one_to_many_witness() {
        assert!(detect_one_to_many(&transpose_relation(), 1e-8).is_none());
        // Single-pair relations never have a witness.
        let single = Relation::Quantum(
            QuantumRelation::new(vec![qpair(
                0,
                proj(&[(1.0, 0.0), (0.0, 0.0)]),
                proj(&[(1.0, 0.0), (0.0, 0.0)]),
            )])
            .unwrap(),
        );
        assert!(detect_one_to_many(&single, 1e-8).is_none());
    }

    #[test]
    fn transpose_relation_classified_linear_positive_not_cp() {
        let rel = transpose_relation();
        let report = classify(&rel).unwrap();
        assert_eq!(report.classification, Classification::LinearPositiveNotCp);
        assert!(report.functional);
        assert_eq!(report.span_rank, 4);
        assert!(report.informationally_complete);
        let fit = report.linear_fit.as_ref().expect("fit recorded");
        assert!(fit.residual < 1e-9);
        assert!(fit.unique);
        match &fit.map {
            FittedMap::Quantum(ch) => {
                assert!(
                    ch.choi()
                        .max_abs_diff(QuantumChannel::transpose_channel(2).choi())
                        < 1e-9
                );
            }
            FittedMap::Classical(_) => panic!("expected quantum map"),
        }
        match report.cp_or_stochastic.as_ref().expect("feasibility ran") {
            Feasibility::Infeasible {
                evidence,
                certified,
            } => {
                assert!(*certified, "unique fit certifies directly");
                assert!((evidence + 1.0).abs() < 1e-9, "min Choi eigenvalue is -1");
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
        let scan = report.positivity_scan.as_ref().expect("scan ran");
        assert!(scan.violation.is_none(), "the map is positive");
    }

    #[test]
    fn distance_expanding_relation_is_nonlinear_only() {
        let s = 1.0 / 2f64.sqrt();
        let rel = Relation::Quantum(
            QuantumRelation::new(vec![
                qpair(
                    0,
                    proj(&[(1.0, 0.0), (0.0, 0.0)]),
                    proj(&[(1.0, 0.0), (0.0, 0.0)]),
                ),
                qpair(
                    1,
                    proj(&[(s, 0.0), (s, 0.0)]),
                    proj(&[(0.0, 0.0), (1.0, 0.0)]),
                ),
            ])
            .unwrap(),
        );
        let w = distinguishability_witness(&rel, 1e-9).expect("witness");
        assert!((w.input_distance - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!((w.output_distance - 1.0).abs() < 1e-12);

        let report = classify(&rel).unwrap();
        assert_eq!(report.classification, Classification::NonlinearOnly);
        assert!(report.distinguishability_witness.is_some());
    }

    #[test]
    fn ground_truth_cptp_maps_are_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let s = 1.0 / 2f64.sqrt();
        let inputs = [
            proj(&[(1.0, 0.0), (0.0, 0.0)]),
            proj(&[(0.0, 0.0), (1.0, 0.0)]),
            proj(&[(s, 0.0), (s, 0.0)]),
            proj(&[(s, 0.0), (0.0, s)]),
        ];
        for trial in 0..10 {
            let u = random_unitary(4, &mut rng);
            let env = random_density(2, &mut rng);
            let truth = stinespring_channel(&u, &env, 2, 2).unwrap();
            let pairs: Vec<QuantumPair> = inputs
                .iter()
                .enumerate()
                .map(|(j, st)| {
                    qpair(j as u32, st.clone(), truth.apply_matrix(st).hermitize())
                })
                .collect();
            let rel = Relation::Quantum(QuantumRelation::new(pairs).unwrap());
            let report = classify(&rel).unwrap();
            assert_eq!(
                report.classification,
                Classification::Cptp,
                "trial {trial}"
            );
            match report.cp_or_stochastic.as_ref().unwrap() {
                Feasibility::Feasible {
                    map: FittedMap::Quantum(ch),
                } => {
                    assert!(
                        ch.choi().max_abs_diff(truth.choi()) < 1e-6,
                        "trial {trial}: recovered map deviates"
                    );
                }
                other => panic!("expected feasible quantum map, got {other:?}"),
            }
        }
    }

    fn overlapping_triple_relation() -> Relation {
        // Three overlapping distributions pushed to shifted overlapping
        // outputs; a linear fit exists on their span but cannot be
        // stochastic: it must move mass off outcome 0 deterministically
        // while fixing the uniform average.
        let pairs = vec![
            cpair(0, vec![0.5, 0.5, 0.0, 0.0], vec![0.0, 0.0, 0.5, 0.5]),
            cpair(1, vec![0.5, 0.0, 0.5, 0.0], vec![0.0, 0.5, 0.0, 0.5]),
            cpair(2, vec![0.5, 0.0, 0.0, 0.5], vec![0.0, 0.5, 0.5, 0.0]),
        ];
        Relation::Classical(ClassicalRelation::new(pairs).unwrap())
    }

    #[test]
    fn overlapping_triple_is_linear_but_not_stochastic() {
        let rel = overlapping_triple_relation();
        assert!(detect_one_to_many(&rel, 1e-8).is_none());
        assert!(
            distinguishability_witness(&rel, 1e-9).is_none(),
            "all TV distances are preserved (1/2 in, 1/2... checked below)"
        );
        let report = classify(&rel).unwrap();
        assert_eq!(report.classification, Classification::LinearNotStochastic);
        assert_eq!(report.span_rank, 3);
        assert!(!report.informationally_complete);
        let fit = report.linear_fit.as_ref().unwrap();
        assert!(fit.residual < 1e-9, "a linear map does fit the span");
        assert!(!fit.unique);
        match report.cp_or_stochastic.as_ref().unwrap() {
            Feasibility::Infeasible {
                evidence,
                certified,
            } => {
                assert!(*certified, "LP infeasibility is exact");
                assert!(*evidence > 1e-6);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn known_matrix_fits_the_overlapping_triple_on_its_span() {
        // The relation admits a (non-stochastic) linear fit with a clean
        // closed form; verify our least-squares fit agrees with it on all
        // three inputs.
        let m = RealMatrix::from_rows(vec![
            vec![0.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 1.0],
            vec![0.0, 1.0, 0.0, 1.0],
            vec![0.0, 1.0, 1.0, 0.0],
        ])
        .unwrap();
        if let Relation::Classical(rel) = overlapping_triple_relation() {
            for p in rel.pairs() {
                let via_m = m.apply(p.input.as_slice());
                for (a, b) in via_m.iter().zip(p.output.as_slice()) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
            let fit =
                fit_classical_pairs(&classical_pair_vecs(&rel), rel.d_in(), rel.d_out()).unwrap();
            for p in rel.pairs() {
                let via_fit = fit.matrix.apply(p.input.as_slice());
                let via_m = m.apply(p.input.as_slice());
                for (a, b) in via_fit.iter().zip(via_m.iter()) {
                    assert!((a - b).abs() < 1e-9);
                }
            }
        } else {
            unreachable!()
        }
    }

    #[test]
    fn classical_distribution_expansion_is_nonlinear_only() {
        let rel = Relation::Classical(
            ClassicalRelation::new(vec![
                cpair(0, vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]),
                cpair(1, vec![0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5]),
            ])
            .unwrap(),
        );
        let w = distinguishability_witness(&rel, 1e-9).expect("witness");
        assert!((w.input_distance - 0.5).abs() < 1e-12);
        assert!((w.output_distance - 1.0).abs() < 1e-12);
        let report = classify(&rel).unwrap();
        assert_eq!(report.classification, Classification::NonlinearOnly);
    }

    #[test]
    fn stochastic_ground_truth_recovered_exactly() {
        let truth = StochasticMatrix::new(
            RealMatrix::from_rows(vec![
                vec![0.8, 0.1, 0.3],
                vec![0.2, 0.6, 0.3],
                vec![0.0, 0.3, 0.4],
            ])
            .unwrap(),
            1e-12,
        )
        .unwrap();
        let pairs: Vec<ClassicalPair> = (0..3)
            .map(|j| {
                let mut w = vec![0.0; 3];
                w[j] = 1.0;
                cpair(j as u32, w.clone(), truth.matrix().apply(&w))
            })
            .collect();
        let rel = Relation::Classical(ClassicalRelation::new(pairs).unwrap());
        let report = classify(&rel).unwrap();
        assert_eq!(report.classification, Classification::Stochastic);
        match report.cp_or_stochastic.as_ref().unwrap() {
            Feasibility::Feasible {
                map: FittedMap::Classical(m),
            } => {
                assert!(m.max_abs_diff(truth.matrix()) < 1e-7);
            }
            other => panic!("expected feasible, got {other:?}"),
        }
    }

    #[test]
    fn single_fixed_point_resolves_to_cptp_despite_non_unique_fit() {
        let half = ComplexMatrix::identity(2).scale(c(0.5, 0.0));
        let rel = Relation::Quantum(
            QuantumRelation::new(vec![qpair(0, half.clone(), half.clone())]).unwrap(),
        );
        let report = classify(&rel).unwrap();
        assert_eq!(report.classification, Classification::Cptp);
        let fit = report.linear_fit.as_ref().unwrap();
        assert!(!fit.unique);
    }

    #[test]
    fn exhausted_budget_reports_underdetermined() {
        let half = ComplexMatrix::identity(2).scale(c(0.5, 0.0));
        let rel = Relation::Quantum(
            QuantumRelation::new(vec![qpair(0, half.clone(), half.clone())]).unwrap(),
        );
        let opts = ClassifyOptions {
            dykstra: DykstraOptions {
                max_iter: 0,
                ..DykstraOptions::default()
            },
            ..ClassifyOptions::default()
        };
        let report = classify_with(&rel, &opts).unwrap();
        assert_eq!(report.classification, Classification::Underdetermined);
    }

    #[test]
    fn inconsistent_span_falls_to_nonlinear_with_residual_witness() {
        // Four inputs with two decompositions of the identity:
        // |0><0| + |1><1| = |+><+| + |-><-|. The outputs are strongly
        // contracted (no distance expands, so no expansion witness), but the
        // two output sums disagree, so no linear map can fit.
        let s = 1.0 / 2f64.sqrt();
        let near_half = |x: f64, z: f64| {
            ComplexMatrix::from_real_rows(vec![
                vec![0.5 + z, x],
                vec![x, 0.5 - z],
            ])
            .unwrap()
        };
        let rel = Relation::Quantum(
            QuantumRelation::new(vec![
                qpair(0, proj(&[(1.0, 0.0), (0.0, 0.0)]), near_half(0.0, 0.1)),
                qpair(1, proj(&[(0.0, 0.0), (1.0, 0.0)]), near_half(0.0, -0.1)),
                qpair(2, proj(&[(s, 0.0), (s, 0.0)]), near_half(0.1, 0.0)),
                qpair(3, proj(&[(s, 0.0), (-s, 0.0)]), near_half(0.1, 0.0)),
            ])
            .unwrap(),
        );
        assert!(detect_one_to_many(&rel, 1e-8).is_none());
        assert!(distinguishability_witness(&rel, 1e-9).is_none());
        let report = classify(&rel).unwrap();
        assert_eq!(report.classification, Classification::NonlinearOnly);
        assert!(report.distinguishability_witness.is_none());
        let fit = report.linear_fit.as_ref().expect("fit is the witness");
        assert!(fit.residual > 1e-2);
    }

    #[test]
    fn report_serializes_with_exact_classification_strings() {
        let report = classify(&transpose_relation()).unwrap();
        let v = serde_json::to_value(&report).unwrap();
        assert_eq!(v["classification"], "LinearPositiveNotCP");
        assert_eq!(v["kind"], "quantum");
        assert_eq!(v["cp_or_stochastic"]["verdict"], "INFEASIBLE");
        assert_eq!(v["cp_or_stochastic"]["certified"], true);

        let report = classify(&overlapping_triple_relation()).unwrap();
        let v = serde_json::to_value(&report).unwrap();
        assert_eq!(v["classification"], "LinearNotStochastic");

        // Field order is stable (struct order).
        let s = serde_json::to_string(&report).unwrap();
        let kind_pos = s.find("\"kind\"").unwrap();
        let class_pos = s.find("\"classification\"").unwrap();
        assert!(kind_pos < class_pos);
    }

    #[test]
    fn classification_strings_round_trip() {
        for c in [
            Classification::NoMap,
            Classification::NonlinearOnly,
            Classification::LinearNotCp,
            Classification::LinearNotStochastic,
            Classification::LinearPositiveNotCp,
            Classification::Cptp,
            Classification::Stochastic,
            Classification::Underdetermined,
        ] {
            let s = c.to_string();
            assert_eq!(s.parse::<Classification>().unwrap(), c);
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(json, format!("\"{s}\""), "serde matches Display");
            let back: Classification = serde_json::from_str(&json).unwrap();
            assert_eq!(back, c);
        }
    }
}
