//! Circuit scenarios and the input-output relations they generate.
//!
//! A scenario is a single-interaction circuit: a fiducial joint state of the
//! system S1 and an environment E, an indexed family of preparations acting
//! before the interaction, and one global dynamics (S1, E) -> (S2, E')
//! applied after. Running every preparation branch and recording the system
//! marginals before and after the dynamics yields the *input-output
//! relation* — the raw material the analyzer classifies.
//!
//! Both a quantum and a classical flavour exist with the same shape, plus
//! bridges between them: embedding a classical scenario as a diagonal
//! quantum one, and dephasing a quantum scenario onto the computational
//! basis.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classical::{
    dephase_channel, dephase_state, embed_dist, embed_stochastic, JointDist, ProbDist, RealMatrix,
    StochasticMatrix,
};
use crate::error::{Error, Result};
use crate::mat::{c, ComplexMatrix, DimSpec};
use crate::quantum::{
    apply_on_factor, DensityOperator, Instrument, QuantumChannel, UnitaryOperator,
};
use crate::{DEFAULT_TOL, ZERO_MASS};

/// Identifies one preparation branch: setting `j`, plus the measurement
/// outcome `k` when the family is a measurement. Serialized as `"j"` or
/// `"j,k"`; ordered numerically by `(j, k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Label {
    pub j: u32,
    pub k: Option<u32>,
}

impl Label {
    pub fn setting(j: u32) -> Self {
        Label { j, k: None }
    }

    pub fn outcome(j: u32, k: u32) -> Self {
        Label { j, k: Some(k) }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.k {
            None => write!(f, "{}", self.j),
            Some(k) => write!(f, "{},{}", self.j, k),
        }
    }
}

impl FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parse = |t: &str| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| Error::UnknownLabel(format!("cannot parse label {s:?}")))
        };
        match s.split_once(',') {
            None => Ok(Label::setting(parse(s)?)),
            Some((j, k)) => Ok(Label::outcome(parse(j)?, parse(k)?)),
        }
    }
}

impl TryFrom<String> for Label {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Label> for String {
    fn from(l: Label) -> String {
        l.to_string()
    }
}

// ---------------------------------------------------------------------------
// Quantum scenarios
// ---------------------------------------------------------------------------

/// The indexed family of operations applied before the interaction.
#[derive(Debug, Clone)]
pub enum QuantumPreparation {
    /// Setting `j` applies a channel to the full (S1, E) composite.
    JointTransformation(BTreeMap<u32, QuantumChannel>),
    /// Setting `j` applies a channel to S1 alone.
    SystemTransformation(BTreeMap<u32, QuantumChannel>),
    /// Setting `j` selects a non-destructive instrument on S1; outcome `k`
    /// becomes part of the branch label. `post_select` keeps only the listed
    /// outcomes (all of them when `None`).
    SystemMeasurement {
        instruments: BTreeMap<u32, Instrument>,
        post_select: Option<Vec<u32>>,
    },
}

impl QuantumPreparation {
    fn is_empty(&self) -> bool {
        match self {
            QuantumPreparation::JointTransformation(m)
            | QuantumPreparation::SystemTransformation(m) => m.is_empty(),
            QuantumPreparation::SystemMeasurement { instruments, .. } => instruments.is_empty(),
        }
    }
}

/// A quantum single-interaction circuit.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ScenarioDto", into = "ScenarioDto")]
pub struct QuantumScenario {
    pub name: String,
    /// Fiducial joint state with dims `[d_s1, d_e]`.
    pub fiducial: DensityOperator,
    pub preparation: QuantumPreparation,
    /// Global dynamics `(S1, E) -> (S2, E')`, any CPTP map.
    pub interaction: QuantumChannel,
    /// Output system dimension; the interaction output splits as
    /// `d_s2 * d_e2`.
    pub d_s2: usize,
}

impl QuantumScenario {
    pub fn new(
        name: impl Into<String>,
        fiducial: DensityOperator,
        preparation: QuantumPreparation,
        interaction: QuantumChannel,
        d_s2: usize,
    ) -> Result<Self> {
        let sc = QuantumScenario {
            name: name.into(),
            fiducial,
            preparation,
            interaction,
            d_s2,
        };
        sc.validate()?;
        Ok(sc)
    }

    /// Convenience constructor for a unitary interaction.
    pub fn with_unitary(
        name: impl Into<String>,
        fiducial: DensityOperator,
        preparation: QuantumPreparation,
        u: &UnitaryOperator,
        d_s2: usize,
    ) -> Result<Self> {
        Self::new(
            name,
            fiducial,
            preparation,
            QuantumChannel::from_unitary(u),
            d_s2,
        )
    }

    fn validate(&self) -> Result<()> {
        if self.fiducial.dims().len() != 2 {
            return Err(Error::DimMismatch(
                "fiducial must have exactly the two factors (S1, E)".into(),
            ));
        }
        let (d_s1, d_e) = (self.d_s1(), self.d_e());
        if self.interaction.d_in() != d_s1 * d_e {
            return Err(Error::DimMismatch(format!(
                "interaction input {} != d_s1 {} * d_e {}",
                self.interaction.d_in(),
                d_s1,
                d_e
            )));
        }
        if self.d_s2 == 0 || self.interaction.d_out() % self.d_s2 != 0 {
            return Err(Error::DimMismatch(format!(
                "d_s2 {} does not split interaction output {}",
                self.d_s2,
                self.interaction.d_out()
            )));
        }
        if self.preparation.is_empty() {
            return Err(Error::InvalidParam("preparation family is empty".into()));
        }
        match &self.preparation {
            QuantumPreparation::JointTransformation(m) => {
                for (j, ch) in m {
                    if ch.d_in() != d_s1 * d_e || ch.d_out() != d_s1 * d_e {
                        return Err(Error::DimMismatch(format!(
                            "joint preparation {j} must act on S1*E = {}",
                            d_s1 * d_e
                        )));
                    }
                }
            }
            QuantumPreparation::SystemTransformation(m) => {
                for (j, ch) in m {
                    if ch.d_in() != d_s1 || ch.d_out() != d_s1 {
                        return Err(Error::DimMismatch(format!(
                            "system preparation {j} must act on S1 = {d_s1}"
                        )));
                    }
                }
            }
            QuantumPreparation::SystemMeasurement { instruments, .. } => {
                for (j, ins) in instruments {
                    if ins.d_in() != d_s1 || ins.elements()[0].d_out() != d_s1 {
                        return Err(Error::DimMismatch(format!(
                            "instrument {j} must act on S1 = {d_s1}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn d_s1(&self) -> usize {
        self.fiducial.dims().0[0]
    }

    pub fn d_e(&self) -> usize {
        self.fiducial.dims().0[1]
    }

    pub fn d_e2(&self) -> usize {
        self.interaction.d_out() / self.d_s2
    }

    /// All realized branches, ordered by label: the branch weight and the
    /// joint (S1, E) state entering the interaction.
    pub fn realize_joint_states(&self) -> Result<Vec<(Label, f64, DensityOperator)>> {
        let dims = self.fiducial.dims().clone();
        let mut out = Vec::new();
        match &self.preparation {
            QuantumPreparation::JointTransformation(m) => {
                for (&j, ch) in m {
                    let mat = ch.apply_matrix(self.fiducial.matrix()).hermitize();
                    out.push((
                        Label::setting(j),
                        1.0,
                        DensityOperator::new(mat, dims.clone(), 1e-7)?,
                    ));
                }
            }
            QuantumPreparation::SystemTransformation(m) => {
                for (&j, ch) in m {
                    let (mat, _) = apply_on_factor(self.fiducial.matrix(), &dims, 0, ch)?;
                    out.push((
                        Label::setting(j),
                        1.0,
                        DensityOperator::new(mat.hermitize(), dims.clone(), 1e-7)?,
                    ));
                }
            }
            QuantumPreparation::SystemMeasurement {
                instruments,
                post_select,
            } => {
                for (&j, ins) in instruments {
                    for k in 0..ins.len() {
                        let k = k as u32;
                        if let Some(keep) = post_select {
                            if !keep.contains(&k) {
                                continue;
                            }
                        }
                        let element = &ins.elements()[k as usize];
                        let (mat, _) =
                            apply_on_factor(self.fiducial.matrix(), &dims, 0, element)?;
                        let p = mat.trace().re;
                        if p < ZERO_MASS {
                            return Err(Error::ZeroProbability(format!(
                                "branch ({j},{k}) kept with probability {p:.3e}"
                            )));
                        }
                        out.push((
                            Label::outcome(j, k),
                            p,
                            DensityOperator::new(
                                mat.hermitize().scale(c(1.0 / p, 0.0)),
                                dims.clone(),
                                1e-7,
                            )?,
                        ));
                    }
                }
            }
        }
        out.sort_by_key(|(l, _, _)| *l);
        Ok(out)
    }

    /// Push a realized joint state through the interaction; the result has
    /// dims `[d_s2, d_e2]`.
    pub fn evolve_joint(&self, joint: &DensityOperator) -> Result<DensityOperator> {
        let mat = self.interaction.apply_matrix(joint.matrix()).hermitize();
        DensityOperator::new(mat, DimSpec(vec![self.d_s2, self.d_e2()]), 1e-7)
    }

    /// The input-output relation: system marginals before and after the
    /// interaction, per branch.
    pub fn generate_relation(&self) -> Result<QuantumRelation> {
        let mut pairs = Vec::new();
        for (label, weight, joint) in self.realize_joint_states()? {
            let input = joint.reduce(&[0])?;
            let output = self.evolve_joint(&joint)?.reduce(&[0])?;
            pairs.push(QuantumPair {
                label,
                weight,
                input,
                output,
            });
        }
        QuantumRelation::new(pairs)
    }

    /// Environment marginal of each realized branch.
    pub fn environment_marginals(&self) -> Result<Vec<(Label, DensityOperator)>> {
        self.realize_joint_states()?
            .into_iter()
            .map(|(l, _, joint)| Ok((l, joint.reduce(&[1])?)))
            .collect()
    }
}

/// One branch of a quantum input-output relation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantumPair {
    pub label: Label,
    pub weight: f64,
    pub input: DensityOperator,
    pub output: DensityOperator,
}

/// A quantum input-output relation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "QuantumRelationDto", into = "QuantumRelationDto")]
pub struct QuantumRelation {
    d_in: usize,
    d_out: usize,
    pairs: Vec<QuantumPair>,
}

#[derive(Serialize, Deserialize)]
struct QuantumRelationDto {
    pairs: Vec<QuantumPair>,
}

impl TryFrom<QuantumRelationDto> for QuantumRelation {
    type Error = Error;
    fn try_from(dto: QuantumRelationDto) -> Result<Self> {
        QuantumRelation::new(dto.pairs)
    }
}

impl From<QuantumRelation> for QuantumRelationDto {
    fn from(r: QuantumRelation) -> QuantumRelationDto {
        QuantumRelationDto { pairs: r.pairs }
    }
}

impl QuantumRelation {
    pub fn new(pairs: Vec<QuantumPair>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidParam("relation needs at least one pair".into()));
        }
        let d_in = pairs[0].input.dim_total();
        let d_out = pairs[0].output.dim_total();
        for p in &pairs {
            if p.input.dim_total() != d_in || p.output.dim_total() != d_out {
                return Err(Error::DimMismatch("relation pairs must share dims".into()));
            }
            if !(p.weight > 0.0 && p.weight <= 1.0 + 1e-12) {
                return Err(Error::InvariantViolation(format!(
                    "branch weight {} outside (0, 1]",
                    p.weight
                )));
            }
        }
        Ok(QuantumRelation { d_in, d_out, pairs })
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn pairs(&self) -> &[QuantumPair] {
        &self.pairs
    }
}

// ---------------------------------------------------------------------------
// Classical scenarios
// ---------------------------------------------------------------------------

/// A classical non-destructive measurement: sub-stochastic outcome blocks
/// whose sum is column-stochastic.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "Vec<RealMatrix>", into = "Vec<RealMatrix>")]
pub struct ClassicalInstrument {
    elements: Vec<RealMatrix>,
}

impl TryFrom<Vec<RealMatrix>> for ClassicalInstrument {
    type Error = Error;
    fn try_from(elements: Vec<RealMatrix>) -> Result<Self> {
        ClassicalInstrument::new(elements, DEFAULT_TOL)
    }
}

impl From<ClassicalInstrument> for Vec<RealMatrix> {
    fn from(i: ClassicalInstrument) -> Vec<RealMatrix> {
        i.elements
    }
}

impl ClassicalInstrument {
    pub fn new(elements: Vec<RealMatrix>, tol: f64) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidParam("instrument needs at least one element".into()));
        }
        let (rows, cols) = (elements[0].rows(), elements[0].cols());
        let mut total = RealMatrix::zeros(rows, cols);
        for e in &elements {
            if e.rows() != rows || e.cols() != cols {
                return Err(Error::DimMismatch("instrument elements must share shape".into()));
            }
            if e.min_entry() < -tol.max(1e-12) {
                return Err(Error::InvariantViolation(
                    "instrument element has a negative entry".into(),
                ));
            }
            for r in 0..rows {
                for col in 0..cols {
                    total.set(r, col, total.get(r, col) + e.get(r, col));
                }
            }
        }
        StochasticMatrix::new(total, tol)?;
        Ok(ClassicalInstrument { elements })
    }

    /// Outcome-`k` Lüders analogue: read the value and pass it on unchanged.
    pub fn readout(d: usize) -> Self {
        let mut elements = Vec::with_capacity(d);
        for k in 0..d {
            let mut m = RealMatrix::zeros(d, d);
            m.set(k, k, 1.0);
            elements.push(m);
        }
        ClassicalInstrument { elements }
    }

    pub fn elements(&self) -> &[RealMatrix] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.elements[0].cols()
    }
}

/// Classical mirror of [`QuantumPreparation`].
#[derive(Debug, Clone)]
pub enum ClassicalPreparation {
    JointTransformation(BTreeMap<u32, StochasticMatrix>),
    SystemTransformation(BTreeMap<u32, StochasticMatrix>),
    SystemMeasurement {
        instruments: BTreeMap<u32, ClassicalInstrument>,
        post_select: Option<Vec<u32>>,
    },
}

impl ClassicalPreparation {
    fn is_empty(&self) -> bool {
        match self {
            ClassicalPreparation::JointTransformation(m)
            | ClassicalPreparation::SystemTransformation(m) => m.is_empty(),
            ClassicalPreparation::SystemMeasurement { instruments, .. } => instruments.is_empty(),
        }
    }
}

/// A classical single-interaction circuit.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ScenarioDto", into = "ScenarioDto")]
pub struct ClassicalScenario {
    pub name: String,
    /// Fiducial joint distribution with dims `[d_s1, d_e]`.
    pub fiducial: JointDist,
    pub preparation: ClassicalPreparation,
    /// Global dynamics `(S1, E) -> (S2, E')` as a column-stochastic matrix.
    pub interaction: StochasticMatrix,
    pub d_s2: usize,
}

impl ClassicalScenario {
    pub fn new(
        name: impl Into<String>,
        fiducial: JointDist,
        preparation: ClassicalPreparation,
        interaction: StochasticMatrix,
        d_s2: usize,
    ) -> Result<Self> {
        let sc = ClassicalScenario {
            name: name.into(),
            fiducial,
            preparation,
            interaction,
            d_s2,
        };
        sc.validate()?;
        Ok(sc)
    }

    fn validate(&self) -> Result<()> {
        if self.fiducial.dims().len() != 2 {
            return Err(Error::DimMismatch(
                "fiducial must have exactly the two factors (S1, E)".into(),
            ));
        }
        let (d_s1, d_e) = (self.d_s1(), self.d_e());
        if self.interaction.d_in() != d_s1 * d_e {
            return Err(Error::DimMismatch(format!(
                "interaction input {} != d_s1 {} * d_e {}",
                self.interaction.d_in(),
                d_s1,
                d_e
            )));
        }
        if self.d_s2 == 0 || self.interaction.d_out() % self.d_s2 != 0 {
            return Err(Error::DimMismatch(format!(
                "d_s2 {} does not split interaction output {}",
                self.d_s2,
                self.interaction.d_out()
            )));
        }
        if self.preparation.is_empty() {
            return Err(Error::InvalidParam("preparation family is empty".into()));
        }
        match &self.preparation {
            ClassicalPreparation::JointTransformation(m) => {
                for (j, t) in m {
                    if t.d_in() != d_s1 * d_e || t.d_out() != d_s1 * d_e {
                        return Err(Error::DimMismatch(format!(
                            "joint preparation {j} must act on S1*E = {}",
                            d_s1 * d_e
                        )));
                    }
                }
            }
            ClassicalPreparation::SystemTransformation(m) => {
                for (j, t) in m {
                    if t.d_in() != d_s1 || t.d_out() != d_s1 {
                        return Err(Error::DimMismatch(format!(
                            "system preparation {j} must act on S1 = {d_s1}"
                        )));
                    }
                }
            }
            ClassicalPreparation::SystemMeasurement { instruments, .. } => {
                for (j, ins) in instruments {
                    if ins.dim() != d_s1 || ins.elements()[0].rows() != d_s1 {
                        return Err(Error::DimMismatch(format!(
                            "instrument {j} must act on S1 = {d_s1}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn d_s1(&self) -> usize {
        self.fiducial.dims().0[0]
    }

    pub fn d_e(&self) -> usize {
        self.fiducial.dims().0[1]
    }

    pub fn d_e2(&self) -> usize {
        self.interaction.d_out() / self.d_s2
    }

    pub fn realize_joint_states(&self) -> Result<Vec<(Label, f64, JointDist)>> {
        let dims = self.fiducial.dims().clone();
        let (d_s1, d_e) = (self.d_s1(), self.d_e());
        let lift_system = |m: &RealMatrix| m.tensor_with(&RealMatrix::identity(d_e));
        let mut out = Vec::new();
        match &self.preparation {
            ClassicalPreparation::JointTransformation(m) => {
                for (&j, t) in m {
                    let p = t.matrix().apply(self.fiducial.probabilities());
                    out.push((
                        Label::setting(j),
                        1.0,
                        JointDist::new(p, dims.clone(), 1e-9)?,
                    ));
                }
            }
            ClassicalPreparation::SystemTransformation(m) => {
                for (&j, t) in m {
                    let p = lift_system(t.matrix()).apply(self.fiducial.probabilities());
                    out.push((
                        Label::setting(j),
                        1.0,
                        JointDist::new(p, dims.clone(), 1e-9)?,
                    ));
                }
            }
            ClassicalPreparation::SystemMeasurement {
                instruments,
                post_select,
            } => {
                for (&j, ins) in instruments {
                    for (k, element) in ins.elements().iter().enumerate() {
                        let k = k as u32;
                        if let Some(keep) = post_select {
                            if !keep.contains(&k) {
                                continue;
                            }
                        }
                        let raw = lift_system(element).apply(self.fiducial.probabilities());
                        let mass: f64 = raw.iter().sum();
                        if mass < ZERO_MASS {
                            return Err(Error::ZeroProbability(format!(
                                "branch ({j},{k}) kept with probability {mass:.3e}"
                            )));
                        }
                        let p = raw.into_iter().map(|v| v / mass).collect();
                        out.push((
                            Label::outcome(j, k),
                            mass,
                            JointDist::new(p, dims.clone(), 1e-9)?,
                        ));
                    }
                }
            }
        }
        out.sort_by_key(|(l, _, _)| *l);
        let _ = d_s1;
        Ok(out)
    }

    pub fn evolve_joint(&self, joint: &JointDist) -> Result<JointDist> {
        joint.evolve(&self.interaction, DimSpec(vec![self.d_s2, self.d_e2()]))
    }

    pub fn generate_relation(&self) -> Result<ClassicalRelation> {
        let mut pairs = Vec::new();
        for (label, weight, joint) in self.realize_joint_states()? {
            let input = joint.marginal(&[0])?.flatten();
            let output = self.evolve_joint(&joint)?.marginal(&[0])?.flatten();
            pairs.push(ClassicalPair {
                label,
                weight,
                input,
                output,
            });
        }
        ClassicalRelation::new(pairs)
    }

    pub fn environment_marginals(&self) -> Result<Vec<(Label, ProbDist)>> {
        self.realize_joint_states()?
            .into_iter()
            .map(|(l, _, joint)| Ok((l, joint.marginal(&[1])?.flatten())))
            .collect()
    }
}

/// One branch of a classical input-output relation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassicalPair {
    pub label: Label,
    pub weight: f64,
    pub input: ProbDist,
    pub output: ProbDist,
}

/// A classical input-output relation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ClassicalRelationDto", into = "ClassicalRelationDto")]
pub struct ClassicalRelation {
    d_in: usize,
    d_out: usize,
    pairs: Vec<ClassicalPair>,
}

#[derive(Serialize, Deserialize)]
struct ClassicalRelationDto {
    pairs: Vec<ClassicalPair>,
}

impl TryFrom<ClassicalRelationDto> for ClassicalRelation {
    type Error = Error;
    fn try_from(dto: ClassicalRelationDto) -> Result<Self> {
        ClassicalRelation::new(dto.pairs)
    }
}

impl From<ClassicalRelation> for ClassicalRelationDto {
    fn from(r: ClassicalRelation) -> ClassicalRelationDto {
        ClassicalRelationDto { pairs: r.pairs }
    }
}

impl ClassicalRelation {
    pub fn new(pairs: Vec<ClassicalPair>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidParam("relation needs at least one pair".into()));
        }
        let d_in = pairs[0].input.len();
        let d_out = pairs[0].output.len();
        for p in &pairs {
            if p.input.len() != d_in || p.output.len() != d_out {
                return Err(Error::DimMismatch("relation pairs must share dims".into()));
            }
            if !(p.weight > 0.0 && p.weight <= 1.0 + 1e-12) {
                return Err(Error::InvariantViolation(format!(
                    "branch weight {} outside (0, 1]",
                    p.weight
                )));
            }
        }
        Ok(ClassicalRelation { d_in, d_out, pairs })
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn pairs(&self) -> &[ClassicalPair] {
        &self.pairs
    }
}

// ---------------------------------------------------------------------------
// Unified wrappers
// ---------------------------------------------------------------------------

/// Either flavour of scenario; the CLI's ingestion type.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scenario {
    Quantum(QuantumScenario),
    Classical(ClassicalScenario),
}

impl Scenario {
    pub fn name(&self) -> &str {
        match self {
            Scenario::Quantum(q) => &q.name,
            Scenario::Classical(cl) => &cl.name,
        }
    }

    pub fn generate_relation(&self) -> Result<Relation> {
        Ok(match self {
            Scenario::Quantum(q) => Relation::Quantum(q.generate_relation()?),
            Scenario::Classical(cl) => Relation::Classical(cl.generate_relation()?),
        })
    }
}

/// Either flavour of input-output relation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Relation {
    Quantum(QuantumRelation),
    Classical(ClassicalRelation),
}

impl Relation {
    pub fn len(&self) -> usize {
        match self {
            Relation::Quantum(r) => r.pairs().len(),
            Relation::Classical(r) => r.pairs().len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

// ---------------------------------------------------------------------------
// Bridges between the two pictures
// ---------------------------------------------------------------------------

/// Embed a sub-stochastic block as a CP (not necessarily TP) map.
fn embed_substochastic(m: &RealMatrix) -> Result<QuantumChannel> {
    let mut kraus = Vec::new();
    for s2 in 0..m.rows() {
        for s1 in 0..m.cols() {
            let v = m.get(s2, s1);
            if v <= 0.0 {
                continue;
            }
            let mut k = ComplexMatrix::zeros(m.rows(), m.cols());
            k.set(s2, s1, c(v.sqrt(), 0.0));
            kraus.push(k);
        }
    }
    if kraus.is_empty() {
        kraus.push(ComplexMatrix::zeros(m.rows(), m.cols()));
    }
    QuantumChannel::from_kraus(&kraus)
}

/// Lift a classical scenario to a diagonal quantum one: distributions become
/// diagonal density matrices and stochastic maps become basis-incoherent
/// channels. Relations of the lifted scenario dephase back onto the original.
pub fn embed_classical_scenario(sc: &ClassicalScenario) -> Result<QuantumScenario> {
    let fid_mat = embed_dist(&sc.fiducial.flatten());
    let fiducial = DensityOperator::new(fid_mat, sc.fiducial.dims().clone(), 1e-9)?;
    let preparation = match &sc.preparation {
        ClassicalPreparation::JointTransformation(m) => QuantumPreparation::JointTransformation(
            m.iter()
                .map(|(&j, t)| (j, embed_stochastic(t)))
                .collect(),
        ),
        ClassicalPreparation::SystemTransformation(m) => QuantumPreparation::SystemTransformation(
            m.iter()
                .map(|(&j, t)| (j, embed_stochastic(t)))
                .collect(),
        ),
        ClassicalPreparation::SystemMeasurement {
            instruments,
            post_select,
        } => {
            let mut lifted = BTreeMap::new();
            for (&j, ins) in instruments {
                let elements = ins
                    .elements()
                    .iter()
                    .map(embed_substochastic)
                    .collect::<Result<Vec<_>>>()?;
                lifted.insert(j, Instrument::new(elements, 1e-9)?);
            }
            QuantumPreparation::SystemMeasurement {
                instruments: lifted,
                post_select: post_select.clone(),
            }
        }
    };
    QuantumScenario::new(
        sc.name.clone(),
        fiducial,
        preparation,
        embed_stochastic(&sc.interaction),
        sc.d_s2,
    )
}

/// Dephase a quantum scenario onto the computational basis, yielding the
/// classical scenario whose relation is the entrywise-dephased original.
pub fn dephase_quantum_scenario(sc: &QuantumScenario) -> Result<ClassicalScenario> {
    let fiducial = JointDist::new(
        dephase_state(sc.fiducial.matrix())?.as_slice().to_vec(),
        sc.fiducial.dims().clone(),
        1e-9,
    )?;
    let dephase_to_stochastic =
        |ch: &QuantumChannel| StochasticMatrix::new(dephase_channel(ch), 1e-7);
    let preparation = match &sc.preparation {
        QuantumPreparation::JointTransformation(m) => ClassicalPreparation::JointTransformation(
            m.iter()
                .map(|(&j, ch)| Ok((j, dephase_to_stochastic(ch)?)))
                .collect::<Result<_>>()?,
        ),
        QuantumPreparation::SystemTransformation(m) => ClassicalPreparation::SystemTransformation(
            m.iter()
                .map(|(&j, ch)| Ok((j, dephase_to_stochastic(ch)?)))
                .collect::<Result<_>>()?,
        ),
        QuantumPreparation::SystemMeasurement {
            instruments,
            post_select,
        } => {
            let mut dephased = BTreeMap::new();
            for (&j, ins) in instruments {
                let elements: Vec<RealMatrix> =
                    ins.elements().iter().map(dephase_channel).collect();
                dephased.insert(j, ClassicalInstrument::new(elements, 1e-7)?);
            }
            ClassicalPreparation::SystemMeasurement {
                instruments: dephased,
                post_select: post_select.clone(),
            }
        }
    };
    ClassicalScenario::new(
        sc.name.clone(),
        fiducial,
        preparation,
        StochasticMatrix::new(dephase_channel(&sc.interaction), 1e-7)?,
        sc.d_s2,
    )
}

// ---------------------------------------------------------------------------
// JSON schema
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum QuantumInteractionDto {
    Unitary { unitary: ComplexMatrix },
    Channel(QuantumChannel),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ClassicalInteractionDto {
    Permutation { permutation: Vec<usize> },
    Matrix(StochasticMatrix),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
enum QuantumPreparationDto {
    JointTransformation {
        elements: BTreeMap<String, QuantumChannel>,
    },
    SystemTransformation {
        elements: BTreeMap<String, QuantumChannel>,
    },
    SystemMeasurement {
        elements: BTreeMap<String, Instrument>,
        #[serde(skip_serializing_if = "Option::is_none")]
        post_select: Option<Vec<u32>>,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
enum ClassicalPreparationDto {
    JointTransformation {
        elements: BTreeMap<String, StochasticMatrix>,
    },
    SystemTransformation {
        elements: BTreeMap<String, StochasticMatrix>,
    },
    SystemMeasurement {
        elements: BTreeMap<String, ClassicalInstrument>,
        #[serde(skip_serializing_if = "Option::is_none")]
        post_select: Option<Vec<u32>>,
    },
}

/// Serialized scenario: `kind`, `name`, `dims` = `[d_s1, d_e, d_s2, d_e2]`,
/// `fiducial`, `preparation` and `interaction`.
#[derive(Serialize, Deserialize)]
struct ScenarioDto {
    kind: String,
    name: String,
    dims: Vec<usize>,
    fiducial: serde_json::Value,
    preparation: serde_json::Value,
    interaction: serde_json::Value,
}

fn parse_setting_keys<T>(elements: BTreeMap<String, T>) -> Result<BTreeMap<u32, T>> {
    let mut out = BTreeMap::new();
    for (key, v) in elements {
        let label: Label = key.parse()?;
        if label.k.is_some() {
            return Err(Error::UnknownLabel(format!(
                "preparation element keys carry only the setting index, got {key:?}"
            )));
        }
        out.insert(label.j, v);
    }
    Ok(out)
}

fn format_setting_keys<T>(elements: &BTreeMap<u32, T>) -> BTreeMap<String, T>
where
    T: Clone,
{
    elements
        .iter()
        .map(|(j, v)| (j.to_string(), v.clone()))
        .collect()
}

impl TryFrom<ScenarioDto> for QuantumScenario {
    type Error = Error;
    fn try_from(dto: ScenarioDto) -> Result<Self> {
        if dto.kind != "quantum" {
            return Err(Error::InvalidParam(format!(
                "expected kind \"quantum\", got {:?}",
                dto.kind
            )));
        }
        if dto.dims.len() != 4 {
            return Err(Error::DimMismatch(
                "dims must be [d_s1, d_e, d_s2, d_e2]".into(),
            ));
        }
        let fiducial: DensityOperator =
            serde_json::from_value(dto.fiducial).map_err(|e| field_error("fiducial", e))?;
        let interaction = match serde_json::from_value::<QuantumInteractionDto>(dto.interaction)
            .map_err(|e| field_error("interaction", e))?
        {
            QuantumInteractionDto::Unitary { unitary } => {
                QuantumChannel::from_unitary(&UnitaryOperator::new(unitary, 1e-8)?)
            }
            QuantumInteractionDto::Channel(ch) => ch,
        };
        let preparation = match serde_json::from_value::<QuantumPreparationDto>(dto.preparation)
            .map_err(|e| field_error("preparation", e))?
        {
            QuantumPreparationDto::JointTransformation { elements } => {
                QuantumPreparation::JointTransformation(parse_setting_keys(elements)?)
            }
            QuantumPreparationDto::SystemTransformation { elements } => {
                QuantumPreparation::SystemTransformation(parse_setting_keys(elements)?)
            }
            QuantumPreparationDto::SystemMeasurement {
                elements,
                post_select,
            } => QuantumPreparation::SystemMeasurement {
                instruments: parse_setting_keys(elements)?,
                post_select,
            },
        };
        let sc = QuantumScenario::new(dto.name, fiducial, preparation, interaction, dto.dims[2])?;
        if sc.d_s1() != dto.dims[0] || sc.d_e() != dto.dims[1] || sc.d_e2() != dto.dims[3] {
            return Err(Error::DimMismatch(format!(
                "declared dims {:?} disagree with fiducial/interaction",
                dto.dims
            )));
        }
        Ok(sc)
    }
}

impl From<QuantumScenario> for ScenarioDto {
    fn from(sc: QuantumScenario) -> ScenarioDto {
        let preparation = match &sc.preparation {
            QuantumPreparation::JointTransformation(m) => {
                QuantumPreparationDto::JointTransformation {
                    elements: format_setting_keys(m),
                }
            }
            QuantumPreparation::SystemTransformation(m) => {
                QuantumPreparationDto::SystemTransformation {
                    elements: format_setting_keys(m),
                }
            }
            QuantumPreparation::SystemMeasurement {
                instruments,
                post_select,
            } => QuantumPreparationDto::SystemMeasurement {
                elements: format_setting_keys(instruments),
                post_select: post_select.clone(),
            },
        };
        ScenarioDto {
            kind: "quantum".into(),
            name: sc.name.clone(),
            dims: vec![sc.d_s1(), sc.d_e(), sc.d_s2, sc.d_e2()],
            fiducial: serde_json::to_value(&sc.fiducial).expect("state serializes"),
            preparation: serde_json::to_value(&preparation).expect("preparation serializes"),
            interaction: serde_json::to_value(QuantumInteractionDto::Channel(sc.interaction))
                .expect("channel serializes"),
        }
    }
}

impl TryFrom<ScenarioDto> for ClassicalScenario {
    type Error = Error;
    fn try_from(dto: ScenarioDto) -> Result<Self> {
        if dto.kind != "classical" {
            return Err(Error::InvalidParam(format!(
                "expected kind \"classical\", got {:?}",
                dto.kind
            )));
        }
        if dto.dims.len() != 4 {
            return Err(Error::DimMismatch(
                "dims must be [d_s1, d_e, d_s2, d_e2]".into(),
            ));
        }
        let fiducial: JointDist =
            serde_json::from_value(dto.fiducial).map_err(|e| field_error("fiducial", e))?;
        let interaction = match serde_json::from_value::<ClassicalInteractionDto>(dto.interaction)
            .map_err(|e| field_error("interaction", e))?
        {
            ClassicalInteractionDto::Permutation { permutation } => {
                StochasticMatrix::from_permutation(&permutation)?
            }
            ClassicalInteractionDto::Matrix(m) => m,
        };
        let preparation = match serde_json::from_value::<ClassicalPreparationDto>(dto.preparation)
            .map_err(|e| field_error("preparation", e))?
        {
            ClassicalPreparationDto::JointTransformation { elements } => {
                ClassicalPreparation::JointTransformation(parse_setting_keys(elements)?)
            }
            ClassicalPreparationDto::SystemTransformation { elements } => {
                ClassicalPreparation::SystemTransformation(parse_setting_keys(elements)?)
            }
            ClassicalPreparationDto::SystemMeasurement {
                elements,
                post_select,
            } => ClassicalPreparation::SystemMeasurement {
                instruments: parse_setting_keys(elements)?,
                post_select,
            },
        };
        let sc = ClassicalScenario::new(dto.name, fiducial, preparation, interaction, dto.dims[2])?;
        if sc.d_s1() != dto.dims[0] || sc.d_e() != dto.dims[1] || sc.d_e2() != dto.dims[3] {
            return Err(Error::DimMismatch(format!(
                "declared dims {:?} disagree with fiducial/interaction",
                dto.dims
            )));
        }
        Ok(sc)
    }
}

impl From<ClassicalScenario> for ScenarioDto {
    fn from(sc: ClassicalScenario) -> ScenarioDto {
        let preparation = match &sc.preparation {
            ClassicalPreparation::JointTransformation(m) => {
                ClassicalPreparationDto::JointTransformation {
                    elements: format_setting_keys(m),
                }
            }
            ClassicalPreparation::SystemTransformation(m) => {
                ClassicalPreparationDto::SystemTransformation {
                    elements: format_setting_keys(m),
                }
            }
            ClassicalPreparation::SystemMeasurement {
                instruments,
                post_select,
            } => ClassicalPreparationDto::SystemMeasurement {
                elements: format_setting_keys(instruments),
                post_select: post_select.clone(),
            },
        };
        ScenarioDto {
            kind: "classical".into(),
            name: sc.name.clone(),
            dims: vec![sc.d_s1(), sc.d_e(), sc.d_s2, sc.d_e2()],
            fiducial: serde_json::to_value(&sc.fiducial).expect("joint serializes"),
            preparation: serde_json::to_value(&preparation).expect("preparation serializes"),
            interaction: serde_json::to_value(ClassicalInteractionDto::Matrix(sc.interaction))
                .expect("matrix serializes"),
        }
    }
}

/// Wrap a `serde_json` failure on a named sub-object. Validation failures
/// from our own constructors funnel through serde's custom error with their
/// message intact; recognize those by prefix and keep their invariant
/// character. Anything else is a shape problem. Public so front-ends loading
/// their own JSON payloads classify failures the same way the scenario
/// loader does.
pub fn field_error(field: &str, e: serde_json::Error) -> Error {
    const DOMAIN_PREFIXES: &[&str] = &[
        "dimension mismatch",
        "matrix is not Hermitian",
        "invariant violation",
        "zero-probability event",
        "unknown label",
        "rank-deficient",
        "invalid parameter",
        "no convergence",
    ];
    let msg = e.to_string();
    if DOMAIN_PREFIXES.iter().any(|p| msg.starts_with(p)) {
        // Re-wrapping adds its own "invariant violation" prefix; drop the
        // inner one rather than stutter.
        let inner = msg.strip_prefix("invariant violation: ").unwrap_or(&msg);
        Error::InvariantViolation(format!("{field}: {inner}"))
    } else {
        Error::Schema(format!("{field}: {msg}"))
    }
}

/// Why a scenario failed to load from JSON text, separated by stage so
/// callers can report (and exit) differently for each.
#[derive(Debug, thiserror::Error)]
pub enum ScenarioLoadError {
    /// The text is not valid JSON at all.
    #[error("JSON syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    /// Valid JSON that does not have the shape of a scenario.
    #[error("schema error: {message}")]
    Schema { message: String },
    /// Structurally a scenario, but a domain invariant fails; the message
    /// names the offending field.
    #[error(transparent)]
    Domain(Error),
}

/// Parse a scenario from JSON text, reporting syntax, schema and domain
/// failures distinctly.
pub fn scenario_from_json(text: &str) -> std::result::Result<Scenario, ScenarioLoadError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ScenarioLoadError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
    let dto: ScenarioDto = serde_json::from_value(value).map_err(|e| ScenarioLoadError::Schema {
        message: e.to_string(),
    })?;
    let built = match dto.kind.as_str() {
        "quantum" => QuantumScenario::try_from(dto).map(Scenario::Quantum),
        "classical" => ClassicalScenario::try_from(dto).map(Scenario::Classical),
        other => {
            return Err(ScenarioLoadError::Schema {
                message: format!("unknown scenario kind {other:?} (expected \"quantum\" or \"classical\")"),
            })
        }
    };
    built.map_err(|e| match e {
        Error::Schema(message) => ScenarioLoadError::Schema { message },
        domain => ScenarioLoadError::Domain(domain),
    })
}
