//! Classical probability: distributions, column-stochastic matrices, joint
//! distributions and their conditionals, plus the dephasing bridges that
//! connect the classical picture to the quantum one.
//!
//! Conventions match the quantum side: joint outcomes flatten row-major with
//! the left factor slowest, stochastic matrices act on column vectors and are
//! *column*-stochastic (`M[s2, s1] = P(s2 | s1)`), and conditionals on events
//! of probability below the zero-mass threshold are represented as `None`
//! rather than silently renormalized.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::{c, ComplexMatrix, DimSpec};
use crate::quantum::QuantumChannel;
use crate::{DEFAULT_TOL, ZERO_MASS};

/// A dense real matrix (row-major). The workhorse for classical maps and for
/// real-valued fit results that need not be stochastic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for RealMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        RealMatrix::from_rows(rows)
    }
}

impl From<RealMatrix> for Vec<Vec<f64>> {
    fn from(m: RealMatrix) -> Vec<Vec<f64>> {
        m.to_rows()
    }
}

impl RealMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RealMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d, d);
        for i in 0..d {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::InvalidParam("matrix needs at least one entry".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimMismatch("ragged rows".into()));
        }
        let n_rows = rows.len();
        Ok(RealMatrix {
            rows: n_rows,
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows)
            .map(|r| self.data[r * self.cols..(r + 1) * self.cols].to_vec())
            .collect()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, col: usize) -> f64 {
        self.data[r * self.cols + col]
    }

    pub fn set(&mut self, r: usize, col: usize, v: f64) {
        self.data[r * self.cols + col] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, j)).collect()
    }

    pub fn matmul(&self, other: &RealMatrix) -> RealMatrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = RealMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let v = self.get(r, k);
                if v == 0.0 {
                    continue;
                }
                for col in 0..other.cols {
                    out.data[r * out.cols + col] += v * other.get(k, col);
                }
            }
        }
        out
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "apply shape mismatch");
        (0..self.rows)
            .map(|r| (0..self.cols).map(|k| self.get(r, k) * v[k]).sum())
            .collect()
    }

    pub fn transpose(&self) -> RealMatrix {
        let mut out = RealMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for col in 0..self.cols {
                out.set(col, r, self.get(r, col));
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &RealMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Worst deviation of any column sum from 1.
    pub fn column_sum_deviation(&self) -> f64 {
        (0..self.cols)
            .map(|j| ((0..self.rows).map(|r| self.get(r, j)).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Tensor product with the usual left-factor-slower flattening.
    pub fn tensor_with(&self, other: &RealMatrix) -> RealMatrix {
        let mut out = RealMatrix::zeros(self.rows * other.rows, self.cols * other.cols);
        for r1 in 0..self.rows {
            for c1 in 0..self.cols {
                let v = self.get(r1, c1);
                if v == 0.0 {
                    continue;
                }
                for r2 in 0..other.rows {
                    for c2 in 0..other.cols {
                        out.set(
                            r1 * other.rows + r2,
                            c1 * other.cols + c2,
                            v * other.get(r2, c2),
                        );
                    }
                }
            }
        }
        out
    }
}

/// A probability distribution over a finite outcome set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbDist(Vec<f64>);

impl TryFrom<Vec<f64>> for ProbDist {
    type Error = Error;
    fn try_from(p: Vec<f64>) -> Result<Self> {
        ProbDist::new(p, DEFAULT_TOL)
    }
}

impl From<ProbDist> for Vec<f64> {
    fn from(p: ProbDist) -> Vec<f64> {
        p.0
    }
}

impl ProbDist {
    pub fn new(p: Vec<f64>, tol: f64) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidParam("empty distribution".into()));
        }
        if let Some(v) = p.iter().find(|&&v| v < -tol.max(1e-12) || !v.is_finite()) {
            return Err(Error::InvariantViolation(format!(
                "negative or non-finite probability {v}"
            )));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > tol.max(1e-9) {
            return Err(Error::InvariantViolation(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(ProbDist(p.into_iter().map(|v| v.max(0.0)).collect()))
    }

    pub fn point(d: usize, i: usize) -> Self {
        let mut p = vec![0.0; d];
        p[i] = 1.0;
        ProbDist(p)
    }

    pub fn uniform(d: usize) -> Self {
        ProbDist(vec![1.0 / d as f64; d])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn tensor_with(&self, other: &ProbDist) -> ProbDist {
        let mut p = Vec::with_capacity(self.len() * other.len());
        for &a in &self.0 {
            for &b in &other.0 {
                p.push(a * b);
            }
        }
        ProbDist(p)
    }
}

/// Total variation distance `(1/2) sum_i |p_i - q_i|`.
pub fn total_variation(a: &ProbDist, b: &ProbDist) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch("TV distance needs equal lengths".into()));
    }
    Ok(a.0
        .iter()
        .zip(b.0.iter())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / 2.0)
}

/// A column-stochastic matrix: `M[s2, s1] = P(s2 | s1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RealMatrix", into = "RealMatrix")]
pub struct StochasticMatrix {
    m: RealMatrix,
}

impl TryFrom<RealMatrix> for StochasticMatrix {
    type Error = Error;
    fn try_from(m: RealMatrix) -> Result<Self> {
        StochasticMatrix::new(m, DEFAULT_TOL)
    }
}

impl From<StochasticMatrix> for RealMatrix {
    fn from(s: StochasticMatrix) -> RealMatrix {
        s.m
    }
}

impl StochasticMatrix {
    pub fn new(m: RealMatrix, tol: f64) -> Result<Self> {
        let min = m.min_entry();
        if min < -tol.max(1e-12) {
            return Err(Error::InvariantViolation(format!(
                "stochastic matrix has negative entry {min}"
            )));
        }
        let dev = m.column_sum_deviation();
        if dev > tol.max(1e-9) {
            return Err(Error::InvariantViolation(format!(
                "column sums deviate from 1 by {dev:.3e}"
            )));
        }
        Ok(StochasticMatrix { m })
    }

    pub fn identity(d: usize) -> Self {
        StochasticMatrix {
            m: RealMatrix::identity(d),
        }
    }

    /// Deterministic map `i -> perm[i]` as a stochastic matrix.
    pub fn from_permutation(perm: &[usize]) -> Result<Self> {
        let d = perm.len();
        let mut m = RealMatrix::zeros(d, d);
        for (i, &t) in perm.iter().enumerate() {
            if t >= d {
                return Err(Error::InvalidParam(format!("permutation target {t} out of range")));
            }
            m.set(t, i, 1.0);
        }
        StochasticMatrix::new(m, 1e-12)
    }

    /// Deterministic function table `i -> f(i)` with an explicit output size.
    pub fn from_function(f: &[usize], d_out: usize) -> Result<Self> {
        let mut m = RealMatrix::zeros(d_out, f.len());
        for (i, &t) in f.iter().enumerate() {
            if t >= d_out {
                return Err(Error::InvalidParam(format!("function value {t} out of range")));
            }
            m.set(t, i, 1.0);
        }
        StochasticMatrix::new(m, 1e-12)
    }

    pub fn matrix(&self) -> &RealMatrix {
        &self.m
    }

    pub fn d_in(&self) -> usize {
        self.m.cols()
    }

    pub fn d_out(&self) -> usize {
        self.m.rows()
    }

    pub fn apply(&self, p: &ProbDist) -> Result<ProbDist> {
        if p.len() != self.d_in() {
            return Err(Error::DimMismatch(format!(
                "stochastic map expects {} outcomes, got {}",
                self.d_in(),
                p.len()
            )));
        }
        ProbDist::new(self.m.apply(p.as_slice()), 1e-9)
    }

    /// Composition `then ∘ self`.
    pub fn then(&self, then: &StochasticMatrix) -> Result<StochasticMatrix> {
        if self.d_out() != then.d_in() {
            return Err(Error::DimMismatch("stochastic composition mismatch".into()));
        }
        StochasticMatrix::new(then.m.matmul(&self.m), 1e-9)
    }

    pub fn tensor_with(&self, other: &StochasticMatrix) -> StochasticMatrix {
        StochasticMatrix {
            m: self.m.tensor_with(&other.m),
        }
    }
}

/// A joint distribution over several factors, flattened row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawJoint", into = "RawJoint")]
pub struct JointDist {
    p: Vec<f64>,
    dims: DimSpec,
}

#[derive(Serialize, Deserialize)]
struct RawJoint {
    dims: Vec<usize>,
    p: Vec<f64>,
}

impl TryFrom<RawJoint> for JointDist {
    type Error = Error;
    fn try_from(raw: RawJoint) -> Result<Self> {
        JointDist::new(raw.p, DimSpec::new(raw.dims)?, DEFAULT_TOL)
    }
}

impl From<JointDist> for RawJoint {
    fn from(j: JointDist) -> RawJoint {
        RawJoint {
            dims: j.dims.0.clone(),
            p: j.p,
        }
    }
}

impl JointDist {
    pub fn new(p: Vec<f64>, dims: DimSpec, tol: f64) -> Result<Self> {
        if p.len() != dims.total() {
            return Err(Error::DimMismatch(format!(
                "joint length {} vs dims {:?}",
                p.len(),
                dims.0
            )));
        }
        let dist = ProbDist::new(p, tol)?;
        Ok(JointDist {
            p: dist.0,
            dims,
        })
    }

    pub fn product(a: &ProbDist, b: &ProbDist) -> Self {
        JointDist {
            p: a.tensor_with(b).0,
            dims: DimSpec(vec![a.len(), b.len()]),
        }
    }

    pub fn dims(&self) -> &DimSpec {
        &self.dims
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.p[self.dims.flatten(idx)]
    }

    /// Marginal on the given factors (kept in their original order).
    pub fn marginal(&self, keep: &[usize]) -> Result<JointDist> {
        for &k in keep {
            if k >= self.dims.len() {
                return Err(Error::InvalidParam(format!("factor {k} out of range")));
            }
        }
        let out_dims = DimSpec::new(keep.iter().map(|&k| self.dims.0[k]).collect())?;
        let mut out = vec![0.0; out_dims.total()];
        for (flat, &v) in self.p.iter().enumerate() {
            let idx = self.dims.unflatten(flat);
            let kept: Vec<usize> = keep.iter().map(|&k| idx[k]).collect();
            out[out_dims.flatten(&kept)] += v;
        }
        JointDist::new(out, out_dims, 1e-9)
    }

    /// Collapse to a plain distribution over the flattened outcome set.
    pub fn flatten(&self) -> ProbDist {
        ProbDist(self.p.clone())
    }

    /// Conditional distributions of factor `target` given each value of
    /// factor `given`. Values of `given` with probability below the zero-mass
    /// threshold yield `None`.
    pub fn conditionals(&self, target: usize, given: usize) -> Result<Vec<Option<ProbDist>>> {
        if target >= self.dims.len() || given >= self.dims.len() || target == given {
            return Err(Error::InvalidParam("conditioning factors out of range".into()));
        }
        let d_given = self.dims.0[given];
        let d_target = self.dims.0[target];
        let mut cols = vec![vec![0.0; d_target]; d_given];
        let mut mass = vec![0.0; d_given];
        for (flat, &v) in self.p.iter().enumerate() {
            let idx = self.dims.unflatten(flat);
            cols[idx[given]][idx[target]] += v;
            mass[idx[given]] += v;
        }
        Ok(cols
            .into_iter()
            .zip(mass)
            .map(|(col, m)| {
                if m < ZERO_MASS {
                    None
                } else {
                    Some(ProbDist(col.into_iter().map(|v| v / m).collect()))
                }
            })
            .collect())
    }

    /// Push the whole joint through a stochastic map on the flattened space.
    pub fn evolve(&self, map: &StochasticMatrix, out_dims: DimSpec) -> Result<JointDist> {
        if map.d_in() != self.dims.total() || map.d_out() != out_dims.total() {
            return Err(Error::DimMismatch("evolve dimension mismatch".into()));
        }
        JointDist::new(map.matrix().apply(&self.p), out_dims, 1e-9)
    }
}

/// The interventional (set-and-forget) transition matrix of a classical
/// circuit: feed a point mass on each input, couple it to the environment
/// marginal, evolve, and read off the output marginal. Columns are indexed by
/// the input value, so the result is column-stochastic by construction and
/// depends only on the dynamics and the environment marginal — not on any
/// correlation between the input and the environment.
pub fn classical_do_map(
    interaction: &StochasticMatrix,
    env: &ProbDist,
    d_s1: usize,
    d_s2: usize,
) -> Result<StochasticMatrix> {
    if interaction.d_in() != d_s1 * env.len() {
        return Err(Error::DimMismatch(format!(
            "interaction expects {} inputs, got d_s1 {} * d_env {}",
            interaction.d_in(),
            d_s1,
            env.len()
        )));
    }
    if interaction.d_out() % d_s2 != 0 {
        return Err(Error::DimMismatch(format!(
            "output split {} does not divide interaction output {}",
            d_s2,
            interaction.d_out()
        )));
    }
    let d_e2 = interaction.d_out() / d_s2;
    let mut m = RealMatrix::zeros(d_s2, d_s1);
    for s1 in 0..d_s1 {
        let joint_in = JointDist::product(&ProbDist::point(d_s1, s1), env);
        let out = joint_in.evolve(interaction, DimSpec(vec![d_s2, d_e2]))?;
        let marg = out.marginal(&[0])?;
        for s2 in 0..d_s2 {
            m.set(s2, s1, marg.probabilities()[s2]);
        }
    }
    StochasticMatrix::new(m, 1e-9)
}

/// The *observational* conditionals `P(s2 | s1)` of a classical circuit run
/// on a (possibly correlated) joint input over (S1, E). Unlike the
/// interventional map this can depend on the correlations, and inputs of zero
/// probability leave their column undefined (`None`).
pub fn classical_inference_map(
    joint_in: &JointDist,
    interaction: &StochasticMatrix,
    d_s2: usize,
) -> Result<Vec<Option<ProbDist>>> {
    if joint_in.dims().len() != 2 {
        return Err(Error::DimMismatch("joint input must have factors (S1, E)".into()));
    }
    let d_s1 = joint_in.dims().0[0];
    if interaction.d_in() != joint_in.dims().total() {
        return Err(Error::DimMismatch("interaction does not fit the joint input".into()));
    }
    if interaction.d_out() % d_s2 != 0 {
        return Err(Error::DimMismatch("output split does not divide interaction output".into()));
    }
    let d_e2 = interaction.d_out() / d_s2;
    let marg_s1 = joint_in.marginal(&[0])?;
    let env_given_s1 = joint_in.conditionals(1, 0)?;
    let mut out = Vec::with_capacity(d_s1);
    for s1 in 0..d_s1 {
        if marg_s1.probabilities()[s1] < ZERO_MASS {
            out.push(None);
            continue;
        }
        let env = env_given_s1[s1]
            .clone()
            .expect("mass above threshold implies a conditional");
        let joint = JointDist::product(&ProbDist::point(d_s1, s1), &env);
        let evolved = joint.evolve(interaction, DimSpec(vec![d_s2, d_e2]))?;
        out.push(Some(evolved.marginal(&[0])?.flatten()));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Dephasing bridges between the classical and quantum pictures
// ---------------------------------------------------------------------------

/// Diagonal of a density matrix as a distribution.
pub fn dephase_state(rho: &ComplexMatrix) -> Result<ProbDist> {
    let d = rho.rows();
    ProbDist::new((0..d).map(|i| rho.get(i, i).re).collect(), 1e-7)
}

/// Distribution embedded as a diagonal density matrix.
pub fn embed_dist(p: &ProbDist) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(p.len(), p.len());
    for (i, &v) in p.as_slice().iter().enumerate() {
        m.set(i, i, c(v, 0.0));
    }
    m
}

/// The transfer matrix of a quantum map on basis states:
/// `M[s2, s1] = <s2| E(|s1><s1|) |s2>`. For a CPTP map this is column
/// stochastic; for a general Hermiticity-preserving map it may not be, which
/// is exactly why the return type is a plain real matrix.
pub fn dephase_channel(ch: &QuantumChannel) -> RealMatrix {
    let mut m = RealMatrix::zeros(ch.d_out(), ch.d_in());
    for s1 in 0..ch.d_in() {
        let mut unit = ComplexMatrix::zeros(ch.d_in(), ch.d_in());
        unit.set(s1, s1, c(1.0, 0.0));
        let img = ch.apply_matrix(&unit);
        for s2 in 0..ch.d_out() {
            m.set(s2, s1, img.get(s2, s2).re);
        }
    }
    m
}

/// Embed a stochastic matrix as the CPTP channel
/// `rho -> sum_{s2,s1} M[s2,s1] <s1|rho|s1> |s2><s2|`.
pub fn embed_stochastic(m: &StochasticMatrix) -> QuantumChannel {
    let (d_out, d_in) = (m.d_out(), m.d_in());
    let mut kraus = Vec::new();
    for s2 in 0..d_out {
        for s1 in 0..d_in {
            let v = m.matrix().get(s2, s1);
            if v <= 0.0 {
                continue;
            }
            let mut k = ComplexMatrix::zeros(d_out, d_in);
            k.set(s2, s1, c(v.sqrt(), 0.0));
            kraus.push(k);
        }
    }
    QuantumChannel::from_kraus(&kraus).expect("stochastic embedding is CP")
}

#[cfg(test)]
mod tests {
    use super::*;

    /// s2 = s1 XOR e, e2 = e on bits, as a permutation of {0..3}.
    fn xor_interaction() -> StochasticMatrix {
        // flattening: (s,e) -> s*2 + e ; image (s XOR e, e)
        StochasticMatrix::from_permutation(&[0, 3, 2, 1]).unwrap()
    }

    #[test]
    fn do_map_of_xor_circuit_with_uniform_env_randomizes() {
        let map = classical_do_map(&xor_interaction(), &ProbDist::uniform(2), 2, 2).unwrap();
        let expect = RealMatrix::from_rows(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert!(map.matrix().max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn do_map_ignores_input_environment_correlations() {
        // Perfectly correlated and product joints share the env marginal, so
        // the interventional map must coincide.
        let env = ProbDist::new(vec![0.25, 0.75], 1e-12).unwrap();
        let a = classical_do_map(&xor_interaction(), &env, 2, 2).unwrap();
        let b = classical_do_map(&xor_interaction(), &env.clone(), 2, 2).unwrap();
        assert!(a.matrix().max_abs_diff(b.matrix()) < 1e-15);
    }

    #[test]
    fn inference_map_depends_on_correlations_and_masks_zero_mass() {
        // Joint with S1 == E always, P(S1 = 0) = 1: column 1 is undefined.
        let joint = JointDist::new(
            vec![1.0, 0.0, 0.0, 0.0],
            DimSpec(vec![2, 2]),
            1e-12,
        )
        .unwrap();
        let cols = classical_inference_map(&joint, &xor_interaction(), 2).unwrap();
        assert!(cols[1].is_none());
        let col0 = cols[0].as_ref().unwrap();
        // s1 = 0, e = 0 deterministically: output 0 XOR 0 = 0.
        assert!((col0.get(0) - 1.0).abs() < 1e-12);

        // Correlated joint: s = e uniformly. Observationally the XOR output
        // is always 0, which differs from the randomizing do-map.
        let corr = JointDist::new(
            vec![0.5, 0.0, 0.0, 0.5],
            DimSpec(vec![2, 2]),
            1e-12,
        )
        .unwrap();
        let cols = classical_inference_map(&corr, &xor_interaction(), 2).unwrap();
        for col in cols.iter().flatten() {
            assert!((col.get(0) - 1.0).abs() < 1e-12);
        }
        let do_map = classical_do_map(&xor_interaction(), &corr.marginal(&[1]).unwrap().flatten(), 2, 2).unwrap();
        assert!((do_map.matrix().get(0, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn conditionals_of_perfectly_correlated_joint_are_point_masses() {
        let corr = JointDist::new(vec![0.5, 0.0, 0.0, 0.5], DimSpec(vec![2, 2]), 1e-12).unwrap();
        let cond = corr.conditionals(1, 0).unwrap();
        assert!((cond[0].as_ref().unwrap().get(0) - 1.0).abs() < 1e-12);
        assert!((cond[1].as_ref().unwrap().get(1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn marginals_sum_out_the_other_factors() {
        let j = JointDist::new(
            vec![0.1, 0.2, 0.3, 0.4],
            DimSpec(vec![2, 2]),
            1e-12,
        )
        .unwrap();
        let m0 = j.marginal(&[0]).unwrap();
        assert!((m0.probabilities()[0] - 0.3).abs() < 1e-12);
        assert!((m0.probabilities()[1] - 0.7).abs() < 1e-12);
        let m1 = j.marginal(&[1]).unwrap();
        assert!((m1.probabilities()[0] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn stochastic_validation_rejects_bad_columns() {
        let neg = RealMatrix::from_rows(vec![vec![1.5, 0.0], vec![-0.5, 1.0]]).unwrap();
        assert!(StochasticMatrix::new(neg, 1e-9).is_err());
        let short = RealMatrix::from_rows(vec![vec![0.5, 0.0], vec![0.4, 1.0]]).unwrap();
        assert!(StochasticMatrix::new(short, 1e-9).is_err());
    }

    #[test]
    fn total_variation_basics() {
        let p = ProbDist::point(2, 0);
        let u = ProbDist::uniform(2);
        assert!((total_variation(&p, &u).unwrap() - 0.5).abs() < 1e-12);
        assert!(total_variation(&p, &p).unwrap() < 1e-15);
    }

    #[test]
    fn dephase_embed_round_trip_preserves_the_matrix() {
        let m = StochasticMatrix::new(
            RealMatrix::from_rows(vec![vec![0.7, 0.2], vec![0.3, 0.8]]).unwrap(),
            1e-12,
        )
        .unwrap();
        let ch = embed_stochastic(&m);
        assert!(ch.is_completely_positive(1e-9).0);
        assert!(ch.is_trace_preserving(1e-9).0);
        let back = dephase_channel(&ch);
        assert!(back.max_abs_diff(m.matrix()) < 1e-12);
    }

    #[test]
    fn dephasing_a_unitary_gives_its_permutation_action() {
        let ch = QuantumChannel::from_unitary(
            &crate::quantum::UnitaryOperator::new(crate::quantum::gates::pauli_x(), 1e-12).unwrap(),
        );
        let m = dephase_channel(&ch);
        let expect = RealMatrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(m.max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn joint_serde_round_trip() {
        let j = JointDist::new(vec![0.1, 0.2, 0.3, 0.4], DimSpec(vec![2, 2]), 1e-12).unwrap();
        let s = serde_json::to_string(&j).unwrap();
        let back: JointDist = serde_json::from_str(&s).unwrap();
        assert_eq!(back, j);
    }
}
