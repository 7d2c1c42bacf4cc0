//! Quantum states, channels and measurements.
//!
//! Channels are stored canonically by their Choi matrix with the convention
//! fixed crate-wide:
//!
//! ```text
//!   C = sum_{ij}  E(|i><j|)  (x)  |i><j|        (output factor first)
//!   E(rho)[o,o'] = sum_{k,i} C[(o,k),(o',i)] rho[k,i]
//! ```
//!
//! i.e. `C` lives on `out (x) in` with row-major flattening. Only Hermiticity
//! of the Choi matrix is required at construction: the type deliberately
//! admits Hermiticity-preserving linear maps that are *not* completely
//! positive (the transpose map being the canonical example), because the
//! analysis pipeline must be able to carry such fits around. Kraus operators
//! are a constructor, not a stored representation — non-CP maps have none.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::{c, tensor, partial_trace, ComplexMatrix, DimSpec, C64};
use crate::{DEFAULT_TOL, ZERO_MASS};

/// A density operator together with its tensor-factor dimensions.
///
/// Validated at construction: Hermitian, unit trace and PSD within `tol`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawState", into = "RawState")]
pub struct DensityOperator {
    mat: ComplexMatrix,
    dims: DimSpec,
}

#[derive(Serialize, Deserialize)]
struct RawState {
    dims: Vec<usize>,
    matrix: ComplexMatrix,
}

impl TryFrom<RawState> for DensityOperator {
    type Error = Error;
    fn try_from(raw: RawState) -> Result<Self> {
        DensityOperator::new(raw.matrix, DimSpec::new(raw.dims)?, DEFAULT_TOL)
    }
}

impl From<DensityOperator> for RawState {
    fn from(s: DensityOperator) -> RawState {
        RawState {
            dims: s.dims.0.clone(),
            matrix: s.mat,
        }
    }
}

impl DensityOperator {
    pub fn new(mat: ComplexMatrix, dims: DimSpec, tol: f64) -> Result<Self> {
        if !mat.is_square() || mat.rows() != dims.total() {
            return Err(Error::DimMismatch(format!(
                "state side {} vs dims {:?}",
                mat.rows(),
                dims.0
            )));
        }
        let dev = mat.hermiticity_deviation();
        if dev > tol {
            return Err(Error::NotHermitian {
                deviation: dev,
                tolerance: tol,
            });
        }
        let tr = mat.trace();
        if (tr.re - 1.0).abs() > tol.max(1e-9) || tr.im.abs() > tol.max(1e-9) {
            return Err(Error::InvariantViolation(format!(
                "state trace {} != 1",
                tr.re
            )));
        }
        let evs = crate::eig::hermitian_eigen(&mat).0;
        if evs.first().copied().unwrap_or(0.0) < -tol.max(1e-9) {
            return Err(Error::InvariantViolation(format!(
                "state not PSD (min eigenvalue {:.3e})",
                evs[0]
            )));
        }
        Ok(DensityOperator { mat, dims })
    }

    /// Single-factor state from a matrix.
    pub fn single(mat: ComplexMatrix, tol: f64) -> Result<Self> {
        let d = mat.rows();
        Self::new(mat, DimSpec::new(vec![d])?, tol)
    }

    /// Pure state |k><k| from a normalized ket.
    pub fn from_ket(ket: &ComplexMatrix) -> Result<Self> {
        Self::single(ket.projector(), DEFAULT_TOL)
    }

    /// Maximally mixed state on dimension d.
    pub fn maximally_mixed(d: usize) -> Self {
        Self::single(
            ComplexMatrix::identity(d).scale(c(1.0 / d as f64, 0.0)),
            DEFAULT_TOL,
        )
        .expect("I/d is a state")
    }

    /// Computational basis state |i><i|.
    pub fn basis(d: usize, i: usize) -> Self {
        Self::from_ket(&ComplexMatrix::basis_ket(d, i)).expect("basis projector is a state")
    }

    pub fn product(a: &DensityOperator, b: &DensityOperator) -> Self {
        let mut dims = a.dims.0.clone();
        dims.extend_from_slice(&b.dims.0);
        DensityOperator {
            mat: tensor(&a.mat, &b.mat),
            dims: DimSpec(dims),
        }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn dims(&self) -> &DimSpec {
        &self.dims
    }

    pub fn dim_total(&self) -> usize {
        self.dims.total()
    }

    /// Reinterpret the same operator with a different factor split.
    pub fn with_dims(&self, dims: DimSpec) -> Result<Self> {
        if dims.total() != self.dims.total() {
            return Err(Error::DimMismatch("total dimension must be preserved".into()));
        }
        Ok(DensityOperator {
            mat: self.mat.clone(),
            dims,
        })
    }

    /// Reduced state on the given factors.
    pub fn reduce(&self, keep: &[usize]) -> Result<DensityOperator> {
        let mat = partial_trace(&self.mat, &self.dims, keep)?;
        let dims = DimSpec::new(keep.iter().map(|&k| self.dims.0[k]).collect())?;
        Ok(DensityOperator {
            mat: mat.hermitize(),
            dims,
        })
    }
}

/// A unitary operator, validated `U†U = I` within `tol`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryOperator {
    mat: ComplexMatrix,
}

impl UnitaryOperator {
    pub fn new(mat: ComplexMatrix, tol: f64) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::DimMismatch("unitary must be square".into()));
        }
        let gram = mat.adjoint().matmul(&mat);
        let dev = gram.max_abs_diff(&ComplexMatrix::identity(mat.rows()));
        if dev > tol {
            return Err(Error::InvariantViolation(format!(
                "not unitary (max |U†U - I| = {dev:.3e})"
            )));
        }
        Ok(UnitaryOperator { mat })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.rows()
    }
}

/// A linear Hermiticity-preserving map in Choi form. See the module docs for
/// the index convention. Complete positivity is *not* an invariant of this
/// type; query it with [`QuantumChannel::is_completely_positive`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChannel", into = "RawChannel")]
pub struct QuantumChannel {
    choi: ComplexMatrix,
    d_in: usize,
    d_out: usize,
}

#[derive(Serialize, Deserialize)]
struct RawChannel {
    d_in: usize,
    d_out: usize,
    choi: ComplexMatrix,
}

impl TryFrom<RawChannel> for QuantumChannel {
    type Error = Error;
    fn try_from(raw: RawChannel) -> Result<Self> {
        QuantumChannel::from_choi(raw.choi, raw.d_in, raw.d_out)
    }
}

impl From<QuantumChannel> for RawChannel {
    fn from(ch: QuantumChannel) -> RawChannel {
        RawChannel {
            d_in: ch.d_in,
            d_out: ch.d_out,
            choi: ch.choi,
        }
    }
}

impl QuantumChannel {
    /// Wrap a Choi matrix; requires the right side and Hermiticity.
    pub fn from_choi(choi: ComplexMatrix, d_in: usize, d_out: usize) -> Result<Self> {
        if choi.rows() != d_in * d_out || !choi.is_square() {
            return Err(Error::DimMismatch(format!(
                "Choi side {} != d_out*d_in = {}",
                choi.rows(),
                d_in * d_out
            )));
        }
        let dev = choi.hermiticity_deviation();
        if dev > 1e-8 {
            return Err(Error::NotHermitian {
                deviation: dev,
                tolerance: 1e-8,
            });
        }
        Ok(QuantumChannel {
            choi: choi.hermitize(),
            d_in,
            d_out,
        })
    }

    /// Build from the action on the matrix-unit basis.
    pub fn from_action<F: FnMut(&ComplexMatrix) -> ComplexMatrix>(
        d_in: usize,
        d_out: usize,
        mut f: F,
    ) -> Result<Self> {
        let mut choi = ComplexMatrix::zeros(d_in * d_out, d_in * d_out);
        for i in 0..d_in {
            for j in 0..d_in {
                let mut unit = ComplexMatrix::zeros(d_in, d_in);
                unit.set(i, j, c(1.0, 0.0));
                let img = f(&unit);
                if img.rows() != d_out || img.cols() != d_out {
                    return Err(Error::DimMismatch(
                        "channel action produced wrong output shape".into(),
                    ));
                }
                for o in 0..d_out {
                    for o2 in 0..d_out {
                        choi.add_at(o * d_in + i, o2 * d_in + j, img.get(o, o2));
                    }
                }
            }
        }
        Self::from_choi(choi, d_in, d_out)
    }

    /// CP map from Kraus operators (all `d_out x d_in`).
    pub fn from_kraus(kraus: &[ComplexMatrix]) -> Result<Self> {
        if kraus.is_empty() {
            return Err(Error::InvalidParam("at least one Kraus operator".into()));
        }
        let (d_out, d_in) = (kraus[0].rows(), kraus[0].cols());
        if kraus.iter().any(|k| k.rows() != d_out || k.cols() != d_in) {
            return Err(Error::DimMismatch("Kraus operators must share a shape".into()));
        }
        let ops: Vec<ComplexMatrix> = kraus.to_vec();
        Self::from_action(d_in, d_out, |unit| {
            let mut acc = ComplexMatrix::zeros(d_out, d_out);
            for k in &ops {
                acc = &acc + &k.matmul(unit).matmul(&k.adjoint());
            }
            acc
        })
    }

    pub fn from_unitary(u: &UnitaryOperator) -> Self {
        Self::from_kraus(std::slice::from_ref(u.matrix())).expect("unitary Kraus is valid")
    }

    pub fn identity(d: usize) -> Self {
        Self::from_action(d, d, |unit| unit.clone()).expect("identity action is valid")
    }

    /// The transpose map on dimension d — the canonical positive-but-not-CP map.
    pub fn transpose_channel(d: usize) -> Self {
        Self::from_action(d, d, |unit| unit.transpose()).expect("transpose action is valid")
    }

    /// Discard the input and prepare `state`.
    pub fn constant(state: &DensityOperator, d_in: usize) -> Self {
        let out = state.matrix().clone();
        Self::from_action(d_in, out.rows(), |unit| out.scale(unit.trace()))
            .expect("constant action is valid")
    }

    pub fn choi(&self) -> &ComplexMatrix {
        &self.choi
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    /// Linear action on an arbitrary input matrix.
    pub fn apply_matrix(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(rho.rows(), self.d_in, "channel input dimension mismatch");
        assert_eq!(rho.cols(), self.d_in);
        let mut out = ComplexMatrix::zeros(self.d_out, self.d_out);
        for o in 0..self.d_out {
            for o2 in 0..self.d_out {
                let mut acc = c(0.0, 0.0);
                for k in 0..self.d_in {
                    for i in 0..self.d_in {
                        let cv = self.choi.get(o * self.d_in + k, o2 * self.d_in + i);
                        if cv.norm_sqr() == 0.0 {
                            continue;
                        }
                        acc += cv * rho.get(k, i);
                    }
                }
                out.set(o, o2, acc);
            }
        }
        out
    }

    /// Minimum Choi eigenvalue and whether it clears `-tol`.
    pub fn is_completely_positive(&self, tol: f64) -> (bool, f64) {
        let evs = crate::eig::hermitian_eigen(&self.choi).0;
        let min = evs.first().copied().unwrap_or(0.0);
        (min >= -tol, min)
    }

    /// Max deviation of `Tr_out(C)` from the input identity and whether it
    /// clears `tol`.
    pub fn is_trace_preserving(&self, tol: f64) -> (bool, f64) {
        let dims = DimSpec(vec![self.d_out, self.d_in]);
        let reduced = partial_trace(&self.choi, &dims, &[1]).expect("choi dims are consistent");
        let dev = reduced.max_abs_diff(&ComplexMatrix::identity(self.d_in));
        (dev <= tol, dev)
    }

    /// Composition `then ∘ self` (self acts first).
    pub fn then(&self, then: &QuantumChannel) -> Result<QuantumChannel> {
        if self.d_out != then.d_in {
            return Err(Error::DimMismatch(format!(
                "composition mismatch: {} -> {} into {} -> {}",
                self.d_in, self.d_out, then.d_in, then.d_out
            )));
        }
        QuantumChannel::from_action(self.d_in, then.d_out, |unit| {
            then.apply_matrix(&self.apply_matrix(unit))
        })
    }

    /// Tensor product of channels (left factor slower, as everywhere).
    pub fn tensor_with(&self, other: &QuantumChannel) -> QuantumChannel {
        let (da_in, db_in) = (self.d_in, other.d_in);
        let in_dims = DimSpec(vec![da_in, db_in]);
        QuantumChannel::from_action(da_in * db_in, self.d_out * other.d_out, |unit| {
            // Every matrix unit on the product space factorizes, so expand
            // the input entrywise and tensor the per-factor images.
            let mut acc = ComplexMatrix::zeros(self.d_out * other.d_out, self.d_out * other.d_out);
            for r in 0..unit.rows() {
                for col in 0..unit.cols() {
                    let v = unit.get(r, col);
                    if v.norm_sqr() == 0.0 {
                        continue;
                    }
                    let rp = in_dims.unflatten(r);
                    let cp = in_dims.unflatten(col);
                    let mut ua = ComplexMatrix::zeros(da_in, da_in);
                    ua.set(rp[0], cp[0], v);
                    let mut ub = ComplexMatrix::zeros(db_in, db_in);
                    ub.set(rp[1], cp[1], c(1.0, 0.0));
                    acc = &acc + &tensor(&self.apply_matrix(&ua), &other.apply_matrix(&ub));
                }
            }
            acc
        })
        .expect("tensor action is valid")
    }
}

/// Apply a channel to a state; the output must again be a valid state, so
/// this is the CPTP-usage entry point (use [`QuantumChannel::apply_matrix`]
/// for raw linear-map action).
pub fn apply_channel(ch: &QuantumChannel, rho: &DensityOperator) -> Result<DensityOperator> {
    if ch.d_in() != rho.dim_total() {
        return Err(Error::DimMismatch(format!(
            "channel expects dimension {}, state has {}",
            ch.d_in(),
            rho.dim_total()
        )));
    }
    DensityOperator::single(ch.apply_matrix(rho.matrix()).hermitize(), 1e-7)
}

/// Apply a channel to one tensor factor of a joint state, identity elsewhere.
pub fn apply_on_factor(
    joint: &ComplexMatrix,
    dims: &DimSpec,
    factor: usize,
    ch: &QuantumChannel,
) -> Result<(ComplexMatrix, DimSpec)> {
    if factor >= dims.len() {
        return Err(Error::InvalidParam("factor index out of range".into()));
    }
    if dims.0[factor] != ch.d_in() {
        return Err(Error::DimMismatch(format!(
            "factor {} has dim {}, channel expects {}",
            factor, dims.0[factor], ch.d_in()
        )));
    }
    let mut out_dims = dims.0.clone();
    out_dims[factor] = ch.d_out();
    let out_spec = DimSpec(out_dims);
    let n_out = out_spec.total();
    let mut out = ComplexMatrix::zeros(n_out, n_out);
    let choi = ch.choi();
    let d_in = ch.d_in();
    for r in 0..n_out {
        let o = out_spec.unflatten(r)[factor];
        for col in 0..n_out {
            let mut rp = out_spec.unflatten(r);
            let mut cp = out_spec.unflatten(col);
            let o2 = cp[factor];
            let mut acc = c(0.0, 0.0);
            for k in 0..d_in {
                for i in 0..d_in {
                    let cv = choi.get(o * d_in + k, o2 * d_in + i);
                    if cv.norm_sqr() == 0.0 {
                        continue;
                    }
                    rp[factor] = k;
                    cp[factor] = i;
                    acc += cv * joint.get(dims.flatten(&rp), dims.flatten(&cp));
                }
            }
            out.set(r, col, acc);
        }
    }
    Ok((out, out_spec))
}

/// Channel obtained by dilating: couple the input to `env`, evolve with `u`,
/// and trace out everything but the first `d_sys_out`-dimensional factor.
///
/// `u` acts on `d_sys_in * d_env` (system = left factor) and its output is
/// split as `d_sys_out (x) d_env_out`; the total dimension must factor
/// accordingly. The result is CPTP by construction.
pub fn stinespring_channel(
    u: &UnitaryOperator,
    env: &DensityOperator,
    d_sys_in: usize,
    d_sys_out: usize,
) -> Result<QuantumChannel> {
    let total = u.dim();
    if d_sys_in * env.dim_total() != total {
        return Err(Error::DimMismatch(format!(
            "unitary dim {} != d_sys_in {} * d_env {}",
            total,
            d_sys_in,
            env.dim_total()
        )));
    }
    if total % d_sys_out != 0 {
        return Err(Error::DimMismatch(format!(
            "output split {d_sys_out} does not divide total {total}"
        )));
    }
    let d_env_out = total / d_sys_out;
    let env_mat = env.matrix().clone();
    let u_mat = u.matrix().clone();
    QuantumChannel::from_action(d_sys_in, d_sys_out, |unit| {
        let joint = tensor(unit, &env_mat);
        let evolved = joint.conjugate_by(&u_mat);
        partial_trace(&evolved, &DimSpec(vec![d_sys_out, d_env_out]), &[0])
            .expect("dims checked above")
    })
}

/// A positive operator-valued measure: effects PSD and summing to identity.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawPovm", into = "RawPovm")]
pub struct Povm {
    effects: Vec<ComplexMatrix>,
}

#[derive(Serialize, Deserialize)]
struct RawPovm {
    kind: String,
    effects: Vec<ComplexMatrix>,
}

impl TryFrom<RawPovm> for Povm {
    type Error = Error;
    fn try_from(raw: RawPovm) -> Result<Self> {
        if raw.kind != "povm" {
            return Err(Error::InvalidParam(format!("expected kind \"povm\", got {:?}", raw.kind)));
        }
        Povm::new(raw.effects, DEFAULT_TOL)
    }
}

impl From<Povm> for RawPovm {
    fn from(p: Povm) -> RawPovm {
        RawPovm {
            kind: "povm".into(),
            effects: p.effects,
        }
    }
}

impl Povm {
    pub fn new(effects: Vec<ComplexMatrix>, tol: f64) -> Result<Self> {
        if effects.is_empty() {
            return Err(Error::InvalidParam("POVM needs at least one effect".into()));
        }
        let d = effects[0].rows();
        let mut sum = ComplexMatrix::zeros(d, d);
        for e in &effects {
            if e.rows() != d || e.cols() != d {
                return Err(Error::DimMismatch("POVM effects must share a dimension".into()));
            }
            if !crate::mat::is_psd(e, tol.max(1e-9)) {
                return Err(Error::InvariantViolation("POVM effect not PSD".into()));
            }
            sum = &sum + e;
        }
        let dev = sum.max_abs_diff(&ComplexMatrix::identity(d));
        if dev > tol.max(1e-9) {
            return Err(Error::InvariantViolation(format!(
                "POVM effects sum to identity only within {dev:.3e}"
            )));
        }
        Ok(Povm { effects })
    }

    pub fn effects(&self) -> &[ComplexMatrix] {
        &self.effects
    }

    pub fn dim(&self) -> usize {
        self.effects[0].rows()
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }

    /// Outcome probabilities on a state.
    pub fn probabilities(&self, rho: &DensityOperator) -> Vec<f64> {
        self.effects
            .iter()
            .map(|e| e.matmul(rho.matrix()).trace().re.max(0.0))
            .collect()
    }

    /// Tensor product POVM (all pairs, left factor slower).
    pub fn tensor_with(&self, other: &Povm) -> Povm {
        let mut effects = Vec::with_capacity(self.len() * other.len());
        for a in &self.effects {
            for b in &other.effects {
                effects.push(tensor(a, b));
            }
        }
        Povm { effects }
    }
}

/// The six-eigenstate qubit POVM (conjugate bases, weight 1/3 each); an
/// informationally complete frame used as the tomography default.
pub fn pauli_six_povm() -> Povm {
    let s = 1.0 / 2f64.sqrt();
    let kets = [
        ComplexMatrix::ket(&[c(1.0, 0.0), c(0.0, 0.0)]),
        ComplexMatrix::ket(&[c(0.0, 0.0), c(1.0, 0.0)]),
        ComplexMatrix::ket(&[c(s, 0.0), c(s, 0.0)]),
        ComplexMatrix::ket(&[c(s, 0.0), c(-s, 0.0)]),
        ComplexMatrix::ket(&[c(s, 0.0), c(0.0, s)]),
        ComplexMatrix::ket(&[c(s, 0.0), c(0.0, -s)]),
    ];
    Povm::new(
        kets.iter()
            .map(|k| k.projector().scale(c(1.0 / 3.0, 0.0)))
            .collect(),
        1e-9,
    )
    .expect("six-state frame is a POVM")
}

/// The standard informationally complete preparation family on dimension `d`:
/// the `d` basis states plus, for every pair `i < j`, the superpositions
/// `(|i⟩+|j⟩)/√2` and `(|i⟩+i|j⟩)/√2` — `d²` pure states spanning operator
/// space.
pub fn ic_preparations(d: usize) -> Vec<DensityOperator> {
    let s = 1.0 / 2f64.sqrt();
    let mut states = Vec::with_capacity(d * d);
    for i in 0..d {
        states.push(DensityOperator::basis(d, i));
    }
    for i in 0..d {
        for j in (i + 1)..d {
            for phase in [c(s, 0.0), c(0.0, s)] {
                let mut amps = vec![c(0.0, 0.0); d];
                amps[i] = c(s, 0.0);
                amps[j] = phase;
                let ket = ComplexMatrix::ket(&amps);
                states.push(
                    DensityOperator::single(ket.projector(), 1e-12)
                        .expect("unit kets give valid states"),
                );
            }
        }
    }
    states
}

/// An informationally complete POVM on dimension `d`: the [`ic_preparations`]
/// projectors `P_a`, symmetrized to `F_a = G^{-1/2} P_a G^{-1/2}` with
/// `G = Σ_a P_a` so that the effects sum to the identity while staying PSD
/// and spanning.
pub fn ic_povm(d: usize) -> Result<Povm> {
    let projectors: Vec<ComplexMatrix> = ic_preparations(d)
        .iter()
        .map(|p| p.matrix().clone())
        .collect();
    let mut frame = ComplexMatrix::zeros(d, d);
    for p in &projectors {
        frame = &frame + p;
    }
    let (vals, vecs) = crate::eig::hermitian_eigen(&frame);
    if vals.first().copied().unwrap_or(0.0) <= 1e-12 {
        return Err(Error::RankDeficient {
            space: "preparation frame".into(),
            rank: vals.iter().filter(|&&v| v > 1e-12).count(),
            required: d,
        });
    }
    let mut inv_root = ComplexMatrix::zeros(d, d);
    for (k, &lambda) in vals.iter().enumerate() {
        let w = c(1.0 / lambda.sqrt(), 0.0);
        for r in 0..d {
            let vr = vecs.get(r, k);
            for col in 0..d {
                inv_root.add_at(r, col, vr * vecs.get(col, k).conj() * w);
            }
        }
    }
    Povm::new(
        projectors.iter().map(|p| p.conjugate_by(&inv_root)).collect(),
        1e-9,
    )
}

/// A quantum instrument: CP trace-non-increasing elements summing to a
/// trace-preserving map.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawInstrument", into = "RawInstrument")]
pub struct Instrument {
    elements: Vec<QuantumChannel>,
}

#[derive(Serialize, Deserialize)]
struct RawInstrument {
    kind: String,
    elements: Vec<QuantumChannel>,
}

impl TryFrom<RawInstrument> for Instrument {
    type Error = Error;
    fn try_from(raw: RawInstrument) -> Result<Self> {
        if raw.kind != "instrument" {
            return Err(Error::InvalidParam(format!(
                "expected kind \"instrument\", got {:?}",
                raw.kind
            )));
        }
        Instrument::new(raw.elements, DEFAULT_TOL)
    }
}

impl From<Instrument> for RawInstrument {
    fn from(i: Instrument) -> RawInstrument {
        RawInstrument {
            kind: "instrument".into(),
            elements: i.elements,
        }
    }
}

impl Instrument {
    pub fn new(elements: Vec<QuantumChannel>, tol: f64) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidParam("instrument needs at least one element".into()));
        }
        let (d_in, d_out) = (elements[0].d_in(), elements[0].d_out());
        let mut total = ComplexMatrix::zeros(d_in * d_out, d_in * d_out);
        for e in &elements {
            if e.d_in() != d_in || e.d_out() != d_out {
                return Err(Error::DimMismatch("instrument elements must share dims".into()));
            }
            let (cp, min) = e.is_completely_positive(tol.max(1e-9));
            if !cp {
                return Err(Error::InvariantViolation(format!(
                    "instrument element not CP (min Choi eigenvalue {min:.3e})"
                )));
            }
            total = &total + e.choi();
        }
        let sum = QuantumChannel::from_choi(total, d_in, d_out)?;
        let (tp, dev) = sum.is_trace_preserving(tol.max(1e-9));
        if !tp {
            return Err(Error::InvariantViolation(format!(
                "instrument elements sum to a non-TP map (deviation {dev:.3e})"
            )));
        }
        Ok(Instrument { elements })
    }

    pub fn elements(&self) -> &[QuantumChannel] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn d_in(&self) -> usize {
        self.elements[0].d_in()
    }
}

/// Projective instrument with the Lüders update rule `rho -> P rho P`.
pub fn luders_instrument(projectors: &[ComplexMatrix]) -> Result<Instrument> {
    let elements = projectors
        .iter()
        .map(|p| QuantumChannel::from_kraus(std::slice::from_ref(p)))
        .collect::<Result<Vec<_>>>()?;
    Instrument::new(elements, 1e-9)
}

/// Outcome probability and normalized post-measurement state for element `k`.
///
/// Outcomes below the zero-mass threshold are an error rather than a NaN.
pub fn measure_and_update(
    rho: &DensityOperator,
    instrument: &Instrument,
    k: usize,
) -> Result<(f64, DensityOperator)> {
    let element = instrument
        .elements()
        .get(k)
        .ok_or_else(|| Error::UnknownLabel(format!("instrument outcome {k}")))?;
    let raw = element.apply_matrix(rho.matrix()).hermitize();
    let p = raw.trace().re;
    if p < ZERO_MASS {
        return Err(Error::ZeroProbability(format!(
            "outcome {k} has probability {p:.3e}"
        )));
    }
    let state = DensityOperator::single(raw.scale(c(1.0 / p, 0.0)), 1e-7)?;
    Ok((p, state))
}

/// Result of scanning a map for positivity violations on pure states.
#[derive(Debug, Clone, Serialize)]
pub struct PositivityScan {
    /// Number of states probed.
    pub states_probed: usize,
    /// Worst (most negative) output eigenvalue over the scan.
    pub worst_eigenvalue: f64,
    /// A state whose image dips below `-tol`, if any was found.
    pub violation: Option<PositivityViolation>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PositivityViolation {
    pub ket: ComplexMatrix,
    pub min_eigenvalue: f64,
}

/// Probe positivity of a map on pure states: a deterministic Fibonacci-sphere
/// grid for qubit inputs plus `n_random` seeded Haar-random kets (the only
/// source of randomness, so results are reproducible per seed).
///
/// A found violation certifies non-positivity; an empty scan is evidence of
/// positivity, not proof.
pub fn positivity_scan(
    ch: &QuantumChannel,
    n_random: usize,
    seed: u64,
    tol: f64,
) -> PositivityScan {
    use rand::SeedableRng;
    let mut kets: Vec<ComplexMatrix> = Vec::new();
    if ch.d_in() == 2 {
        kets.extend(fibonacci_sphere_kets(144));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_random {
        kets.push(random_ket(ch.d_in(), &mut rng));
    }
    let mut worst = f64::INFINITY;
    let mut violation = None;
    for ket in &kets {
        let out = ch.apply_matrix(&ket.projector()).hermitize();
        let evs = crate::eig::hermitian_eigen(&out).0;
        let min = evs.first().copied().unwrap_or(0.0);
        if min < worst {
            worst = min;
            if min < -tol {
                violation = Some(PositivityViolation {
                    ket: ket.clone(),
                    min_eigenvalue: min,
                });
            }
        }
    }
    PositivityScan {
        states_probed: kets.len(),
        worst_eigenvalue: if worst.is_finite() { worst } else { 0.0 },
        violation,
    }
}

/// Deterministic near-uniform grid of qubit pure states (Fibonacci sphere).
pub fn fibonacci_sphere_kets(n: usize) -> Vec<ComplexMatrix> {
    let golden_angle = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let theta = z.acos();
            let phi = golden_angle * i as f64;
            ComplexMatrix::ket(&[
                c((theta / 2.0).cos(), 0.0),
                C64::from_polar((theta / 2.0).sin(), phi),
            ])
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Common gates and controlled interactions
// ---------------------------------------------------------------------------

pub mod gates {
    use super::*;

    pub fn pauli_x() -> ComplexMatrix {
        ComplexMatrix::from_real_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    pub fn pauli_y() -> ComplexMatrix {
        ComplexMatrix::from_rows(vec![
            vec![c(0.0, 0.0), c(0.0, -1.0)],
            vec![c(0.0, 1.0), c(0.0, 0.0)],
        ])
        .unwrap()
    }

    pub fn pauli_z() -> ComplexMatrix {
        ComplexMatrix::from_real_rows(vec![vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap()
    }

    pub fn hadamard() -> ComplexMatrix {
        let s = 1.0 / 2f64.sqrt();
        ComplexMatrix::from_real_rows(vec![vec![s, s], vec![s, -s]]).unwrap()
    }

    /// All four Paulis including the identity, in the order I, X, Y, Z.
    pub fn paulis() -> [ComplexMatrix; 4] {
        [ComplexMatrix::identity(2), pauli_x(), pauli_y(), pauli_z()]
    }

    /// Swap of two d-dimensional factors.
    pub fn swap(d: usize) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(d * d, d * d);
        for a in 0..d {
            for b in 0..d {
                m.set(b * d + a, a * d + b, c(1.0, 0.0));
            }
        }
        m
    }

    /// `sum_e op_e (x) |e><e|`: the right (environment) factor controls which
    /// operation acts on the left (system) factor.
    pub fn controlled_by_second(ops: &[ComplexMatrix]) -> ComplexMatrix {
        let d_e = ops.len();
        let d_s = ops[0].rows();
        let mut m = ComplexMatrix::zeros(d_s * d_e, d_s * d_e);
        for (e, op) in ops.iter().enumerate() {
            for r in 0..d_s {
                for col in 0..d_s {
                    m.set(r * d_e + e, col * d_e + e, op.get(r, col));
                }
            }
        }
        m
    }

    /// `sum_s |s><s| (x) op_s`: the left factor controls the right factor.
    pub fn controlled_by_first(ops: &[ComplexMatrix]) -> ComplexMatrix {
        let d_s = ops.len();
        let d_e = ops[0].rows();
        let mut m = ComplexMatrix::zeros(d_s * d_e, d_s * d_e);
        for (s, op) in ops.iter().enumerate() {
            for r in 0..d_e {
                for col in 0..d_e {
                    m.set(s * d_e + r, s * d_e + col, op.get(r, col));
                }
            }
        }
        m
    }

    /// CNOT with the environment (right factor) as control, system as target.
    pub fn cnot_env_controls_system() -> UnitaryOperator {
        UnitaryOperator::new(
            controlled_by_second(&[ComplexMatrix::identity(2), pauli_x()]),
            1e-12,
        )
        .unwrap()
    }

    /// CNOT with the system (left factor) as control, environment as target.
    pub fn cnot_system_controls_env() -> UnitaryOperator {
        UnitaryOperator::new(
            controlled_by_first(&[ComplexMatrix::identity(2), pauli_x()]),
            1e-12,
        )
        .unwrap()
    }
}

// ---------------------------------------------------------------------------
// Seeded randomness (tests, scans, tomography sampling)
// ---------------------------------------------------------------------------

/// One standard complex normal variate (Box-Muller).
pub fn complex_normal<R: rand::Rng>(rng: &mut R) -> C64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = 2.0 * std::f64::consts::PI * u2;
    c(r * theta.cos() / 2f64.sqrt(), r * theta.sin() / 2f64.sqrt())
}

/// Haar-random pure state as a column ket.
pub fn random_ket<R: rand::Rng>(d: usize, rng: &mut R) -> ComplexMatrix {
    loop {
        let amps: Vec<C64> = (0..d).map(|_| complex_normal(rng)).collect();
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return ComplexMatrix::ket(
                &amps.iter().map(|a| a / c(norm, 0.0)).collect::<Vec<_>>(),
            );
        }
    }
}

/// Haar-random unitary via Gram orthonormalization of a Gaussian matrix.
pub fn random_unitary<R: rand::Rng>(d: usize, rng: &mut R) -> UnitaryOperator {
    loop {
        let mut cols: Vec<Vec<C64>> = Vec::with_capacity(d);
        let mut ok = true;
        for _ in 0..d {
            let mut v: Vec<C64> = (0..d).map(|_| complex_normal(rng)).collect();
            for prev in &cols {
                let inner: C64 = prev
                    .iter()
                    .zip(v.iter())
                    .map(|(p, x)| p.conj() * x)
                    .sum();
                for (vi, pi) in v.iter_mut().zip(prev.iter()) {
                    *vi -= inner * pi;
                }
            }
            let norm: f64 = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            if norm < 1e-10 {
                ok = false;
                break;
            }
            for vi in v.iter_mut() {
                *vi /= c(norm, 0.0);
            }
            cols.push(v);
        }
        if !ok {
            continue;
        }
        let mut m = ComplexMatrix::zeros(d, d);
        for (j, col) in cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        if let Ok(u) = UnitaryOperator::new(m, 1e-9) {
            return u;
        }
    }
}

/// Random full-rank density operator `GG†/Tr`.
pub fn random_density<R: rand::Rng>(d: usize, rng: &mut R) -> DensityOperator {
    let mut g = ComplexMatrix::zeros(d, d);
    for r in 0..d {
        for col in 0..d {
            g.set(r, col, complex_normal(rng));
        }
    }
    let m = g.matmul(&g.adjoint());
    let tr = m.trace().re;
    DensityOperator::single(m.scale(c(1.0 / tr, 0.0)), 1e-7).expect("GG†/tr is a state")
}
