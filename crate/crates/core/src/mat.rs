//! Dense complex matrices and tensor-factor bookkeeping.
//!
//! Everything downstream (states, channels, combs) is stored in this one
//! row-major dense representation. Flattening conventions are fixed here once:
//! row-major everywhere, and in tensor products the *left* factor is the
//! slower-varying index, so `tensor(a, b)` places `a` on the coarse grid.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Convenience constructor for a complex scalar.
#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Ordered list of tensor-factor dimensions for a composite space.
///
/// The factor order matches the flattening convention: factor 0 is the
/// slowest index. `DimSpec(vec![2, 3])` describes a 6-dimensional space whose
/// flat index is `2 * 3`-ordered as `i0 * 3 + i1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimSpec(pub Vec<usize>);

impl DimSpec {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidParam(
                "dimension list must be non-empty with every factor >= 1".into(),
            ));
        }
        Ok(DimSpec(dims))
    }

    pub fn total(&self) -> usize {
        self.0.iter().product()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Strides of each factor in the flat index (row-major).
    pub fn strides(&self) -> Vec<usize> {
        let n = self.0.len();
        let mut s = vec![1usize; n];
        for i in (0..n.saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.0[i + 1];
        }
        s
    }

    /// Decompose a flat index into per-factor indices.
    pub fn unflatten(&self, mut idx: usize) -> Vec<usize> {
        let strides = self.strides();
        let mut out = Vec::with_capacity(self.0.len());
        for s in strides {
            out.push(idx / s);
            idx %= s;
        }
        out
    }

    /// Recompose per-factor indices into a flat index.
    pub fn flatten(&self, parts: &[usize]) -> usize {
        let strides = self.strides();
        parts.iter().zip(strides.iter()).map(|(p, s)| p * s).sum()
    }
}

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, c(1.0, 0.0));
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimMismatch(format!(
                "expected {}x{} = {} entries, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        Ok(ComplexMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<C64>>) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return Err(Error::InvalidParam("matrix must have at least one row".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|row| row.len() != cols) {
            return Err(Error::DimMismatch("ragged rows in matrix literal".into()));
        }
        let data = rows.into_iter().flatten().collect();
        Self::from_vec(r, cols, data)
    }

    /// Build from real entries (imaginary parts zero).
    pub fn from_real_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(
            rows.into_iter()
                .map(|row| row.into_iter().map(|x| c(x, 0.0)).collect())
                .collect(),
        )
    }

    /// Column vector from a ket's amplitudes.
    pub fn ket(amps: &[C64]) -> Self {
        ComplexMatrix {
            rows: amps.len(),
            cols: 1,
            data: amps.to_vec(),
        }
    }

    /// Computational basis ket |i> in dimension d.
    pub fn basis_ket(d: usize, i: usize) -> Self {
        let mut m = Self::zeros(d, 1);
        m.set(i, 0, c(1.0, 0.0));
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, col: usize) -> C64 {
        self.data[r * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, r: usize, col: usize, v: C64) {
        self.data[r * self.cols + col] = v;
    }

    #[inline]
    pub fn add_at(&mut self, r: usize, col: usize, v: C64) {
        self.data[r * self.cols + col] += v;
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn scale(&self, s: C64) -> Self {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for col in 0..self.cols {
                out.set(col, r, self.get(r, col));
            }
        }
        out
    }

    pub fn conj(&self) -> Self {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x.conj()).collect(),
        }
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        self.transpose().conj()
    }

    pub fn trace(&self) -> C64 {
        debug_assert!(self.is_square());
        (0..self.rows).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Max deviation from the adjoint; 0 for exactly Hermitian matrices.
    pub fn hermiticity_deviation(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square() && self.hermiticity_deviation() <= tol
    }

    /// Symmetrize: (M + M†)/2. Used to scrub round-off from Hermitian results.
    pub fn hermitize(&self) -> Self {
        (self + &self.adjoint()).scale(c(0.5, 0.0))
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = Self::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for col in 0..rhs.cols {
                    out.add_at(r, col, a * rhs.get(k, col));
                }
            }
        }
        out
    }

    /// A B A†.
    pub fn conjugate_by(&self, a: &Self) -> Self {
        a.matmul(self).matmul(&a.adjoint())
    }

    /// Outer product |self><other| for column vectors.
    pub fn outer(&self, other: &Self) -> Self {
        debug_assert_eq!(self.cols, 1);
        debug_assert_eq!(other.cols, 1);
        let mut out = Self::zeros(self.rows, other.rows);
        for r in 0..self.rows {
            for col in 0..other.rows {
                out.set(r, col, self.get(r, 0) * other.get(col, 0).conj());
            }
        }
        out
    }

    /// Projector |self><self| for a column vector.
    pub fn projector(&self) -> Self {
        self.outer(self)
    }

    /// Row-major flattening of a matrix into a column vector.
    pub fn mat_to_vec(&self) -> Vec<C64> {
        self.data.clone()
    }

    /// Inverse of [`mat_to_vec`](Self::mat_to_vec) for square matrices.
    pub fn vec_to_mat(v: &[C64]) -> Result<Self> {
        let n = (v.len() as f64).sqrt().round() as usize;
        if n * n != v.len() {
            return Err(Error::DimMismatch(format!(
                "vector of length {} is not a flattened square matrix",
                v.len()
            )));
        }
        Self::from_vec(n, n, v.to_vec())
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(rhs.data.iter())
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(rhs.data.iter())
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for col in 0..self.cols {
                let v = self.get(r, col);
                write!(f, "{:+.4}{:+.4}i ", v.re, v.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

// JSON form: nested array of [re, im] pairs, rows outermost.
impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = (0..self.rows)
            .map(|r| {
                (0..self.cols)
                    .map(|col| {
                        let v = self.get(r, col);
                        [v.re, v.im]
                    })
                    .collect()
            })
            .collect();
        rows.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(deserializer)?;
        let m = ComplexMatrix::from_rows(
            rows.into_iter()
                .map(|row| row.into_iter().map(|[re, im]| c(re, im)).collect())
                .collect(),
        )
        .map_err(D::Error::custom)?;
        Ok(m)
    }
}

/// Kronecker product; the left factor is the slower-varying index.
pub fn tensor(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(a.rows() * b.rows(), a.cols() * b.cols());
    for ar in 0..a.rows() {
        for ac in 0..a.cols() {
            let av = a.get(ar, ac);
            if av.norm_sqr() == 0.0 {
                continue;
            }
            for br in 0..b.rows() {
                for bc in 0..b.cols() {
                    out.set(ar * b.rows() + br, ac * b.cols() + bc, av * b.get(br, bc));
                }
            }
        }
    }
    out
}

/// n-fold tensor product, left to right.
pub fn tensor_many(factors: &[&ComplexMatrix]) -> ComplexMatrix {
    assert!(!factors.is_empty());
    let mut out = factors[0].clone();
    for f in &factors[1..] {
        out = tensor(&out, f);
    }
    out
}

/// Partial trace over the factors *not* listed in `keep`.
///
/// `keep` is a strictly increasing list of factor indices into `dims`; the
/// result's factor order is the original order restricted to `keep`.
pub fn partial_trace(m: &ComplexMatrix, dims: &DimSpec, keep: &[usize]) -> Result<ComplexMatrix> {
    if !m.is_square() || m.rows() != dims.total() {
        return Err(Error::DimMismatch(format!(
            "matrix side {} does not match factor dims {:?}",
            m.rows(),
            dims.0
        )));
    }
    if keep.windows(2).any(|w| w[0] >= w[1]) || keep.iter().any(|&k| k >= dims.len()) {
        return Err(Error::InvalidParam(
            "keep set must be strictly increasing factor indices".into(),
        ));
    }
    let kept_dims: Vec<usize> = keep.iter().map(|&k| dims.0[k]).collect();
    let traced: Vec<usize> = (0..dims.len()).filter(|i| !keep.contains(i)).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&t| dims.0[t]).collect();
    let kept_total: usize = kept_dims.iter().product::<usize>().max(1);
    let traced_total: usize = traced_dims.iter().product::<usize>().max(1);

    let kept_spec = DimSpec(if kept_dims.is_empty() { vec![1] } else { kept_dims });
    let traced_spec = DimSpec(if traced_dims.is_empty() { vec![1] } else { traced_dims });

    let mut out = ComplexMatrix::zeros(kept_total, kept_total);
    let mut full_row = vec![0usize; dims.len()];
    let mut full_col = vec![0usize; dims.len()];
    for kr in 0..kept_total {
        let kr_parts = kept_spec.unflatten(kr);
        for kc in 0..kept_total {
            let kc_parts = kept_spec.unflatten(kc);
            let mut acc = c(0.0, 0.0);
            for t in 0..traced_total {
                let t_parts = traced_spec.unflatten(t);
                for (slot, &f) in keep.iter().enumerate() {
                    full_row[f] = kr_parts[slot];
                    full_col[f] = kc_parts[slot];
                }
                for (slot, &f) in traced.iter().enumerate() {
                    full_row[f] = t_parts[slot];
                    full_col[f] = t_parts[slot];
                }
                acc += m.get(dims.flatten(&full_row), dims.flatten(&full_col));
            }
            out.set(kr, kc, acc);
        }
    }
    Ok(out)
}

/// Reorder tensor factors: output factor `i` is input factor `perm[i]`.
pub fn permute_factors(m: &ComplexMatrix, dims: &DimSpec, perm: &[usize]) -> Result<ComplexMatrix> {
    if !m.is_square() || m.rows() != dims.total() {
        return Err(Error::DimMismatch("matrix side does not match dims".into()));
    }
    let mut seen = vec![false; dims.len()];
    for &p in perm {
        if p >= dims.len() || seen[p] {
            return Err(Error::InvalidParam("perm must be a permutation of factor indices".into()));
        }
        seen[p] = true;
    }
    if perm.len() != dims.len() {
        return Err(Error::InvalidParam("perm length must equal factor count".into()));
    }
    let new_dims = DimSpec(perm.iter().map(|&p| dims.0[p]).collect());
    let n = dims.total();
    let mut out = ComplexMatrix::zeros(n, n);
    for r in 0..n {
        let rp = new_dims.unflatten(r);
        let mut orig_r = vec![0usize; dims.len()];
        for (i, &p) in perm.iter().enumerate() {
            orig_r[p] = rp[i];
        }
        let src_r = dims.flatten(&orig_r);
        for col in 0..n {
            let cp = new_dims.unflatten(col);
            let mut orig_c = vec![0usize; dims.len()];
            for (i, &p) in perm.iter().enumerate() {
                orig_c[p] = cp[i];
            }
            out.set(r, col, m.get(src_r, dims.flatten(&orig_c)));
        }
    }
    Ok(out)
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(m: &ComplexMatrix, tol: f64) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(Error::DimMismatch("eigenvalues need a square matrix".into()));
    }
    let dev = m.hermiticity_deviation();
    if dev > tol {
        return Err(Error::NotHermitian {
            deviation: dev,
            tolerance: tol,
        });
    }
    Ok(crate::eig::hermitian_eigen(m).0)
}

/// Positive semidefiniteness within `tol` (also requires Hermiticity within `tol`).
pub fn is_psd(m: &ComplexMatrix, tol: f64) -> bool {
    match hermitian_eigenvalues(m, tol) {
        Ok(ev) => ev.iter().all(|&x| x >= -tol),
        Err(_) => false,
    }
}

/// Trace distance (half the trace norm of the difference) between Hermitian
/// matrices; for density operators this is the standard distinguishability
/// metric in [0, 1].
pub fn trace_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    if (a.rows(), a.cols()) != (b.rows(), b.cols()) || !a.is_square() {
        return Err(Error::DimMismatch("trace_distance needs equal square shapes".into()));
    }
    let diff = (a - b).hermitize();
    let dev = (a - b).hermiticity_deviation();
    if dev > 1e-9 {
        return Err(Error::NotHermitian {
            deviation: dev,
            tolerance: 1e-9,
        });
    }
    let (ev, _) = crate::eig::hermitian_eigen(&diff);
    Ok(0.5 * ev.iter().map(|x| x.abs()).sum::<f64>())
}
