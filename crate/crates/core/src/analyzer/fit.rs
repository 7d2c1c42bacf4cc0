//! Least-squares fitting of linear maps to input-output relations.
//!
//! Quantum maps are parametrized by real coefficients in an orthonormal
//! Hermitian operator basis of the Choi space, so the normal equations stay
//! real; classical maps are fitted entrywise. Both report the root-sum-square
//! residual and the dimension of the real span of the inputs, which decides
//! uniqueness of the fit.

use crate::classical::RealMatrix;
use crate::eig::{lstsq, real_rank};
use crate::error::{Error, Result};
use crate::mat::{c, ComplexMatrix};
use crate::quantum::QuantumChannel;

/// Orthonormal basis of Hermitian `n x n` matrices (`n²` elements): the
/// diagonal matrix units, then the symmetric and antisymmetric off-diagonal
/// combinations, all unit-norm under the Frobenius inner product.
pub struct HermitianBasis {
    n: usize,
    elems: Vec<ComplexMatrix>,
}

impl HermitianBasis {
    pub fn new(n: usize) -> Self {
        let s = 1.0 / 2f64.sqrt();
        let mut elems = Vec::with_capacity(n * n);
        for i in 0..n {
            let mut m = ComplexMatrix::zeros(n, n);
            m.set(i, i, c(1.0, 0.0));
            elems.push(m);
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let mut sym = ComplexMatrix::zeros(n, n);
                sym.set(i, j, c(s, 0.0));
                sym.set(j, i, c(s, 0.0));
                elems.push(sym);
                let mut asym = ComplexMatrix::zeros(n, n);
                asym.set(i, j, c(0.0, s));
                asym.set(j, i, c(0.0, -s));
                elems.push(asym);
            }
        }
        HermitianBasis { n, elems }
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn element(&self, a: usize) -> &ComplexMatrix {
        &self.elems[a]
    }

    /// Real coefficients of a Hermitian matrix: `x_a = Tr(B_a m)`.
    pub fn coefficients(&self, m: &ComplexMatrix) -> Vec<f64> {
        assert_eq!(m.rows(), self.n);
        self.elems
            .iter()
            .map(|b| b.matmul(m).trace().re)
            .collect()
    }

    /// Rebuild `sum_a x_a B_a`.
    pub fn reconstruct(&self, x: &[f64]) -> ComplexMatrix {
        assert_eq!(x.len(), self.elems.len());
        let mut m = ComplexMatrix::zeros(self.n, self.n);
        for (b, &v) in self.elems.iter().zip(x) {
            if v != 0.0 {
                m = &m + &b.scale(c(v, 0.0));
            }
        }
        m
    }
}

/// Raw Choi action without constructing a channel (the Choi here may be any
/// matrix, e.g. a single basis element during fitting).
pub(crate) fn apply_raw_choi(
    choi: &ComplexMatrix,
    d_in: usize,
    d_out: usize,
    rho: &ComplexMatrix,
) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(d_out, d_out);
    for o in 0..d_out {
        for o2 in 0..d_out {
            let mut acc = c(0.0, 0.0);
            for k in 0..d_in {
                for i in 0..d_in {
                    let v = choi.get(o * d_in + k, o2 * d_in + i);
                    if v.norm_sqr() == 0.0 {
                        continue;
                    }
                    acc += v * rho.get(k, i);
                }
            }
            out.set(o, o2, acc);
        }
    }
    out
}

/// One real row per (pair, output entry, re/im); the coefficient of basis
/// element `a` is the corresponding entry of `B_a` acting on the pair's
/// input.
fn relation_rows(
    pairs: &[(ComplexMatrix, ComplexMatrix)],
    d_in: usize,
    d_out: usize,
    basis: &HermitianBasis,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut a_rows = Vec::new();
    let mut b_vals = Vec::new();
    // Precompute every basis element's action on every input.
    let actions: Vec<Vec<ComplexMatrix>> = pairs
        .iter()
        .map(|(sigma, _)| {
            (0..basis.len())
                .map(|a| apply_raw_choi(basis.element(a), d_in, d_out, sigma))
                .collect()
        })
        .collect();
    for (m, (_, tau)) in pairs.iter().enumerate() {
        for o in 0..d_out {
            for o2 in 0..d_out {
                let mut row_re = Vec::with_capacity(basis.len());
                let mut row_im = Vec::with_capacity(basis.len());
                for a in 0..basis.len() {
                    let v = actions[m][a].get(o, o2);
                    row_re.push(v.re);
                    row_im.push(v.im);
                }
                a_rows.push(row_re);
                b_vals.push(tau.get(o, o2).re);
                a_rows.push(row_im);
                b_vals.push(tau.get(o, o2).im);
            }
        }
    }
    (a_rows, b_vals)
}

/// Result of fitting a quantum relation.
pub struct QuantumFit {
    /// Minimum-norm least-squares map in Choi form (Hermitian by
    /// construction; CP/TP not implied).
    pub channel: QuantumChannel,
    /// Root-sum-square misfit over all pairs.
    pub residual: f64,
    /// Dimension of the real span of the inputs inside Hermitian space.
    pub span_rank: usize,
}

/// Least-squares fit of a linear map through all (input, output) pairs.
/// The fit is unique exactly when `span_rank == d_in²`.
pub fn fit_quantum_pairs(
    pairs: &[(ComplexMatrix, ComplexMatrix)],
    d_in: usize,
    d_out: usize,
) -> Result<QuantumFit> {
    if pairs.is_empty() {
        return Err(Error::InvalidParam("cannot fit an empty relation".into()));
    }
    for (sigma, tau) in pairs {
        if sigma.rows() != d_in || tau.rows() != d_out {
            return Err(Error::DimMismatch("pair dims disagree with the declared ones".into()));
        }
    }
    let basis = HermitianBasis::new(d_in * d_out);
    let (a_rows, b_vals) = relation_rows(pairs, d_in, d_out, &basis);
    let (x, _) = lstsq(&a_rows, &b_vals);
    let choi = basis.reconstruct(&x);
    let channel = QuantumChannel::from_choi(choi, d_in, d_out)?;
    let mut residual_sq = 0.0;
    for (sigma, tau) in pairs {
        let diff = &channel.apply_matrix(sigma) - tau;
        residual_sq += diff.frobenius_norm().powi(2);
    }
    Ok(QuantumFit {
        channel,
        residual: residual_sq.sqrt(),
        span_rank: quantum_span_rank(pairs.iter().map(|(s, _)| s), d_in)?,
    })
}

/// Rank of the real span of Hermitian operators.
pub fn quantum_span_rank<'a>(
    inputs: impl Iterator<Item = &'a ComplexMatrix>,
    d_in: usize,
) -> Result<usize> {
    let basis = HermitianBasis::new(d_in);
    let rows: Vec<Vec<f64>> = inputs.map(|s| basis.coefficients(s)).collect();
    Ok(real_rank(&rows))
}

/// Result of fitting a classical relation.
pub struct ClassicalFit {
    /// Minimum-norm least-squares transition matrix (not necessarily
    /// stochastic).
    pub matrix: RealMatrix,
    pub residual: f64,
    /// Dimension of the span of the input distributions.
    pub span_rank: usize,
}

/// Least-squares fit of a real matrix through all (input, output) pairs.
/// Unique exactly when `span_rank == d_in`.
pub fn fit_classical_pairs(
    pairs: &[(Vec<f64>, Vec<f64>)],
    d_in: usize,
    d_out: usize,
) -> Result<ClassicalFit> {
    if pairs.is_empty() {
        return Err(Error::InvalidParam("cannot fit an empty relation".into()));
    }
    let mut a_rows = Vec::new();
    let mut b_vals = Vec::new();
    for (omega, nu) in pairs {
        if omega.len() != d_in || nu.len() != d_out {
            return Err(Error::DimMismatch("pair dims disagree with the declared ones".into()));
        }
        for i in 0..d_out {
            let mut row = vec![0.0; d_in * d_out];
            for j in 0..d_in {
                row[i * d_in + j] = omega[j];
            }
            a_rows.push(row);
            b_vals.push(nu[i]);
        }
    }
    let (x, _) = lstsq(&a_rows, &b_vals);
    let mut matrix = RealMatrix::zeros(d_out, d_in);
    for i in 0..d_out {
        for j in 0..d_in {
            matrix.set(i, j, x[i * d_in + j]);
        }
    }
    let mut residual_sq = 0.0;
    for (omega, nu) in pairs {
        let img = matrix.apply(omega);
        residual_sq += img
            .iter()
            .zip(nu)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>();
    }
    let inputs: Vec<Vec<f64>> = pairs.iter().map(|(w, _)| w.clone()).collect();
    Ok(ClassicalFit {
        matrix,
        residual: residual_sq.sqrt(),
        span_rank: real_rank(&inputs),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::gates;

    fn qubit_states() -> Vec<ComplexMatrix> {
        let s = 1.0 / 2f64.sqrt();
        vec![
            ComplexMatrix::basis_ket(2, 0).projector(),
            ComplexMatrix::basis_ket(2, 1).projector(),
            ComplexMatrix::ket(&[c(s, 0.0), c(s, 0.0)]).projector(),
            ComplexMatrix::ket(&[c(s, 0.0), c(0.0, s)]).projector(),
        ]
    }

    #[test]
    fn hermitian_basis_is_orthonormal_and_complete() {
        let basis = HermitianBasis::new(3);
        assert_eq!(basis.len(), 9);
        for a in 0..9 {
            for b in 0..9 {
                let ip = basis.element(a).matmul(basis.element(b)).trace().re;
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-12, "({a},{b}) -> {ip}");
            }
        }
        // Round trip through coefficients.
        let m = gates::hadamard();
        let basis2 = HermitianBasis::new(2);
        let rec = basis2.reconstruct(&basis2.coefficients(&m));
        assert!(rec.max_abs_diff(&m) < 1e-12);
    }

    #[test]
    fn transpose_relation_fits_exactly_and_uniquely() {
        let pairs: Vec<(ComplexMatrix, ComplexMatrix)> = qubit_states()
            .into_iter()
            .map(|s| (s.clone(), s.transpose()))
            .collect();
        let fit = fit_quantum_pairs(&pairs, 2, 2).unwrap();
        assert!(fit.residual < 1e-10);
        assert_eq!(fit.span_rank, 4);
        assert!(
            fit.channel
                .choi()
                .max_abs_diff(QuantumChannel::transpose_channel(2).choi())
                < 1e-9
        );
    }

    #[test]
    fn underdetermined_fit_reports_low_span_rank() {
        let s = ComplexMatrix::basis_ket(2, 0).projector();
        let pairs = vec![(s.clone(), s.clone())];
        let fit = fit_quantum_pairs(&pairs, 2, 2).unwrap();
        assert!(fit.residual < 1e-12);
        assert_eq!(fit.span_rank, 1);
    }

    #[test]
    fn inconsistent_linear_dependency_yields_positive_residual() {
        // Inputs satisfy s0/2 + s1/2 = mixed, but the outputs break that
        // dependency: no linear map can fit.
        let mixed = ComplexMatrix::identity(2).scale(c(0.5, 0.0));
        let pairs = vec![
            (
                ComplexMatrix::basis_ket(2, 0).projector(),
                ComplexMatrix::basis_ket(2, 0).projector(),
            ),
            (
                ComplexMatrix::basis_ket(2, 1).projector(),
                ComplexMatrix::basis_ket(2, 1).projector(),
            ),
            (mixed, ComplexMatrix::basis_ket(2, 0).projector()),
        ];
        let fit = fit_quantum_pairs(&pairs, 2, 2).unwrap();
        assert!(fit.residual > 0.1, "residual {}", fit.residual);
    }

    #[test]
    fn classical_fit_recovers_a_stochastic_matrix_from_basis_inputs() {
        let m = vec![vec![0.9, 0.3, 0.0], vec![0.1, 0.5, 0.2], vec![0.0, 0.2, 0.8]];
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..3)
            .map(|j| {
                let mut w = vec![0.0; 3];
                w[j] = 1.0;
                let v = (0..3).map(|i| m[i][j]).collect();
                (w, v)
            })
            .collect();
        let fit = fit_classical_pairs(&pairs, 3, 3).unwrap();
        assert!(fit.residual < 1e-10);
        assert_eq!(fit.span_rank, 3);
        for i in 0..3 {
            for j in 0..3 {
                assert!((fit.matrix.get(i, j) - m[i][j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn classical_fit_on_restricted_span_matches_any_consistent_matrix_on_it() {
        // Three inputs spanning a 3-dim subspace of R^4 and outputs produced
        // by a known matrix: the fit agrees with that matrix on the span.
        let m = RealMatrix::from_rows(vec![
            vec![0.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 1.0],
            vec![0.0, 1.0, 0.0, 1.0],
            vec![0.0, 1.0, 1.0, 0.0],
        ])
        .unwrap();
        let oms = [
            vec![0.5, 0.5, 0.0, 0.0],
            vec![0.5, 0.0, 0.5, 0.0],
            vec![0.5, 0.0, 0.0, 0.5],
        ];
        let pairs: Vec<(Vec<f64>, Vec<f64>)> =
            oms.iter().map(|w| (w.clone(), m.apply(w))).collect();
        let fit = fit_classical_pairs(&pairs, 4, 4).unwrap();
        assert!(fit.residual < 1e-10);
        assert_eq!(fit.span_rank, 3);
        for (w, v) in &pairs {
            let img = fit.matrix.apply(w);
            for (a, b) in img.iter().zip(v) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
