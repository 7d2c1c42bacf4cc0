//! Hermitian eigendecomposition via cyclic Jacobi rotations.
//!
//! A two-sided Jacobi sweep with complex (phase-carrying) rotations; for the
//! matrix sizes in this crate (combs top out at 16x16) the quadratic
//! convergence of Jacobi makes it both simple and accurate to machine
//! precision. Real symmetric inputs are handled by the same code path, which
//! keeps one solver contract for everything downstream (trace norms, PSD
//! projections, pseudoinverses).

use num_complex::Complex;

use crate::mat::{c, ComplexMatrix};

const MAX_SWEEPS: usize = 64;

/// Off-diagonal Frobenius mass, the Jacobi convergence measure.
fn off_diagonal_norm(a: &ComplexMatrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for p in 0..n {
        for q in 0..n {
            if p != q {
                s += a.get(p, q).norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Returns `(values, vectors)` with values ascending and `vectors` unitary,
/// columns matching values, so that `m == vectors * diag(values) * vectors†`.
/// The input is hermitized first; callers validate Hermiticity to their own
/// tolerance before calling.
pub fn hermitian_eigen(m: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let n = m.rows();
    assert!(m.is_square(), "hermitian_eigen needs a square matrix");
    let mut a = m.hermitize();
    let mut v = ComplexMatrix::identity(n);
    if n == 1 {
        return (vec![a.get(0, 0).re], v);
    }

    let scale = a.frobenius_norm().max(1.0);
    let target = 1e-15 * scale;

    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a) <= target {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a.get(p, q);
                let mag = apq.norm();
                if mag <= 1e-300 {
                    continue;
                }
                let app = a.get(p, p).re;
                let aqq = a.get(q, q).re;
                // Phase factor pulling the pivot onto the real axis, then a
                // classic symmetric Jacobi rotation on the real 2x2 block.
                let phase = apq / mag; // e^{i phi}
                let tau = (aqq - app) / (2.0 * mag);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let cth = 1.0 / (1.0 + t * t).sqrt();
                let sth = t * cth;
                // Unitary G acting on columns (p, q):
                //   col p <- c * col p - s*conj(phase) * col q
                //   col q <- s * phase * col p + c * col q  ... expressed below
                let gpp = c(cth, 0.0);
                let gpq = c(sth, 0.0);
                let gqp = -phase.conj() * sth;
                let gqq = phase.conj() * cth;
                // A <- G† A G ; update columns then rows.
                for r in 0..n {
                    let arp = a.get(r, p);
                    let arq = a.get(r, q);
                    a.set(r, p, arp * gpp + arq * gqp);
                    a.set(r, q, arp * gpq + arq * gqq);
                }
                for col in 0..n {
                    let apc = a.get(p, col);
                    let aqc = a.get(q, col);
                    a.set(p, col, gpp.conj() * apc + gqp.conj() * aqc);
                    a.set(q, col, gpq.conj() * apc + gqq.conj() * aqc);
                }
                for r in 0..n {
                    let vrp = v.get(r, p);
                    let vrq = v.get(r, q);
                    v.set(r, p, vrp * gpp + vrq * gqp);
                    v.set(r, q, vrp * gpq + vrq * gqq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| a.get(i, i).re).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = ComplexMatrix::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..n {
            vectors.set(r, new_col, v.get(r, old_col));
        }
    }
    (values, vectors)
}

/// Projection of a Hermitian matrix onto the PSD cone (negative eigenvalues
/// clipped to zero, eigenvectors kept).
pub fn psd_projection(m: &ComplexMatrix) -> ComplexMatrix {
    let (vals, vecs) = hermitian_eigen(m);
    let n = m.rows();
    let mut out = ComplexMatrix::zeros(n, n);
    for (k, &lam) in vals.iter().enumerate() {
        if lam <= 0.0 {
            continue;
        }
        for r in 0..n {
            let vr = vecs.get(r, k);
            if vr.norm_sqr() == 0.0 {
                continue;
            }
            for col in 0..n {
                out.add_at(r, col, vr * vecs.get(col, k).conj() * lam);
            }
        }
    }
    out.hermitize()
}

/// Real symmetric eigendecomposition, reusing the complex solver.
/// Returns ascending values and a real orthogonal matrix of columns.
pub fn symmetric_eigen(m: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = m.len();
    let cm = ComplexMatrix::from_real_rows(m.to_vec()).expect("rectangular input");
    let (vals, vecs) = hermitian_eigen(&cm);
    // Columns of a real symmetric eigenproblem can pick up a global complex
    // phase from the complex solver; rotate each back onto the real axis.
    let mut out = vec![vec![0.0; n]; n];
    for k in 0..n {
        let mut phase: Option<Complex<f64>> = None;
        for r in 0..n {
            let v = vecs.get(r, k);
            if v.norm() > 1e-12 {
                phase = Some(v / v.norm());
                break;
            }
        }
        let ph = phase.unwrap_or_else(|| c(1.0, 0.0));
        for r in 0..n {
            out[r][k] = (vecs.get(r, k) / ph).re;
        }
    }
    (vals, out)
}

/// Minimum-norm least-squares solve of `A x = b` over the reals via the
/// eigendecomposition of `AᵀA` (pseudoinverse with relative rank cutoff).
/// Returns `(x, rank)`.
pub fn lstsq(a: &[Vec<f64>], b: &[f64]) -> (Vec<f64>, usize) {
    let rows = a.len();
    let cols = if rows == 0 { 0 } else { a[0].len() };
    assert_eq!(rows, b.len());
    // Normal matrix AᵀA and AᵀB.
    let mut ata = vec![vec![0.0; cols]; cols];
    let mut atb = vec![0.0; cols];
    for r in 0..rows {
        for i in 0..cols {
            let ari = a[r][i];
            if ari == 0.0 {
                continue;
            }
            atb[i] += ari * b[r];
            for j in i..cols {
                ata[i][j] += ari * a[r][j];
            }
        }
    }
    for i in 0..cols {
        for j in 0..i {
            ata[i][j] = ata[j][i];
        }
    }
    let (vals, vecs) = symmetric_eigen(&ata);
    let vmax = vals.iter().cloned().fold(0.0, f64::max);
    let cutoff = vmax * 1e-11;
    let mut x = vec![0.0; cols];
    let mut rank = 0;
    for k in 0..cols {
        if vals[k] <= cutoff.max(1e-300) {
            continue;
        }
        rank += 1;
        // coefficient <v_k, AᵀB> / lambda_k
        let mut coef = 0.0;
        for i in 0..cols {
            coef += vecs[i][k] * atb[i];
        }
        coef /= vals[k];
        for i in 0..cols {
            x[i] += coef * vecs[i][k];
        }
    }
    (x, rank)
}

/// Rank of a real matrix by eigenvalues of its Gram matrix.
pub fn real_rank(a: &[Vec<f64>]) -> usize {
    let rows = a.len();
    if rows == 0 {
        return 0;
    }
    let cols = a[0].len();
    let (small, use_gram_of_rows) = if rows <= cols { (rows, true) } else { (cols, false) };
    let mut g = vec![vec![0.0; small]; small];
    for i in 0..small {
        for j in 0..small {
            let mut s = 0.0;
            if use_gram_of_rows {
                for k in 0..cols {
                    s += a[i][k] * a[j][k];
                }
            } else {
                for k in 0..rows {
                    s += a[k][i] * a[k][j];
                }
            }
            g[i][j] = s;
        }
    }
    let (vals, _) = symmetric_eigen(&g);
    let vmax = vals.iter().cloned().fold(0.0, f64::max);
    if vmax <= 0.0 {
        return 0;
    }
    vals.iter().filter(|&&v| v > vmax * 1e-11).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat::tensor;

    #[test]
    fn recovers_pauli_y_spectrum_and_vectors() {
        let y = ComplexMatrix::from_rows(vec![
            vec![c(0.0, 0.0), c(0.0, -1.0)],
            vec![c(0.0, 1.0), c(0.0, 0.0)],
        ])
        .unwrap();
        let (vals, vecs) = hermitian_eigen(&y);
        assert!((vals[0] + 1.0).abs() < 1e-14);
        assert!((vals[1] - 1.0).abs() < 1e-14);
        // reconstruct
        let mut rec = ComplexMatrix::zeros(2, 2);
        for k in 0..2 {
            for r in 0..2 {
                for col in 0..2 {
                    rec.add_at(r, col, vecs.get(r, k) * vecs.get(col, k).conj() * c(vals[k], 0.0));
                }
            }
        }
        assert!(rec.max_abs_diff(&y) < 1e-13);
    }

    #[test]
    fn eigenvalues_are_invariant_under_unitary_conjugation() {
        // H (x) H conjugation of a diagonal matrix keeps the spectrum.
        let s = 1.0 / 2f64.sqrt();
        let h = ComplexMatrix::from_real_rows(vec![vec![s, s], vec![s, -s]]).unwrap();
        let u = tensor(&h, &h);
        let d = ComplexMatrix::from_real_rows(vec![
            vec![0.1, 0.0, 0.0, 0.0],
            vec![0.0, 0.2, 0.0, 0.0],
            vec![0.0, 0.0, 0.3, 0.0],
            vec![0.0, 0.0, 0.0, 0.4],
        ])
        .unwrap();
        let conj = d.conjugate_by(&u);
        let (vals, _) = hermitian_eigen(&conj);
        for (got, want) in vals.iter().zip([0.1, 0.2, 0.3, 0.4].iter()) {
            assert!((got - want).abs() < 1e-13);
        }
    }

    #[test]
    fn psd_projection_clips_negative_part() {
        let z = ComplexMatrix::from_real_rows(vec![vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        let p = psd_projection(&z);
        let expect =
            ComplexMatrix::from_real_rows(vec![vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(p.max_abs_diff(&expect) < 1e-13);
    }

    #[test]
    fn lstsq_solves_exactly_determined_system() {
        let a = vec![vec![2.0, 0.0], vec![0.0, 4.0], vec![2.0, 4.0]];
        let b = vec![2.0, 8.0, 10.0];
        let (x, rank) = lstsq(&a, &b);
        assert_eq!(rank, 2);
        assert!((x[0] - 1.0).abs() < 1e-10);
        assert!((x[1] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn lstsq_returns_minimum_norm_solution_for_deficient_system() {
        // x0 + x1 = 2 has minimal-norm solution (1, 1).
        let a = vec![vec![1.0, 1.0]];
        let b = vec![2.0];
        let (x, rank) = lstsq(&a, &b);
        assert_eq!(rank, 1);
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn real_rank_detects_dependent_rows() {
        let a = vec![vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0], vec![0.0, 1.0, 0.0]];
        assert_eq!(real_rank(&a), 2);
    }
}
