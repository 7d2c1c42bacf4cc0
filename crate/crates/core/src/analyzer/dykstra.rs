//! Feasibility of the completely positive (and optionally trace-preserving)
//! fitting problem via Dykstra's alternating projections.
//!
//! The search runs in the real coefficient space of an orthonormal Hermitian
//! basis of the Choi space. One constraint set is affine (the relation's
//! linear equations, plus the trace-preservation rows when requested); the
//! other is the PSD cone. Dykstra's corrections make the iteration converge
//! to the projection onto the intersection when it is non-empty; when it is
//! empty, the inter-set gap stabilizes at a positive value, which we report
//! as numerical evidence of infeasibility (not a proof).

use crate::analyzer::fit::{apply_raw_choi, HermitianBasis};
use crate::eig::{psd_projection, symmetric_eigen};
use crate::mat::ComplexMatrix;

/// Tuning knobs for the alternating projections.
#[derive(Debug, Clone)]
pub struct DykstraOptions {
    /// Hard iteration cap.
    pub max_iter: usize,
    /// Inter-set gap below which the point counts as feasible.
    pub gap_tol: f64,
    /// Number of iterations over which the gap must stop improving before
    /// declaring infeasibility.
    pub window: usize,
}

impl Default for DykstraOptions {
    fn default() -> Self {
        DykstraOptions {
            max_iter: 20_000,
            gap_tol: 1e-8,
            window: 500,
        }
    }
}

/// Outcome of the feasibility search.
#[derive(Debug, Clone)]
pub enum DykstraOutcome {
    /// A Choi matrix inside both sets (within the gap tolerance).
    Feasible(ComplexMatrix),
    /// The gap stabilized at this positive value.
    Infeasible { gap: f64 },
    /// Iteration budget exhausted before either resolution.
    Undetermined,
}

/// Projection onto an affine set `{x : A x = b}` with a precomputed
/// pseudoinverse of the normal matrix.
struct AffineProjector {
    a_rows: Vec<Vec<f64>>,
    b: Vec<f64>,
    eigvecs: Vec<Vec<f64>>,
    inv_vals: Vec<f64>,
    n: usize,
}

impl AffineProjector {
    fn new(a_rows: Vec<Vec<f64>>, b: Vec<f64>) -> Self {
        let n = a_rows[0].len();
        // Normal matrix AᵀA and its eigendecomposition.
        let mut gram = vec![vec![0.0; n]; n];
        for row in &a_rows {
            for i in 0..n {
                if row[i] == 0.0 {
                    continue;
                }
                for j in 0..n {
                    gram[i][j] += row[i] * row[j];
                }
            }
        }
        let (vals, vecs) = symmetric_eigen(&gram);
        let vmax = vals.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let cutoff = vmax.max(1.0) * 1e-12;
        let inv_vals = vals
            .iter()
            .map(|&v| if v > cutoff { 1.0 / v } else { 0.0 })
            .collect();
        // symmetric_eigen returns eigenvectors as columns; store them as
        // rows so eigvecs[k] is the k-th eigenvector.
        let eigvecs = (0..n)
            .map(|k| (0..n).map(|r| vecs[r][k]).collect())
            .collect();
        AffineProjector {
            a_rows,
            b,
            eigvecs,
            inv_vals,
            n,
        }
    }

    /// `x - A⁺(Ax - b)`, with `A⁺ = (AᵀA)⁺ Aᵀ`.
    fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut residual = vec![0.0; self.a_rows.len()];
        for (r, row) in self.a_rows.iter().enumerate() {
            residual[r] = row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() - self.b[r];
        }
        // z = Aᵀ residual
        let mut z = vec![0.0; self.n];
        for (r, row) in self.a_rows.iter().enumerate() {
            if residual[r] == 0.0 {
                continue;
            }
            for i in 0..self.n {
                z[i] += row[i] * residual[r];
            }
        }
        // w = V diag(1/λ) Vᵀ z (pseudoinverse on the positive spectrum)
        let mut coeff = vec![0.0; self.n];
        for (k, vec_k) in self.eigvecs.iter().enumerate() {
            if self.inv_vals[k] == 0.0 {
                continue;
            }
            let dot: f64 = vec_k.iter().zip(&z).map(|(a, b)| a * b).sum();
            coeff[k] = dot * self.inv_vals[k];
        }
        let mut out = x.to_vec();
        for (k, vec_k) in self.eigvecs.iter().enumerate() {
            if coeff[k] == 0.0 {
                continue;
            }
            for i in 0..self.n {
                out[i] -= coeff[k] * vec_k[i];
            }
        }
        out
    }
}

/// Build the affine rows for a quantum relation (and TP if requested) in the
/// coefficient space of `basis`.
fn constraint_rows(
    pairs: &[(ComplexMatrix, ComplexMatrix)],
    d_in: usize,
    d_out: usize,
    require_tp: bool,
    basis: &HermitianBasis,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut a_rows = Vec::new();
    let mut b_vals = Vec::new();
    for (sigma, tau) in pairs {
        let actions: Vec<ComplexMatrix> = (0..basis.len())
            .map(|a| apply_raw_choi(basis.element(a), d_in, d_out, sigma))
            .collect();
        for o in 0..d_out {
            for o2 in o..d_out {
                let mut row_re = Vec::with_capacity(basis.len());
                let mut row_im = Vec::with_capacity(basis.len());
                for act in &actions {
                    let v = act.get(o, o2);
                    row_re.push(v.re);
                    row_im.push(v.im);
                }
                a_rows.push(row_re);
                b_vals.push(tau.get(o, o2).re);
                if o != o2 {
                    a_rows.push(row_im);
                    b_vals.push(tau.get(o, o2).im);
                }
            }
        }
    }
    if require_tp {
        // Tr_out(C)[k,i] = δ_{ki}: for each basis element, the value of that
        // reduced entry is linear in the coefficients.
        for k in 0..d_in {
            for i in k..d_in {
                let mut row_re = Vec::with_capacity(basis.len());
                let mut row_im = Vec::with_capacity(basis.len());
                for a in 0..basis.len() {
                    let mut v = crate::mat::c(0.0, 0.0);
                    for o in 0..d_out {
                        v += basis.element(a).get(o * d_in + k, o * d_in + i);
                    }
                    row_re.push(v.re);
                    row_im.push(v.im);
                }
                a_rows.push(row_re);
                b_vals.push(if k == i { 1.0 } else { 0.0 });
                if k != i {
                    a_rows.push(row_im);
                    b_vals.push(0.0);
                }
            }
        }
    }
    (a_rows, b_vals)
}

/// Search for a PSD Choi matrix satisfying the relation's linear constraints
/// (and trace preservation when `require_tp`). `warm_start` is typically the
/// least-squares fit.
pub fn choi_feasibility(
    pairs: &[(ComplexMatrix, ComplexMatrix)],
    d_in: usize,
    d_out: usize,
    require_tp: bool,
    warm_start: Option<&ComplexMatrix>,
    opts: &DykstraOptions,
) -> DykstraOutcome {
    let basis = HermitianBasis::new(d_in * d_out);
    let (a_rows, b_vals) = constraint_rows(pairs, d_in, d_out, require_tp, &basis);
    let affine = AffineProjector::new(a_rows, b_vals);
    let n = basis.len();

    let mut x = match warm_start {
        Some(choi) => basis.coefficients(choi),
        None => vec![0.0; n],
    };
    // Dykstra correction terms, one per constraint set.
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];

    let mut window_best = f64::INFINITY;
    let mut prev_window_best = f64::INFINITY;

    for iter in 0..opts.max_iter {
        // PSD projection of x + p.
        let xp: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + b).collect();
        let y_mat = psd_projection(&basis.reconstruct(&xp));
        let y = basis.coefficients(&y_mat);
        for i in 0..n {
            p[i] = xp[i] - y[i];
        }
        // Affine projection of y + q.
        let yq: Vec<f64> = y.iter().zip(&q).map(|(a, b)| a + b).collect();
        let x_new = affine.project(&yq);
        for i in 0..n {
            q[i] = yq[i] - x_new[i];
        }
        x = x_new;

        // Gap between the two projected points (Frobenius, by orthonormality
        // of the basis).
        let gap: f64 = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();

        if gap < opts.gap_tol {
            return DykstraOutcome::Feasible(basis.reconstruct(&y).hermitize());
        }
        window_best = window_best.min(gap);
        if (iter + 1) % opts.window == 0 {
            // No meaningful improvement over a whole window: the sets do not
            // intersect (numerically).
            if prev_window_best.is_finite()
                && window_best > opts.gap_tol
                && (prev_window_best - window_best) < prev_window_best * 1e-6
            {
                return DykstraOutcome::Infeasible { gap: window_best };
            }
            prev_window_best = window_best;
            window_best = f64::INFINITY;
        }
    }
    DykstraOutcome::Undetermined
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat::c;
    use crate::quantum::QuantumChannel;

    fn state(amps: &[(f64, f64)]) -> ComplexMatrix {
        ComplexMatrix::ket(&amps.iter().map(|&(re, im)| c(re, im)).collect::<Vec<_>>())
            .projector()
    }

    #[test]
    fn feasible_for_a_relation_generated_by_a_cptp_map() {
        let s = 1.0 / 2f64.sqrt();
        let dephase = QuantumChannel::from_kraus(&[
            ComplexMatrix::identity(2).scale(c(s, 0.0)),
            crate::quantum::gates::pauli_z().scale(c(s, 0.0)),
        ])
        .unwrap();
        let inputs = [
            state(&[(1.0, 0.0), (0.0, 0.0)]),
            state(&[(0.0, 0.0), (1.0, 0.0)]),
            state(&[(s, 0.0), (s, 0.0)]),
            state(&[(s, 0.0), (0.0, s)]),
        ];
        let pairs: Vec<_> = inputs
            .iter()
            .map(|x| (x.clone(), dephase.apply_matrix(x)))
            .collect();
        match choi_feasibility(&pairs, 2, 2, true, None, &DykstraOptions::default()) {
            DykstraOutcome::Feasible(choi) => {
                // The relation is informationally complete, so the feasible
                // point is the generating Choi itself.
                assert!(choi.max_abs_diff(dephase.choi()) < 1e-6);
            }
            other => panic!("expected feasible, got {other:?}"),
        }
    }

    #[test]
    fn infeasible_when_nonorthogonal_inputs_map_to_orthogonal_outputs() {
        let s = 1.0 / 2f64.sqrt();
        let pairs = vec![
            (
                state(&[(1.0, 0.0), (0.0, 0.0)]),
                state(&[(1.0, 0.0), (0.0, 0.0)]),
            ),
            (
                state(&[(s, 0.0), (s, 0.0)]),
                state(&[(0.0, 0.0), (1.0, 0.0)]),
            ),
        ];
        match choi_feasibility(&pairs, 2, 2, true, None, &DykstraOptions::default()) {
            DykstraOutcome::Infeasible { gap } => assert!(gap > 1e-8, "gap {gap}"),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn underdetermined_relation_is_feasible_with_slack() {
        // A single fixed point: many CPTP maps satisfy it.
        let half = ComplexMatrix::identity(2).scale(c(0.5, 0.0));
        let pairs = vec![(half.clone(), half.clone())];
        match choi_feasibility(&pairs, 2, 2, true, None, &DykstraOptions::default()) {
            DykstraOutcome::Feasible(choi) => {
                let ch = QuantumChannel::from_choi(choi, 2, 2).unwrap();
                let (cp, _) = ch.is_completely_positive(1e-6);
                let (tp, _) = ch.is_trace_preserving(1e-6);
                assert!(cp && tp);
                assert!(ch.apply_matrix(&half).max_abs_diff(&half) < 1e-6);
            }
            other => panic!("expected feasible, got {other:?}"),
        }
    }

    #[test]
    fn budget_exhaustion_reports_undetermined() {
        let s = 1.0 / 2f64.sqrt();
        let pairs = vec![
            (
                state(&[(1.0, 0.0), (0.0, 0.0)]),
                state(&[(1.0, 0.0), (0.0, 0.0)]),
            ),
            (
                state(&[(s, 0.0), (s, 0.0)]),
                state(&[(0.0, 0.0), (1.0, 0.0)]),
            ),
        ];
        let opts = DykstraOptions {
            max_iter: 3,
            gap_tol: 1e-14,
            window: 100,
        };
        assert!(matches!(
            choi_feasibility(&pairs, 2, 2, true, None, &opts),
            DykstraOutcome::Undetermined
        ));
    }
}
