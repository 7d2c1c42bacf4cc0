//! Exact feasibility of stochastic-matrix fitting via a dense phase-1
//! simplex.
//!
//! The question "is there a column-stochastic matrix Γ with Γω_j = ν_j for
//! all j?" is a linear program in the entries of Γ with equality constraints
//! and nonnegativity. Phase-1 introduces one artificial variable per row and
//! minimizes their sum: a zero optimum exhibits a feasible Γ, a positive
//! optimum is an exact certificate of infeasibility. Bland's rule keeps the
//! pivoting cycle-free; problem sizes here are tiny (≤ 64 structural
//! variables), so the dense tableau is the simplest correct choice.

use crate::classical::RealMatrix;
use crate::error::{Error, Result};

/// Outcome of the phase-1 search.
#[derive(Debug, Clone)]
pub enum LpOutcome {
    /// A nonnegative solution of the equality system.
    Feasible(Vec<f64>),
    /// No solution exists; the optimal phase-1 objective (total artificial
    /// mass) is the certificate.
    Infeasible { objective: f64 },
}

const PIVOT_EPS: f64 = 1e-9;

/// Solve `find x >= 0 with A x = b` by phase-1 simplex (Bland's rule).
pub fn phase_one_feasibility(a_eq: &[Vec<f64>], b_eq: &[f64]) -> Result<LpOutcome> {
    if a_eq.is_empty() || a_eq.len() != b_eq.len() {
        return Err(Error::InvalidParam("constraint rows and rhs must align".into()));
    }
    let n = a_eq[0].len();
    if a_eq.iter().any(|r| r.len() != n) {
        return Err(Error::DimMismatch("ragged constraint rows".into()));
    }
    let m = a_eq.len();

    // Tableau: m rows of [structural | artificial | rhs], rhs >= 0.
    let width = n + m + 1;
    let mut t = vec![vec![0.0; width]; m];
    for (r, row) in a_eq.iter().enumerate() {
        let flip = if b_eq[r] < 0.0 { -1.0 } else { 1.0 };
        for (j, &v) in row.iter().enumerate() {
            t[r][j] = flip * v;
        }
        t[r][n + r] = 1.0;
        t[r][width - 1] = flip * b_eq[r];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    // Reduced costs for minimizing the artificial sum: z_j - c_j where c is
    // 1 on artificials. Maintained implicitly: z_j = sum of tableau rows
    // whose basic variable is artificial.
    let reduced = |t: &Vec<Vec<f64>>, basis: &Vec<usize>, j: usize| -> f64 {
        let z: f64 = (0..m)
            .filter(|&r| basis[r] >= n)
            .map(|r| t[r][j])
            .sum();
        let c = if j >= n { 1.0 } else { 0.0 };
        z - c
    };

    // Bland's rule guarantees termination; the cap is pure defence.
    let max_pivots = 50_000;
    for _ in 0..max_pivots {
        // Entering: smallest index with positive reduced cost.
        let entering = (0..n + m).find(|&j| reduced(&t, &basis, j) > PIVOT_EPS);
        let Some(col) = entering else {
            break;
        };
        // Leaving: minimum ratio, ties broken by smallest basis index.
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..m {
            if t[r][col] > PIVOT_EPS {
                let ratio = t[r][width - 1] / t[r][col];
                match leave {
                    None => leave = Some((r, ratio)),
                    Some((lr, lratio)) => {
                        if ratio < lratio - PIVOT_EPS
                            || ((ratio - lratio).abs() <= PIVOT_EPS && basis[r] < basis[lr])
                        {
                            leave = Some((r, ratio));
                        }
                    }
                }
            }
        }
        let Some((row, _)) = leave else {
            // Unbounded phase-1 cannot happen (objective bounded below by 0);
            // numerically this means the column is all-nonpositive noise.
            return Err(Error::NoConvergence(
                "phase-1 simplex found an unbounded direction".into(),
            ));
        };
        // Pivot.
        let pivot = t[row][col];
        for v in t[row].iter_mut() {
            *v /= pivot;
        }
        for r in 0..m {
            if r == row {
                continue;
            }
            let factor = t[r][col];
            if factor == 0.0 {
                continue;
            }
            for j in 0..width {
                t[r][j] -= factor * t[row][j];
            }
        }
        basis[row] = col;
    }

    let objective: f64 = (0..m)
        .filter(|&r| basis[r] >= n)
        .map(|r| t[r][width - 1])
        .sum();
    if objective > PIVOT_EPS {
        return Ok(LpOutcome::Infeasible { objective });
    }
    let mut x = vec![0.0; n];
    for r in 0..m {
        if basis[r] < n {
            x[basis[r]] = t[r][width - 1].max(0.0);
        }
    }
    Ok(LpOutcome::Feasible(x))
}

/// Is there a column-stochastic matrix mapping each `omega_j` to `nu_j`?
/// Exact up to floating point; `Feasible` carries one such matrix.
pub fn stochastic_feasibility_lp(
    pairs: &[(Vec<f64>, Vec<f64>)],
    d_in: usize,
    d_out: usize,
) -> Result<LpOutcome> {
    let nvar = d_in * d_out; // Γ[i,j] flattened as i*d_in + j
    let mut a_eq = Vec::new();
    let mut b_eq = Vec::new();
    for (omega, nu) in pairs {
        if omega.len() != d_in || nu.len() != d_out {
            return Err(Error::DimMismatch("pair dims disagree with the declared ones".into()));
        }
        for i in 0..d_out {
            let mut row = vec![0.0; nvar];
            for j in 0..d_in {
                row[i * d_in + j] = omega[j];
            }
            a_eq.push(row);
            b_eq.push(nu[i]);
        }
    }
    for j in 0..d_in {
        let mut row = vec![0.0; nvar];
        for i in 0..d_out {
            row[i * d_in + j] = 1.0;
        }
        a_eq.push(row);
        b_eq.push(1.0);
    }
    phase_one_feasibility(&a_eq, &b_eq)
}

/// Reshape an LP solution vector into the transition matrix.
pub fn solution_matrix(x: &[f64], d_in: usize, d_out: usize) -> RealMatrix {
    let mut m = RealMatrix::zeros(d_out, d_in);
    for i in 0..d_out {
        for j in 0..d_in {
            m.set(i, j, x[i * d_in + j]);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::StochasticMatrix;

    #[test]
    fn recovers_a_permutation_from_basis_inputs() {
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = vec![
            (vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]),
            (vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]),
            (vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]),
        ];
        match stochastic_feasibility_lp(&pairs, 3, 3).unwrap() {
            LpOutcome::Feasible(x) => {
                let m = solution_matrix(&x, 3, 3);
                let stoch = StochasticMatrix::new(m, 1e-7).unwrap();
                for (w, v) in &pairs {
                    let img = stoch.matrix().apply(w);
                    for (a, b) in img.iter().zip(v) {
                        assert!((a - b).abs() < 1e-9);
                    }
                }
            }
            other => panic!("expected feasible, got {other:?}"),
        }
    }

    #[test]
    fn certifies_infeasibility_of_distribution_splitting() {
        // A stochastic map cannot send the uniform bit to a point mass while
        // fixing both basis states (linearity forces the average).
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = vec![
            (vec![1.0, 0.0], vec![1.0, 0.0]),
            (vec![0.0, 1.0], vec![0.0, 1.0]),
            (vec![0.5, 0.5], vec![1.0, 0.0]),
        ];
        match stochastic_feasibility_lp(&pairs, 2, 2).unwrap() {
            LpOutcome::Infeasible { objective } => assert!(objective > 1e-6),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn feasible_with_underdetermined_constraints_returns_valid_matrix() {
        // One pair only: many stochastic solutions; any is acceptable.
        let pairs: Vec<(Vec<f64>, Vec<f64>)> =
            vec![(vec![0.5, 0.5], vec![0.25, 0.75])];
        match stochastic_feasibility_lp(&pairs, 2, 2).unwrap() {
            LpOutcome::Feasible(x) => {
                let m = solution_matrix(&x, 2, 2);
                StochasticMatrix::new(m.clone(), 1e-7).unwrap();
                let img = m.apply(&[0.5, 0.5]);
                assert!((img[0] - 0.25).abs() < 1e-9);
            }
            other => panic!("expected feasible, got {other:?}"),
        }
    }

    #[test]
    fn rejects_negative_rhs_after_normalization_correctly() {
        // Row with negative rhs must be sign-flipped, not dropped: the
        // system x0 - x1 = -0.5, x0 + x1 = 1 has the solution (0.25, 0.75).
        let a = vec![vec![1.0, -1.0], vec![1.0, 1.0]];
        let b = vec![-0.5, 1.0];
        match phase_one_feasibility(&a, &b).unwrap() {
            LpOutcome::Feasible(x) => {
                assert!((x[0] - 0.25).abs() < 1e-9);
                assert!((x[1] - 0.75).abs() < 1e-9);
            }
            other => panic!("expected feasible, got {other:?}"),
        }
    }
}
