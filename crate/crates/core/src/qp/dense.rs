//! Brute-force reference solver for tiny problems: every subset of the
//! inequality rows is tried as the active set, each candidate KKT system is
//! solved densely, and the best point that is primal feasible with
//! non-negative multipliers wins. Exponential in the number of inequality
//! rows, so only meant as an oracle.

use nalgebra::{DMatrix, DVector};

use super::QpProblem;
use crate::error::{Error, Result};

/// Largest number of inequality rows accepted.
pub const MAX_INEQUALITIES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub primal: Vec<f64>,
    pub objective: f64,
    /// Indices of the inequality rows treated as active.
    pub active: Vec<usize>,
}

pub fn brute_force(p: &QpProblem, tol: f64) -> Result<OracleSolution> {
    p.validate()?;
    let m = p.ineq.len();
    if m > MAX_INEQUALITIES {
        return Err(Error::InvalidArgument(format!("{m} inequality rows is too many for enumeration")));
    }
    let mut best: Option<OracleSolution> = None;
    for mask in 0u32..(1u32 << m) {
        let active: Vec<usize> = (0..m).filter(|&i| mask & (1 << i) != 0).collect();
        let Some((x, lambda)) = solve_with_active(p, &active, tol) else {
            continue;
        };
        if lambda.iter().any(|&l| l < -tol) {
            continue;
        }
        let slack = p.ineq.apply(&x);
        if slack.iter().zip(&p.ineq.rhs).any(|(c, d)| c - d < -tol * (1.0 + d.abs())) {
            continue;
        }
        let objective = p.objective(&x);
        if best.as_ref().is_none_or(|b| objective < b.objective) {
            best = Some(OracleSolution { primal: x, objective, active });
        }
    }
    best.ok_or(Error::Infeasible { residual: f64::NAN })
}

/// Minimizer with the equalities and the chosen inequality rows held as
/// equalities. Returns the multipliers of the chosen rows, or `None` when
/// the system is inconsistent.
fn solve_with_active(p: &QpProblem, active: &[usize], tol: f64) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = p.n_var();
    let rows: Vec<(&[(usize, f64)], f64)> = p
        .eq
        .rows
        .iter()
        .zip(&p.eq.rhs)
        .map(|(r, &b)| (r.as_slice(), b))
        .chain(active.iter().map(|&i| (p.ineq.rows[i].as_slice(), p.ineq.rhs[i])))
        .collect();
    let k = rows.len();
    let mut a = DMatrix::zeros(k, n);
    let mut b = DVector::zeros(k);
    for (r, (row, rhs)) in rows.iter().enumerate() {
        for &(j, v) in *row {
            a[(r, j)] += v;
        }
        b[r] = *rhs;
    }
    let hinv = DVector::from_iterator(n, p.hessian.iter().map(|h| 1.0 / h));
    let f = DVector::from_column_slice(&p.linear);
    let x0 = f.component_mul(&hinv);
    if k == 0 {
        return Some((x0.as_slice().to_vec(), vec![]));
    }
    // x = H⁻¹(f + Aᵀy) with (A H⁻¹ Aᵀ) y = b − A x0.
    let ah = DMatrix::from_fn(k, n, |r, c| a[(r, c)] * hinv[c]);
    let g = &ah * a.transpose();
    let rhs = &b - &a * &x0;
    let y = g.clone().svd(true, true).solve(&rhs, 1e-12 * g.amax().max(1.0)).ok()?;
    if (&g * &y - &rhs).amax() > tol * (1.0 + rhs.amax()) {
        return None;
    }
    let x = &x0 + (a.transpose() * &y).component_mul(&hinv);
    Some((x.as_slice().to_vec(), y.as_slice()[p.eq.len()..].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_the_binding_constraint() {
        // min ½(x² + y²) − 2x − y  s.t.  −x ≥ −1, −y ≥ −3
        let mut p = QpProblem::new(vec![1.0, 1.0], vec![2.0, 1.0]);
        p.ineq.push(vec![(0, -1.0)], -1.0);
        p.ineq.push(vec![(1, -1.0)], -3.0);
        let s = brute_force(&p, 1e-10).unwrap();
        assert_eq!(s.active, vec![0]);
        assert!((s.primal[0] - 1.0).abs() < 1e-12 && (s.primal[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dependent_active_rows_are_tolerated() {
        let mut p = QpProblem::new(vec![1.0], vec![-1.0]);
        p.ineq.push(vec![(0, 1.0)], 0.0);
        p.ineq.push(vec![(0, 2.0)], 0.0);
        let s = brute_force(&p, 1e-10).unwrap();
        assert!(s.primal[0].abs() < 1e-12);
    }

    #[test]
    fn infeasible_is_reported() {
        let mut p = QpProblem::new(vec![1.0], vec![0.0]);
        p.ineq.push(vec![(0, 1.0)], 1.0);
        p.ineq.push(vec![(0, -1.0)], 0.0);
        assert!(brute_force(&p, 1e-10).is_err());
    }
}
