//! Convex quadratic programs with a diagonal Hessian:
//!
//! minimize ½xᵀHx − fᵀx + c subject to Ax = b and Cx ≥ d.
//!
//! Stationarity reads Hx − f − Aᵀy − Cᵀλ = 0 with λ ≥ 0.

pub mod dense;
mod dual;
mod ipm;

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm_inf, PivotPolicy, SkylineLdl, SymmetricBuilder, SymmetricMatrix};

pub use dual::{dualize, recover_primal, solve_dual, DualProblem, DualSolution};
pub use ipm::solve_inequality_qp;

/// Sparse constraint rows with right-hand sides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearConstraints {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub rhs: Vec<f64>,
}

impl LinearConstraints {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push(row);
        self.rhs.push(rhs);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Row values Rx.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|&(j, a)| a * x[j]).sum()).collect()
    }

    /// Rᵀy accumulated into a vector of length `n`.
    pub fn apply_transpose(&self, y: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (r, &yi) in self.rows.iter().zip(y) {
            if yi != 0.0 {
                for &(j, a) in r {
                    out[j] += a * yi;
                }
            }
        }
        out
    }

    fn max_abs(&self) -> f64 {
        self.rows.iter().flatten().fold(0.0f64, |m, &(_, a)| m.max(a.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    /// Diagonal of H, strictly positive.
    pub hessian: Vec<f64>,
    /// f in −fᵀx.
    pub linear: Vec<f64>,
    /// Constant added to the objective.
    pub offset: f64,
    pub eq: LinearConstraints,
    pub ineq: LinearConstraints,
}

impl QpProblem {
    pub fn new(hessian: Vec<f64>, linear: Vec<f64>) -> Self {
        Self {
            hessian,
            linear,
            offset: 0.0,
            eq: LinearConstraints::new(),
            ineq: LinearConstraints::new(),
        }
    }

    pub fn n_var(&self) -> usize {
        self.hessian.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_var();
        if self.linear.len() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: self.linear.len(),
            });
        }
        if let Some(h) = self.hessian.iter().find(|&&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::InvalidArgument(format!("Hessian diagonal entry {h} is not positive")));
        }
        for (name, c) in [("equality", &self.eq), ("inequality", &self.ineq)] {
            if c.rows.len() != c.rhs.len() {
                return Err(Error::InvalidArgument(format!("{name} rows and rhs differ in length")));
            }
            for row in &c.rows {
                if let Some(&(j, _)) = row.iter().find(|&&(j, _)| j >= n) {
                    return Err(Error::InvalidArgument(format!("{name} constraint column {j} ≥ {n}")));
                }
                if row.iter().any(|&(_, a)| !a.is_finite()) {
                    return Err(Error::NonFinite(format!("{name} constraint coefficient")));
                }
            }
            if c.rhs.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("{name} right-hand side")));
            }
        }
        if self.linear.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("linear term".into()));
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let quad: f64 = self.hessian.iter().zip(x).map(|(h, v)| h * v * v).sum();
        0.5 * quad - dot(&self.linear, x) + self.offset
    }

    /// Unconstrained minimizer H⁻¹f.
    pub fn unconstrained_minimizer(&self) -> Vec<f64> {
        self.linear.iter().zip(&self.hessian).map(|(f, h)| f / h).collect()
    }

    /// Plain-text dump: a header line, then sections `hessian`, `linear`,
    /// `eq`, `ineq` with "row col value" triplets and "rhs row value" lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "qp n_var={} n_eq={} n_ineq={} offset={:.16e}",
            self.n_var(),
            self.eq.len(),
            self.ineq.len(),
            self.offset
        );
        let _ = writeln!(out, "hessian");
        for (i, h) in self.hessian.iter().enumerate() {
            let _ = writeln!(out, "{i} {h:.16e}");
        }
        let _ = writeln!(out, "linear");
        for (i, f) in self.linear.iter().enumerate() {
            let _ = writeln!(out, "{i} {f:.16e}");
        }
        for (name, c) in [("eq", &self.eq), ("ineq", &self.ineq)] {
            let _ = writeln!(out, "{name}");
            for (r, row) in c.rows.iter().enumerate() {
                for &(j, a) in row {
                    let _ = writeln!(out, "{r} {j} {a:.16e}");
                }
            }
            for (r, b) in c.rhs.iter().enumerate() {
                let _ = writeln!(out, "rhs {r} {b:.16e}");
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

/// Scaled KKT residuals; see [`kkt_residuals`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub equality: f64,
    pub inequality: f64,
    pub dual_sign: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.equality)
            .max(self.inequality)
            .max(self.dual_sign)
            .max(self.complementarity)
    }

    pub fn within(&self, kkt_tol: f64, feas_tol: f64) -> bool {
        self.stationarity <= kkt_tol
            && self.complementarity <= kkt_tol
            && self.dual_sign <= kkt_tol
            && self.equality <= feas_tol
            && self.inequality <= feas_tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub primal: Vec<f64>,
    pub dual_eq: Vec<f64>,
    pub dual_ineq: Vec<f64>,
    pub objective: f64,
    pub status: QpStatus,
    pub kkt: KktResiduals,
    pub iterations: usize,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }

    /// Converts a non-optimal status into an error.
    pub fn into_optimal(self) -> Result<Self> {
        match self.status {
            QpStatus::Optimal => Ok(self),
            QpStatus::Infeasible => Err(Error::Infeasible {
                residual: self.kkt.equality.max(self.kkt.inequality),
            }),
            QpStatus::MaxIterations => Err(Error::MaxIterations {
                iterations: self.iterations,
                residual: self.kkt.max(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    pub kkt_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
    /// Re-solve on the identified active set after interior-point
    /// convergence, keeping the result only if its KKT residuals are no worse.
    pub polish: bool,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-9,
            feas_tol: 1e-8,
            max_iter: 200,
            polish: true,
        }
    }
}

/// KKT residuals of a candidate primal-dual point, each scaled by the size
/// of the data it involves:
/// stationarity ‖Hx − f − Aᵀy − Cᵀλ‖∞ / (1 + max(‖Hx‖, ‖f‖, ‖Aᵀy‖, ‖Cᵀλ‖)),
/// equality ‖Ax − b‖∞ / (1 + ‖b‖∞ + ‖A‖·‖x‖∞), inequality likewise on the
/// violation of Cx ≥ d, dual sign max(−λ), and complementarity
/// max|λ_i (Cx − d)_i| / (1 + |½xᵀHx| + |fᵀx|).
pub fn kkt_residuals(p: &QpProblem, x: &[f64], y: &[f64], lam: &[f64]) -> KktResiduals {
    let n = p.n_var();
    let hx: Vec<f64> = p.hessian.iter().zip(x).map(|(h, v)| h * v).collect();
    let aty = p.eq.apply_transpose(y, n);
    let ctl = p.ineq.apply_transpose(lam, n);
    let rd: Vec<f64> = (0..n).map(|i| hx[i] - p.linear[i] - aty[i] - ctl[i]).collect();
    let dscale = 1.0 + norm_inf(&hx).max(norm_inf(&p.linear)).max(norm_inf(&aty)).max(norm_inf(&ctl));
    let xs = norm_inf(x);

    let ax = p.eq.apply(x);
    let eq_scale = 1.0 + norm_inf(&p.eq.rhs) + p.eq.max_abs() * xs;
    let equality = ax.iter().zip(&p.eq.rhs).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / eq_scale;

    let cx = p.ineq.apply(x);
    let in_scale = 1.0 + norm_inf(&p.ineq.rhs) + p.ineq.max_abs() * xs;
    let slack: Vec<f64> = cx.iter().zip(&p.ineq.rhs).map(|(c, d)| c - d).collect();
    let inequality = slack.iter().fold(0.0f64, |m, s| m.max(-s)) / in_scale;
    let dual_sign = lam.iter().fold(0.0f64, |m, l| m.max(-l)) / dscale;
    let oscale = 1.0 + (0.5 * dot(&hx, x)).abs() + dot(&p.linear, x).abs();
    let complementarity = lam.iter().zip(&slack).fold(0.0f64, |m, (l, s)| m.max((l * s).abs())) / oscale;

    KktResiduals {
        stationarity: norm_inf(&rd) / dscale,
        equality,
        inequality,
        dual_sign,
        complementarity,
    }
}

/// Gram matrix R H⁻¹ Rᵀ of the given rows.
pub(crate) fn gram(rows: &[&[(usize, f64)]], hinv: &[f64]) -> SymmetricMatrix {
    let mut by_var: Vec<Vec<(usize, f64)>> = vec![Vec::new(); hinv.len()];
    for (r, row) in rows.iter().enumerate() {
        for &(j, a) in row.iter() {
            match by_var[j].last_mut() {
                Some(last) if last.0 == r => last.1 += a,
                _ => by_var[j].push((r, a)),
            }
        }
    }
    let mut b = SymmetricBuilder::with_capacity(rows.len(), rows.len() * 8);
    for (v, list) in by_var.iter().enumerate() {
        for (p, &(rp, ap)) in list.iter().enumerate() {
            b.add(rp, rp, ap * ap * hinv[v]);
            for &(rq, aq) in &list[..p] {
                b.add(rp, rq, ap * aq * hinv[v]);
            }
        }
    }
    // Empty rows still need a diagonal slot.
    for r in 0..rows.len() {
        b.add(r, r, 0.0);
    }
    b.build()
}

/// Pivot tolerance for detecting dependent rows in R H⁻¹ Rᵀ. The Gram
/// product squares the conditioning of R, so the threshold sits well above
/// round-off of the squared quantities.
pub(crate) const DEPENDENT_ROW_TOL: f64 = 1e-10;

/// Minimizer subject to `rows·x = rhs` only, with multipliers. Dependent
/// rows get a zero multiplier; inconsistency is reported by the caller
/// through the residual.
pub(crate) fn equality_kkt(p: &QpProblem, rows: &[&[(usize, f64)]], rhs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = p.n_var();
    let hinv: Vec<f64> = p.hessian.iter().map(|h| 1.0 / h).collect();
    let x0: Vec<f64> = (0..n).map(|i| p.linear[i] * hinv[i]).collect();
    if rows.is_empty() {
        return Ok((x0, Vec::new()));
    }
    let g = gram(rows, &hinv);
    let ldl = SkylineLdl::factor(&g, PivotPolicy::DropDependent { tol: DEPENDENT_ROW_TOL })?;
    let r: Vec<f64> = rows
        .iter()
        .zip(rhs)
        .map(|(row, b)| b - row.iter().map(|&(j, a)| a * x0[j]).sum::<f64>())
        .collect();
    let y = ldl.solve(&r);
    let mut x = x0;
    for (row, &yi) in rows.iter().zip(&y) {
        for &(j, a) in row.iter() {
            x[j] += hinv[j] * a * yi;
        }
    }
    Ok((x, y))
}

/// Solves a problem with equality constraints only (inequalities must be
/// absent) by the reduced KKT system (A H⁻¹ Aᵀ) y = b − A H⁻¹ f.
pub fn solve_equality_qp(p: &QpProblem, opts: &QpOptions) -> Result<QpSolution> {
    p.validate()?;
    if !p.ineq.is_empty() {
        return Err(Error::InvalidArgument("solve_equality_qp got inequality constraints".into()));
    }
    let rows: Vec<&[(usize, f64)]> = p.eq.rows.iter().map(Vec::as_slice).collect();
    let (x, y) = equality_kkt(p, &rows, &p.eq.rhs)?;
    let kkt = kkt_residuals(p, &x, &y, &[]);
    let status = if kkt.equality > opts.feas_tol {
        QpStatus::Infeasible
    } else {
        QpStatus::Optimal
    };
    Ok(QpSolution {
        objective: p.objective(&x),
        primal: x,
        dual_eq: y,
        dual_ineq: Vec::new(),
        status,
        kkt,
        iterations: 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equality_toy() {
        // (x−1)² + (y−1)² = ½·2x² − 2x + ... with H = 2I, f = (2, 2), c = 2
        let mut p = QpProblem::new(vec![2.0, 2.0], vec![2.0, 2.0]);
        p.offset = 2.0;
        p.eq.push(vec![(0, 1.0), (1, 1.0)], 0.0);
        let s = solve_equality_qp(&p, &QpOptions::default()).unwrap();
        assert!(s.is_optimal());
        assert!(s.primal.iter().all(|v| v.abs() < 1e-15));
        assert!((s.objective - 2.0).abs() < 1e-15);
    }

    #[test]
    fn no_constraints_gives_unconstrained_minimizer() {
        let p = QpProblem::new(vec![2.0, 4.0], vec![1.0, 1.0]);
        let s = solve_equality_qp(&p, &QpOptions::default()).unwrap();
        assert_eq!(s.primal, vec![0.5, 0.25]);
    }

    #[test]
    fn duplicate_row_is_harmless() {
        let mut p = QpProblem::new(vec![2.0, 2.0], vec![2.0, 2.0]);
        p.eq.push(vec![(0, 1.0), (1, 1.0)], 0.0);
        let single = solve_equality_qp(&p, &QpOptions::default()).unwrap();
        p.eq.push(vec![(0, 1.0), (1, 1.0)], 0.0);
        let double = solve_equality_qp(&p, &QpOptions::default()).unwrap();
        assert!(double.is_optimal());
        for i in 0..2 {
            assert!((single.primal[i] - double.primal[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn inconsistent_rows_are_infeasible() {
        let mut p = QpProblem::new(vec![1.0, 1.0], vec![0.0, 0.0]);
        p.eq.push(vec![(0, 1.0), (1, 1.0)], 0.0);
        p.eq.push(vec![(0, 1.0), (1, 1.0)], 1.0);
        let s = solve_equality_qp(&p, &QpOptions::default()).unwrap();
        assert_eq!(s.status, QpStatus::Infeasible);
        assert!(s.into_optimal().is_err());
    }

    #[test]
    fn validation_rejects_bad_problems() {
        assert!(QpProblem::new(vec![0.0], vec![1.0]).validate().is_err());
        let mut p = QpProblem::new(vec![1.0], vec![1.0]);
        p.eq.push(vec![(3, 1.0)], 0.0);
        assert!(p.validate().is_err());
    }

    #[test]
    fn dump_lists_sections() {
        let mut p = QpProblem::new(vec![1.0], vec![0.5]);
        p.ineq.push(vec![(0, 1.0)], 0.0);
        let t = p.to_text();
        assert!(t.starts_with("qp n_var=1 n_eq=0 n_ineq=1"));
        assert!(t.contains("\nineq\n0 0 1.0000000000000000e0\nrhs 0 0.0000000000000000e0\n"));
    }
}
