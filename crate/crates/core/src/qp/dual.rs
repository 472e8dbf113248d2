//! Reduced dual of a homogeneous inequality problem:
//!
//! primal  min ½xᵀHx − fᵀx  s.t. Cx ≥ 0
//! dual    min ½μᵀ(CH⁻¹Cᵀ)μ + (CH⁻¹f)ᵀμ  s.t. μ ≥ 0
//!
//! with the primal recovered as x = H⁻¹(f + Cᵀμ).

use super::{gram, QpOptions, QpProblem, QpStatus};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm_inf, reverse_cuthill_mckee, PivotPolicy, SkylineLdl, SymmetricMatrix};

const STEP_FRACTION: f64 = 0.995;

#[derive(Debug, Clone)]
pub struct DualProblem {
    /// H̃ = C H⁻¹ Cᵀ.
    pub hessian: SymmetricMatrix,
    /// f̃ = C H⁻¹ f.
    pub linear: Vec<f64>,
    /// ½ fᵀH⁻¹f − offset; the primal optimum equals −(dual optimum + constant).
    pub constant: f64,
}

impl DualProblem {
    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn objective(&self, mu: &[f64]) -> f64 {
        0.5 * dot(mu, &self.hessian.mul_vec(mu)) + dot(&self.linear, mu)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub mu: Vec<f64>,
    /// Dual objective ½μᵀH̃μ + f̃ᵀμ.
    pub objective: f64,
    pub status: QpStatus,
    pub iterations: usize,
}

pub fn dualize(p: &QpProblem) -> Result<DualProblem> {
    p.validate()?;
    if !p.eq.is_empty() {
        return Err(Error::InvalidArgument("dual path supports inequality constraints only".into()));
    }
    if p.ineq.rhs.iter().any(|&d| d != 0.0) {
        return Err(Error::InvalidArgument("dual path needs homogeneous constraints Cx ≥ 0".into()));
    }
    let hinv: Vec<f64> = p.hessian.iter().map(|h| 1.0 / h).collect();
    let rows: Vec<&[(usize, f64)]> = p.ineq.rows.iter().map(Vec::as_slice).collect();
    let x0 = p.unconstrained_minimizer();
    Ok(DualProblem {
        hessian: gram(&rows, &hinv),
        linear: p.ineq.apply(&x0),
        constant: 0.5 * dot(&p.linear, &x0) - p.offset,
    })
}

/// x = H⁻¹(f + Cᵀμ).
pub fn recover_primal(sol: &DualSolution, p: &QpProblem) -> Result<Vec<f64>> {
    if sol.status != QpStatus::Optimal {
        return Err(Error::Failed(format!("dual solve ended with status {:?}", sol.status)));
    }
    let ctm = p.ineq.apply_transpose(&sol.mu, p.n_var());
    Ok((0..p.n_var()).map(|i| (p.linear[i] + ctm[i]) / p.hessian[i]).collect())
}

/// Bound-constrained interior point for the dual, followed by an
/// active-set polish.
pub fn solve_dual(d: &DualProblem, opts: &QpOptions) -> Result<DualSolution> {
    let m = d.dim();
    let g = &d.linear;
    if m == 0 || g.iter().all(|&v| v >= 0.0) {
        // μ = 0 is optimal: gradient f̃ ≥ 0 on the non-negative orthant.
        return Ok(DualSolution {
            mu: vec![0.0; m],
            objective: 0.0,
            status: QpStatus::Optimal,
            iterations: 0,
        });
    }
    let order = reverse_cuthill_mckee(&d.hessian.adjacency());
    let mut mu = vec![1.0; m];
    let pm = d.hessian.mul_vec(&mu);
    let mut nu: Vec<f64> = (0..m).map(|i| (pm[i] + g[i]).max(1.0)).collect();
    let gscale = 1.0 + norm_inf(g);

    let mut status = QpStatus::MaxIterations;
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it;
        let pm = d.hessian.mul_vec(&mu);
        let rd: Vec<f64> = (0..m).map(|i| pm[i] + g[i] - nu[i]).collect();
        let gap = dot(&mu, &nu);
        let obj = 0.5 * dot(&mu, &pm) + dot(g, &mu);
        let dscale = 1.0 + norm_inf(&pm).max(norm_inf(g));
        if norm_inf(&rd) / dscale <= opts.kkt_tol && gap / (1.0 + obj.abs()) <= opts.kkt_tol {
            status = QpStatus::Optimal;
            break;
        }
        if norm_inf(&mu) > 1e10 * gscale {
            status = QpStatus::Infeasible;
            break;
        }
        let diag: Vec<f64> = (0..m).map(|i| nu[i] / mu[i]).collect();
        let mat = d.hessian.with_added_diagonal(&diag);
        let ldl = SkylineLdl::factor_with_order(&mat, order.clone(), PivotPolicy::DropDependent { tol: 1e-14 })?;
        let newton = |rs: &[f64]| -> (Vec<f64>, Vec<f64>) {
            let rhs: Vec<f64> = (0..m).map(|i| -rd[i] - rs[i] / mu[i]).collect();
            let dm = ldl.solve(&rhs);
            let dn: Vec<f64> = (0..m).map(|i| (-rs[i] - nu[i] * dm[i]) / mu[i]).collect();
            (dm, dn)
        };
        let mean = gap / m as f64;
        let rs_aff: Vec<f64> = (0..m).map(|i| mu[i] * nu[i]).collect();
        let (dm_aff, dn_aff) = newton(&rs_aff);
        let a_aff = max_step(&mu, &dm_aff).min(max_step(&nu, &dn_aff));
        let mean_aff = (0..m)
            .map(|i| (mu[i] + a_aff * dm_aff[i]) * (nu[i] + a_aff * dn_aff[i]))
            .sum::<f64>()
            / m as f64;
        let sigma = (mean_aff / mean).powi(3).min(1.0);
        let rs: Vec<f64> = (0..m)
            .map(|i| mu[i] * nu[i] + dm_aff[i] * dn_aff[i] - sigma * mean)
            .collect();
        let (dm, dn) = newton(&rs);
        let alpha = (STEP_FRACTION * max_step(&mu, &dm).min(max_step(&nu, &dn))).min(1.0);
        for i in 0..m {
            mu[i] += alpha * dm[i];
            nu[i] += alpha * dn[i];
        }
        iterations = it + 1;
    }

    if status == QpStatus::Optimal && opts.polish {
        if let Some(p) = polish(d, &mu, &nu, opts) {
            mu = p;
        }
    }
    Ok(DualSolution {
        objective: d.objective(&mu),
        mu,
        status,
        iterations,
    })
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, d)| **d < 0.0)
        .map(|(a, d)| -a / d)
        .fold(1.0 / STEP_FRACTION, f64::min)
}

fn polish(d: &DualProblem, mu: &[f64], nu: &[f64], opts: &QpOptions) -> Option<Vec<f64>> {
    let free: Vec<usize> = (0..d.dim()).filter(|&i| mu[i] > nu[i]).collect();
    let mut out = vec![0.0; d.dim()];
    if !free.is_empty() {
        let sub = d.hessian.submatrix(&free);
        let ldl = SkylineLdl::factor(&sub, PivotPolicy::DropDependent { tol: super::DEPENDENT_ROW_TOL }).ok()?;
        let rhs: Vec<f64> = free.iter().map(|&i| -d.linear[i]).collect();
        let sol = ldl.solve(&rhs);
        for (k, &i) in free.iter().enumerate() {
            out[i] = sol[k];
        }
    }
    let scale = 1.0 + norm_inf(mu);
    if out.iter().any(|&v| v < -opts.kkt_tol * scale) {
        return None;
    }
    for v in out.iter_mut() {
        *v = v.max(0.0);
    }
    let grad: Vec<f64> = d
        .hessian
        .mul_vec(&out)
        .iter()
        .zip(&d.linear)
        .map(|(a, b)| a + b)
        .collect();
    let gscale = 1.0 + norm_inf(&d.linear);
    let ok = (0..d.dim()).all(|i| {
        if out[i] > 0.0 {
            grad[i].abs() <= opts.kkt_tol * gscale
        } else {
            grad[i] >= -opts.kkt_tol * gscale
        }
    });
    (ok && d.objective(&out) <= d.objective(mu) + opts.kkt_tol * (1.0 + d.objective(mu).abs())).then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::solve_inequality_qp;

    #[test]
    fn identity_constraints_give_inverse_hessian() {
        let mut p = QpProblem::new(vec![2.0, 4.0], vec![-1.0, 1.0]);
        p.ineq.push(vec![(0, 1.0)], 0.0);
        p.ineq.push(vec![(1, 1.0)], 0.0);
        let d = dualize(&p).unwrap();
        assert_eq!(d.hessian.get(0, 0), 0.5);
        assert_eq!(d.hessian.get(1, 1), 0.25);
        assert_eq!(d.hessian.get(0, 1), 0.0);
        let sol = solve_dual(&d, &QpOptions::default()).unwrap();
        let x = recover_primal(&sol, &p).unwrap();
        assert!(x[0].abs() < 1e-12 && (x[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn dual_multiplier_matches_primal() {
        // min x² + y² − 2x s.t. −x − y ≥ 0
        let mut p = QpProblem::new(vec![2.0, 2.0], vec![2.0, 0.0]);
        p.ineq.push(vec![(0, -1.0), (1, -1.0)], 0.0);
        let primal = solve_inequality_qp(&p, &QpOptions::default()).unwrap();
        let d = dualize(&p).unwrap();
        assert!(d.dim() < p.n_var() + 1);
        let sol = solve_dual(&d, &QpOptions::default()).unwrap();
        assert!((sol.mu[0] - primal.dual_ineq[0]).abs() < 1e-8);
        let x = recover_primal(&sol, &p).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-9 && (x[1] + 0.5).abs() < 1e-9);
        let gap = primal.objective + (sol.objective + d.constant);
        assert!(gap.abs() < 1e-8);
    }

    #[test]
    fn zero_multiplier_recovers_unconstrained() {
        let p = QpProblem::new(vec![2.0], vec![3.0]);
        let sol = DualSolution {
            mu: vec![],
            objective: 0.0,
            status: QpStatus::Optimal,
            iterations: 0,
        };
        assert_eq!(recover_primal(&sol, &p).unwrap(), vec![1.5]);
    }

    #[test]
    fn inhomogeneous_constraints_are_rejected() {
        let mut p = QpProblem::new(vec![1.0], vec![0.0]);
        p.ineq.push(vec![(0, 1.0)], 1.0);
        assert!(dualize(&p).is_err());
    }
}
