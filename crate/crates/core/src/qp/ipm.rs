//! Primal-dual interior point with Mehrotra predictor-corrector.

use super::{equality_kkt, gram, kkt_residuals, QpOptions, QpProblem, QpSolution, QpStatus};
use crate::error::Result;
use crate::linalg::{dot, norm_inf, reverse_cuthill_mckee, PivotPolicy, SkylineLdl};

const POLISH_ROUNDS: usize = 50;
const STEP_FRACTION: f64 = 0.995;
const DIVERGENCE: f64 = 1e10;

/// Solves the general problem. The unconstrained minimizer is returned
/// unchanged (with zero multipliers) when it already satisfies every
/// inequality and there are no equalities.
pub fn solve_inequality_qp(p: &QpProblem, opts: &QpOptions) -> Result<QpSolution> {
    p.validate()?;
    let n = p.n_var();
    let me = p.eq.len();
    let mi = p.ineq.len();

    if me == 0 {
        let x = p.unconstrained_minimizer();
        let lam = vec![0.0; mi];
        let kkt = kkt_residuals(p, &x, &[], &lam);
        if kkt.inequality <= opts.feas_tol {
            return Ok(QpSolution {
                objective: p.objective(&x),
                primal: x,
                dual_eq: Vec::new(),
                dual_ineq: lam,
                status: QpStatus::Optimal,
                kkt,
                iterations: 0,
            });
        }
    }
    if mi == 0 {
        return super::solve_equality_qp(p, opts);
    }

    let hinv: Vec<f64> = p.hessian.iter().map(|h| 1.0 / h).collect();
    let rows: Vec<&[(usize, f64)]> = p
        .eq
        .rows
        .iter()
        .chain(&p.ineq.rows)
        .map(Vec::as_slice)
        .collect();
    let g = gram(&rows, &hinv);
    let order = reverse_cuthill_mckee(&g.adjacency());

    // Starting point: unconstrained minimizer with shifted slacks.
    let mut x = p.unconstrained_minimizer();
    let mut y = vec![0.0; me];
    let cx = p.ineq.apply(&x);
    let r: Vec<f64> = cx.iter().zip(&p.ineq.rhs).map(|(c, d)| c - d).collect();
    let shift = (-1.5 * r.iter().copied().fold(f64::INFINITY, f64::min)).max(0.0);
    let mut s: Vec<f64> = r.iter().map(|v| v + shift).collect();
    let mut lam = vec![1.0; mi];
    let sl = dot(&s, &lam);
    let ds = 0.5 * sl / lam.iter().sum::<f64>();
    let dl = 0.5 * sl / s.iter().sum::<f64>().max(f64::MIN_POSITIVE);
    let floor = 1e-2 * (1.0 + norm_inf(&r));
    for i in 0..mi {
        s[i] = (s[i] + ds).max(floor);
        lam[i] = (lam[i] + dl).max(1e-2);
    }

    let fscale = 1.0 + norm_inf(&p.linear);
    let mut status = QpStatus::MaxIterations;
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it;
        let aty = p.eq.apply_transpose(&y, n);
        let ctl = p.ineq.apply_transpose(&lam, n);
        let hx: Vec<f64> = (0..n).map(|i| p.hessian[i] * x[i]).collect();
        let rd: Vec<f64> = (0..n).map(|i| hx[i] - p.linear[i] - aty[i] - ctl[i]).collect();
        let rp: Vec<f64> = p.eq.apply(&x).iter().zip(&p.eq.rhs).map(|(a, b)| a - b).collect();
        let cx = p.ineq.apply(&x);
        let rc: Vec<f64> = (0..mi).map(|i| cx[i] - s[i] - p.ineq.rhs[i]).collect();
        let mu = dot(&s, &lam) / mi as f64;

        let dscale = 1.0 + norm_inf(&hx).max(norm_inf(&p.linear)).max(norm_inf(&aty)).max(norm_inf(&ctl));
        let pscale = 1.0 + norm_inf(&p.eq.rhs).max(norm_inf(&p.ineq.rhs)).max(norm_inf(&cx));
        let oscale = 1.0 + (0.5 * dot(&hx, &x)).abs() + dot(&p.linear, &x).abs();
        if norm_inf(&rd) / dscale <= opts.kkt_tol
            && norm_inf(&rp).max(norm_inf(&rc)) / pscale <= opts.feas_tol
            && mu * mi as f64 / oscale <= opts.kkt_tol
        {
            status = QpStatus::Optimal;
            break;
        }
        if norm_inf(&lam) > DIVERGENCE * fscale || norm_inf(&x) > DIVERGENCE * (1.0 + norm_inf(&p.unconstrained_minimizer())) {
            status = QpStatus::Infeasible;
            break;
        }

        let mut diag = vec![0.0; me + mi];
        for i in 0..mi {
            diag[me + i] = s[i] / lam[i];
        }
        let m = g.with_added_diagonal(&diag);
        let ldl = SkylineLdl::factor_with_order(&m, order.clone(), PivotPolicy::DropDependent { tol: 1e-14 })?;

        let newton = |rs: &[f64]| -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
            let t: Vec<f64> = (0..n).map(|i| rd[i] * hinv[i]).collect();
            let at = p.eq.apply(&t);
            let ct = p.ineq.apply(&t);
            let mut rhs = Vec::with_capacity(me + mi);
            for i in 0..me {
                rhs.push(-rp[i] + at[i]);
            }
            for i in 0..mi {
                rhs.push(-rc[i] + ct[i] - rs[i] / lam[i]);
            }
            let sol = ldl.solve(&rhs);
            let (dy, dl) = sol.split_at(me);
            let atdy = p.eq.apply_transpose(dy, n);
            let ctdl = p.ineq.apply_transpose(dl, n);
            let dx: Vec<f64> = (0..n).map(|i| hinv[i] * (-rd[i] + atdy[i] + ctdl[i])).collect();
            let dsl: Vec<f64> = (0..mi).map(|i| -(rs[i] + s[i] * dl[i]) / lam[i]).collect();
            (dx, dy.to_vec(), dl.to_vec(), dsl)
        };

        let rs_aff: Vec<f64> = (0..mi).map(|i| s[i] * lam[i]).collect();
        let (_, _, dl_aff, ds_aff) = newton(&rs_aff);
        let alpha_aff = max_step(&s, &ds_aff).min(max_step(&lam, &dl_aff));
        let mu_aff = (0..mi)
            .map(|i| (s[i] + alpha_aff * ds_aff[i]) * (lam[i] + alpha_aff * dl_aff[i]))
            .sum::<f64>()
            / mi as f64;
        let sigma = (mu_aff / mu).powi(3).min(1.0);

        let rs: Vec<f64> = (0..mi)
            .map(|i| s[i] * lam[i] + ds_aff[i] * dl_aff[i] - sigma * mu)
            .collect();
        let (dx, dy, dl, dsl) = newton(&rs);
        let alpha = (STEP_FRACTION * max_step(&s, &dsl).min(max_step(&lam, &dl))).min(1.0);
        for i in 0..n {
            x[i] += alpha * dx[i];
        }
        for i in 0..me {
            y[i] += alpha * dy[i];
        }
        for i in 0..mi {
            s[i] += alpha * dsl[i];
            lam[i] += alpha * dl[i];
        }
        iterations = it + 1;
    }

    let kkt = kkt_residuals(p, &x, &y, &lam);
    let mut best = QpSolution {
        objective: p.objective(&x),
        primal: x,
        dual_eq: y,
        dual_ineq: lam,
        status,
        kkt,
        iterations,
    };
    if status == QpStatus::Optimal && opts.polish {
        if let Some(polished) = polish(p, &best, &s, opts) {
            best = polished;
        }
    }
    if best.status == QpStatus::MaxIterations {
        log::warn!("interior point stopped after {iterations} iterations, KKT residual {:e}", best.kkt.max());
    }
    Ok(best)
}

/// Largest α keeping v + α·dv ≥ 0, capped so that the damped step is ≤ 1.
fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, d)| **d < 0.0)
        .map(|(a, d)| -a / d)
        .fold(1.0 / STEP_FRACTION, f64::min)
}

/// Active-set refinement seeded with {λ_i > s_i}: solve with the active rows
/// as equalities, then drop the most negative multiplier or add the most
/// violated row until the point satisfies the KKT conditions.
fn polish(p: &QpProblem, ipm: &QpSolution, s: &[f64], opts: &QpOptions) -> Option<QpSolution> {
    let mi = p.ineq.len();
    let mut active: Vec<bool> = (0..mi).map(|i| ipm.dual_ineq[i] > s[i]).collect();
    for _ in 0..POLISH_ROUNDS {
        let idx: Vec<usize> = (0..mi).filter(|&i| active[i]).collect();
        let rows: Vec<&[(usize, f64)]> = p
            .eq
            .rows
            .iter()
            .map(Vec::as_slice)
            .chain(idx.iter().map(|&i| p.ineq.rows[i].as_slice()))
            .collect();
        let rhs: Vec<f64> = p.eq.rhs.iter().copied().chain(idx.iter().map(|&i| p.ineq.rhs[i])).collect();
        let (x, mult) = equality_kkt(p, &rows, &rhs).ok()?;
        let me = p.eq.len();
        let y = mult[..me].to_vec();
        let mut lam = vec![0.0; mi];
        for (k, &i) in idx.iter().enumerate() {
            lam[i] = mult[me + k];
        }
        let kkt = kkt_residuals(p, &x, &y, &lam);
        if kkt.within(opts.kkt_tol, opts.feas_tol) {
            for l in lam.iter_mut() {
                *l = l.max(0.0);
            }
            return Some(QpSolution {
                objective: p.objective(&x),
                primal: x,
                dual_eq: y,
                dual_ineq: lam,
                status: QpStatus::Optimal,
                kkt,
                iterations: ipm.iterations,
            });
        }
        let (neg, lmin) = (0..mi).map(|i| (i, lam[i])).fold((usize::MAX, 0.0), |b, c| if c.1 < b.1 { c } else { b });
        let slack: Vec<f64> = p.ineq.apply(&x).iter().zip(&p.ineq.rhs).map(|(c, d)| c - d).collect();
        let (viol, smin) = (0..mi)
            .filter(|&i| !active[i])
            .map(|i| (i, slack[i]))
            .fold((usize::MAX, 0.0), |b, c| if c.1 < b.1 { c } else { b });
        if kkt.dual_sign > opts.kkt_tol && lmin < 0.0 {
            active[neg] = false;
        } else if kkt.inequality > opts.feas_tol && smin < 0.0 {
            active[viol] = true;
        } else {
            return None;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_toy_with_active_constraint() {
        // min x² + y² s.t. x + y ≥ 2
        let mut p = QpProblem::new(vec![2.0, 2.0], vec![0.0, 0.0]);
        p.ineq.push(vec![(0, 1.0), (1, 1.0)], 2.0);
        let s = solve_inequality_qp(&p, &QpOptions::default()).unwrap();
        assert!(s.is_optimal());
        assert!((s.primal[0] - 1.0).abs() < 1e-9 && (s.primal[1] - 1.0).abs() < 1e-9);
        assert!((s.dual_ineq[0] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn inactive_constraint_gives_zero_multiplier() {
        let mut p = QpProblem::new(vec![2.0, 2.0], vec![0.0, 0.0]);
        p.ineq.push(vec![(0, 1.0), (1, 1.0)], -10.0);
        let s = solve_inequality_qp(&p, &QpOptions::default()).unwrap();
        assert_eq!(s.primal, vec![0.0, 0.0]);
        assert_eq!(s.dual_ineq, vec![0.0]);
    }

    #[test]
    fn infeasible_box_is_detected() {
        let mut p = QpProblem::new(vec![1.0], vec![0.0]);
        p.ineq.push(vec![(0, 1.0)], 1.0);
        p.ineq.push(vec![(0, -1.0)], 0.0);
        let s = solve_inequality_qp(&p, &QpOptions::default()).unwrap();
        assert_ne!(s.status, QpStatus::Optimal);
    }

    #[test]
    fn mixed_equality_and_inequality() {
        // min ½‖x‖² − x₀ s.t. x₀ + x₁ + x₂ = 1, x₁ ≥ 0.5
        let mut p = QpProblem::new(vec![1.0; 3], vec![1.0, 0.0, 0.0]);
        p.eq.push(vec![(0, 1.0), (1, 1.0), (2, 1.0)], 1.0);
        p.ineq.push(vec![(1, 1.0)], 0.5);
        let s = solve_inequality_qp(&p, &QpOptions::default()).unwrap();
        assert!(s.is_optimal());
        // x₁ = 0.5 active; remaining: min ½(x₀² + x₂²) − x₀ s.t. x₀ + x₂ = 0.5
        assert!((s.primal[0] - 0.75).abs() < 1e-9);
        assert!((s.primal[1] - 0.5).abs() < 1e-9);
        assert!((s.primal[2] + 0.25).abs() < 1e-9);
        assert!(s.kkt.within(1e-9, 1e-8));
    }
}
