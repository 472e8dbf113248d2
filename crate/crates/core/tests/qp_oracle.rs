//! Interior point, dual path and brute-force enumeration on random small
//! problems.

use meso_core::qp::dense::brute_force;
use meso_core::qp::{dualize, kkt_residuals, recover_primal, solve_dual, solve_inequality_qp, QpOptions, QpProblem};
use proptest::prelude::*;

fn problem(n: usize, h: Vec<f64>, f: Vec<f64>, rows: Vec<Vec<f64>>, rhs: Vec<f64>) -> QpProblem {
    let mut p = QpProblem::new(h[..n].to_vec(), f[..n].to_vec());
    for (row, d) in rows.into_iter().zip(rhs) {
        let sparse: Vec<(usize, f64)> = row[..n].iter().enumerate().filter(|(_, a)| a.abs() > 0.1).map(|(j, &a)| (j, a)).collect();
        if !sparse.is_empty() {
            p.ineq.push(sparse, d);
        }
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn interior_point_matches_enumeration(
        n in 1usize..6,
        h in prop::collection::vec(0.1f64..5.0, 6),
        f in prop::collection::vec(-3.0f64..3.0, 6),
        rows in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 6), 0..7),
        rhs in prop::collection::vec(-1.0f64..0.0, 7),
    ) {
        // rhs ≤ 0 keeps x = 0 feasible.
        let p = problem(n, h, f, rows, rhs);
        let opts = QpOptions::default();
        let ipm = solve_inequality_qp(&p, &opts).unwrap();
        prop_assert!(ipm.is_optimal());
        let oracle = brute_force(&p, 1e-9).unwrap();
        prop_assert!((ipm.objective - oracle.objective).abs() <= 1e-7 * (1.0 + oracle.objective.abs()));
        let kkt = kkt_residuals(&p, &ipm.primal, &ipm.dual_eq, &ipm.dual_ineq);
        prop_assert!(kkt.within(1e-8, 1e-8));
    }

    #[test]
    fn dual_path_matches_primal_on_cones(
        n in 1usize..6,
        h in prop::collection::vec(0.1f64..5.0, 6),
        f in prop::collection::vec(-3.0f64..3.0, 6),
        rows in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 6), 1..7),
    ) {
        let m = rows.len();
        let p = problem(n, h, f, rows, vec![0.0; m]);
        let opts = QpOptions::default();
        let primal = solve_inequality_qp(&p, &opts).unwrap();
        let d = dualize(&p).unwrap();
        let sol = solve_dual(&d, &opts).unwrap();
        let x = recover_primal(&sol, &p).unwrap();
        let scale = 1.0 + primal.primal.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (a, b) in x.iter().zip(&primal.primal) {
            prop_assert!((a - b).abs() <= 1e-6 * scale, "{a} vs {b}");
        }
        // Strong duality: primal optimum = −(dual optimum + constant).
        let gap = primal.objective + sol.objective + d.constant;
        prop_assert!(gap.abs() <= 1e-8 * (1.0 + primal.objective.abs()));
    }
}

#[test]
fn equality_and_inequality_mix_matches_oracle() {
    // min ½‖x‖² − (1, 2, 3)·x  s.t. x₀ + x₁ + x₂ = 1, x₀ ≥ 0.4, x₂ ≤ 0.2
    let mut p = QpProblem::new(vec![1.0; 3], vec![1.0, 2.0, 3.0]);
    p.eq.push(vec![(0, 1.0), (1, 1.0), (2, 1.0)], 1.0);
    p.ineq.push(vec![(0, 1.0)], 0.4);
    p.ineq.push(vec![(2, -1.0)], -0.2);
    let ipm = solve_inequality_qp(&p, &QpOptions::default()).unwrap();
    let oracle = brute_force(&p, 1e-10).unwrap();
    assert_eq!(oracle.active, vec![0, 1]);
    for (a, b) in ipm.primal.iter().zip(&oracle.primal) {
        assert!((a - b).abs() < 1e-9);
    }
    assert!((oracle.primal[1] - 0.4).abs() < 1e-12);
}
