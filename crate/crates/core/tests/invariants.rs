//! Structural invariants checked over randomly jittered meshes.

use meso_core::analysis::{Norm, SolveOptions};
use meso_core::design::{design_global, design_local, emit_rates, SolverPath};
use meso_core::fem::{negative_edges, Discretization, EdgeOperator};
use meso_core::mesh::generate_perturbed_square;
use meso_core::repair::{repair, RepairMethod};
use meso_core::ssa;
use proptest::prelude::*;

fn disc(n: usize, jitter: f64, seed: u64) -> Discretization {
    Discretization::new(generate_perturbed_square(n, jitter, seed).unwrap()).unwrap()
}

fn assert_stiffness_shape(s: &EdgeOperator, what: &str) {
    let scale = s.max_abs().max(1.0);
    assert!(s.max_row_sum() <= 1e-12 * scale, "{what}: row sum {}", s.max_row_sum());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn stiffness_is_symmetric_with_zero_row_sums(n in 3usize..8, jitter in 0.0f64..0.4, seed in any::<u64>(), gamma in 0.1f64..10.0) {
        let d = disc(n, jitter, seed);
        let s = d.stiffness(gamma);
        prop_assert!(s.is_symmetric());
        assert_stiffness_shape(&s, "fem");
        // A = diag(|V|) and D = A⁻¹S, so Σ_i |V_i| D_ij = 0 as well.
        let g = d.generator(&s);
        let mass = g.mul_transpose_vec(&d.voxels.volumes);
        prop_assert!(mass.iter().all(|m| m.abs() <= 1e-10 * g.max_abs().max(1.0)));
    }

    #[test]
    fn every_repair_yields_a_generator(n in 3usize..7, jitter in 0.1f64..0.4, seed in any::<u64>()) {
        let d = disc(n, jitter, seed);
        let fem = d.stiffness(1.0);
        let mut negatives: Vec<usize> = negative_edges(&fem).into_iter().map(|(e, _)| e).collect();
        negatives.sort_unstable();
        for method in RepairMethod::BUILTIN {
            let r = repair(&d, method, 1.0).unwrap();
            let s = &r.stiffness;
            let tol = 1e-12 * s.max_abs().max(1.0);
            prop_assert!(s.min_off_diagonal() >= -tol, "{method}: {}", s.min_off_diagonal());
            assert_stiffness_shape(s, method.name());
            prop_assert!(s.check_generator_contract(1e-10).is_ok(), "{method}: {:?}", s.check_generator_contract(1e-10));
            if negatives.is_empty() {
                prop_assert!(r.max_modification <= tol, "{method} touched an M-matrix");
            }
            if method == RepairMethod::NnFem {
                prop_assert_eq!(&r.changed_edges, &negatives);
            }
        }
    }

    #[test]
    fn global_design_beats_local_and_satisfies_the_cone(n in 3usize..6, jitter in 0.15f64..0.4, seed in any::<u64>()) {
        let d = disc(n, jitter, seed);
        let opts = SolveOptions::default();
        let global = design_global(&d, 1.0, Norm::Frobenius, SolverPath::Primal, &opts).unwrap();
        let local = design_local(&d, 1.0, Norm::Frobenius, seed, &opts).unwrap();
        for r in [&global, &local] {
            let s = &r.stiffness;
            prop_assert!(s.min_off_diagonal() >= -1e-9 * s.max_abs());
            prop_assert!(r.report.max_residual <= 1e-10);
            let rates = emit_rates(r, &d.voxels).unwrap();
            for j in 0..rates.num_voxels() {
                prop_assert!(rates.outgoing(j).iter().all(|&(_, l)| l >= 0.0));
            }
        }
        prop_assert!(global.report.eta_f <= local.report.eta_f * (1.0 + 1e-6) + 1e-12,
            "global {} local {}", global.report.eta_f, local.report.eta_f);
        if negative_edges(&d.stiffness(1.0)).is_empty() {
            prop_assert!(global.report.eta_f <= 1e-12);
        }
    }

    #[test]
    fn ssa_conserves_molecules(seed in any::<u64>(), stream in 0u64..4, total in 1u64..200) {
        let d = disc(4, 0.3, 7);
        let r = design_global(&d, 1.0, Norm::Frobenius, SolverPath::Dual, &SolveOptions::default()).unwrap();
        let rates = emit_rates(&r, &d.voxels).unwrap();
        let mut initial = vec![0u64; rates.num_voxels()];
        initial[0] = total / 2;
        initial[rates.num_voxels() - 1] = total - total / 2;
        let run = ssa::run(&rates, &initial, 0.05, &[0.0, 0.01, 0.02, 0.05], seed, stream).unwrap();
        for snap in &run.snapshots {
            prop_assert_eq!(snap.counts.iter().sum::<u64>(), total);
        }
        prop_assert_eq!(run.state.counts.iter().sum::<u64>(), total);
    }
}
