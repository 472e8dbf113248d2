//! Minimal-backward-error design: choose the per-element tensor field
//! closest to γI whose FEM stiffness has no negative off-diagonal entry, and
//! use that stiffness for the jump rates.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::analysis::{
    edge_order, gather, global_rows, isotropic_target, l2_refine, local_patch, local_row, scatter, weights,
    frobenius_problem, BackwardErrorReport, Norm, Scope, SolveOptions,
};
use crate::error::{Error, Result};
use crate::fem::{jump_rates, rate_epsilon, Discretization, EdgeOperator, JumpRates};
use crate::mesh::DualVoxels;
use crate::qp::{dualize, recover_primal, solve_dual, solve_inequality_qp, DualProblem, QpProblem, QpStatus};
use crate::tensor::ElementDiffusionField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverPath {
    Primal,
    Dual,
}

impl FromStr for SolverPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "primal" => Ok(SolverPath::Primal),
            "dual" => Ok(SolverPath::Dual),
            _ => Err(Error::InvalidArgument(format!("unknown solver path '{s}' (primal|dual)"))),
        }
    }
}

impl fmt::Display for SolverPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverPath::Primal => "primal",
            SolverPath::Dual => "dual",
        })
    }
}

#[derive(Debug, Clone)]
pub struct MbeResult {
    pub field: ElementDiffusionField,
    pub stiffness: EdgeOperator,
    pub report: BackwardErrorReport,
    pub scope: Scope,
    pub path: SolverPath,
    /// Number of QPs solved: 1 for the global problem, one per edge locally.
    pub solves: usize,
}

/// The QP behind [`design_global`] in the Frobenius norm.
pub fn global_design_problem(disc: &Discretization, gamma: f64) -> QpProblem {
    let dim = disc.mesh.dim();
    let w = weights(dim, &disc.geometry.volumes);
    let t = isotropic_target(dim, disc.mesh.num_simplices(), gamma);
    let mut p = frobenius_problem(w, &t);
    for row in global_rows(&disc.coeffs) {
        p.ineq.push(row, 0.0);
    }
    p
}

/// Global design: min Σ|T_k| ‖γ̃_k − γI‖² subject to Σ C γ̃ ≥ 0 on every edge.
pub fn design_global(disc: &Discretization, gamma: f64, norm: Norm, path: SolverPath, opts: &SolveOptions) -> Result<MbeResult> {
    let dim = disc.mesh.dim();
    let p = global_design_problem(disc, gamma);
    let mut x = match path {
        SolverPath::Primal => {
            let sol = solve_inequality_qp(&p, &opts.qp)?;
            require_optimal(sol.status, sol.kkt.max())?;
            sol.primal
        }
        SolverPath::Dual => {
            let d = dualize(&p)?;
            let sol = solve_dual(&d, &opts.qp)?;
            require_optimal(sol.status, f64::NAN)?;
            recover_primal(&sol, &p)?
        }
    };
    if norm == Norm::Spectral {
        let mut cone = ConeProjector::new(&p)?;
        x = l2_refine(dim, &disc.geometry.volumes, gamma, x, opts.l2_iterations, |z| cone.project(&p, z, opts))?;
    }
    finish(disc, x, gamma, Scope::Global, norm, path, 1, opts)
}

/// Local design: one sweep over the edges in seeded random order. Each step
/// re-optimizes the elements around an edge so that the edge entry is
/// non-negative and no neighbouring edge entry becomes negative, with the
/// neighbouring entries recomputed from the current field.
pub fn design_local(disc: &Discretization, gamma: f64, norm: Norm, seed: u64, opts: &SolveOptions) -> Result<MbeResult> {
    let dim = disc.mesh.dim();
    let mut field = ElementDiffusionField::isotropic(dim, disc.mesh.num_simplices(), gamma);
    let mut solves = 0;
    for e in edge_order(disc.edges.len(), seed, 0) {
        local_design_step(disc, &mut field, e, gamma, norm, opts).map_err(|err| {
            let (i, j) = disc.edges.edge(e);
            Error::LocalProblem(i, j, Box::new(err))
        })?;
        solves += 1;
    }
    finish(disc, field.into_vec(), gamma, Scope::Local, norm, SolverPath::Primal, solves, opts)
}

fn local_design_step(
    disc: &Discretization,
    field: &mut ElementDiffusionField,
    e: usize,
    gamma: f64,
    norm: Norm,
    opts: &SolveOptions,
) -> Result<()> {
    let dim = disc.mesh.dim();
    let (elements, others) = local_patch(disc, e);
    let vols: Vec<f64> = elements.iter().map(|&k| disc.geometry.volumes[k]).collect();
    let w = weights(dim, &vols);
    let t = isotropic_target(dim, elements.len(), gamma);
    let old = gather(field, &elements);
    let mut p = frobenius_problem(w, &t);
    p.ineq.push(local_row(&disc.coeffs, e, &elements), 0.0);
    for &m in &others {
        let row = local_row(&disc.coeffs, m, &elements);
        let inside: f64 = row.iter().map(|&(j, a)| a * old[j]).sum();
        let total = disc.coeffs.contract(m, field);
        // inside_new ≥ inside_old − S̃_m, i.e. the outside part is kept.
        p.ineq.push(row, inside - total);
    }
    let sol = solve_inequality_qp(&p, &opts.qp)?;
    require_optimal(sol.status, sol.kkt.max())?;
    let mut x = sol.primal;
    if norm == Norm::Spectral {
        x = l2_refine(dim, &vols, gamma, x, opts.l2_local_iterations, |z| {
            let mut q = p.clone();
            q.linear = q.hessian.iter().zip(z).map(|(h, v)| h * v).collect();
            q.offset = 0.0;
            let s = solve_inequality_qp(&q, &opts.qp)?;
            require_optimal(s.status, s.kkt.max())?;
            Ok(s.primal)
        })?;
    }
    scatter(field, &elements, &x);
    Ok(())
}

/// W-projection onto the cone {x : Cx ≥ 0} through the reduced dual, reusing
/// C W⁻¹ Cᵀ across calls.
struct ConeProjector {
    dual: DualProblem,
}

impl ConeProjector {
    fn new(p: &QpProblem) -> Result<Self> {
        Ok(Self { dual: dualize(p)? })
    }

    fn project(&mut self, p: &QpProblem, z: &[f64], opts: &SolveOptions) -> Result<Vec<f64>> {
        // With f = Wz the dual linear term C W⁻¹ f is simply Cz.
        self.dual.linear = p.ineq.apply(z);
        let sol = solve_dual(&self.dual, &opts.qp)?;
        require_optimal(sol.status, f64::NAN)?;
        let ctm = p.ineq.apply_transpose(&sol.mu, z.len());
        Ok(z.iter().zip(&ctm).zip(&p.hessian).map(|((a, b), h)| a + b / h).collect())
    }
}

fn require_optimal(status: QpStatus, residual: f64) -> Result<()> {
    match status {
        QpStatus::Optimal => Ok(()),
        QpStatus::Infeasible => Err(Error::Infeasible { residual }),
        QpStatus::MaxIterations => Err(Error::MaxIterations {
            iterations: 0,
            residual,
        }),
    }
}

/// Assembles S̃ from the field, clamps round-off negatives (within the QP
/// feasibility tolerance) to zero and builds the report.
#[allow(clippy::too_many_arguments)]
fn finish(
    disc: &Discretization,
    x: Vec<f64>,
    gamma: f64,
    scope: Scope,
    norm: Norm,
    path: SolverPath,
    solves: usize,
    opts: &SolveOptions,
) -> Result<MbeResult> {
    let field = ElementDiffusionField::from_vec(disc.mesh.dim(), x)?;
    let raw = disc.stiffness_from_gamma(&field)?;
    let tol = opts.qp.feas_tol * raw.max_abs();
    let mut offending = Vec::new();
    let mut stiffness = raw.clone();
    for e in 0..raw.num_edges() {
        let v = raw.upper(e);
        if v < 0.0 {
            if v < -tol {
                let (i, j) = raw.pairs()[e];
                offending.push((i, j, v));
            }
            stiffness.set_symmetric(e, 0.0);
        }
    }
    if !offending.is_empty() {
        return Err(Error::NegativeCoefficient { edges: offending });
    }
    stiffness.zero_row_sums();
    let target: Vec<f64> = stiffness.upper_values().to_vec();
    let report = BackwardErrorReport::new(disc, &field, gamma, scope, norm, &target);
    Ok(MbeResult {
        field,
        stiffness,
        report,
        scope,
        path,
        solves,
    })
}

/// Jump rates of the designed stiffness.
pub fn emit_rates(result: &MbeResult, voxels: &DualVoxels) -> Result<JumpRates> {
    debug_assert!(result.stiffness.min_off_diagonal() >= -rate_epsilon(&result.stiffness));
    jump_rates(&result.stiffness, voxels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::analyze_global;
    use crate::mesh::{generate_perturbed_square, obtuse_pair, structured_square};
    use crate::repair::{repair, RepairMethod};

    fn obtuse() -> Discretization {
        Discretization::new(obtuse_pair(100f64.to_radians()).unwrap()).unwrap()
    }

    #[test]
    fn valid_mesh_is_left_alone() {
        let disc = Discretization::new(structured_square(3)).unwrap();
        let s = disc.stiffness(1.0);
        let opts = SolveOptions::default();
        for r in [
            design_global(&disc, 1.0, Norm::Frobenius, SolverPath::Primal, &opts).unwrap(),
            design_global(&disc, 1.0, Norm::Frobenius, SolverPath::Dual, &opts).unwrap(),
            design_local(&disc, 1.0, Norm::Frobenius, 1, &opts).unwrap(),
        ] {
            assert!(r.report.eta_f < 1e-12);
            for e in 0..s.num_edges() {
                assert!((r.stiffness.upper(e) - s.upper(e)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn beats_nnfem_on_the_obtuse_pair() {
        let disc = obtuse();
        let opts = SolveOptions::default();
        let mbe = design_global(&disc, 1.0, Norm::Frobenius, SolverPath::Dual, &opts).unwrap();
        let nn = repair(&disc, RepairMethod::NnFem, 1.0).unwrap();
        let (_, rep) = analyze_global(&disc, &nn.stiffness, 1.0, Norm::Frobenius, &opts).unwrap();
        assert!(mbe.report.eta_f < rep.eta_f - 1e-6);
        assert!(mbe.stiffness.min_off_diagonal() >= 0.0);
    }

    #[test]
    fn primal_and_dual_agree() {
        let opts = SolveOptions::default();
        for seed in 0..3 {
            let disc = Discretization::new(generate_perturbed_square(4, 0.35, seed).unwrap()).unwrap();
            let a = design_global(&disc, 1.0, Norm::Frobenius, SolverPath::Primal, &opts).unwrap();
            let b = design_global(&disc, 1.0, Norm::Frobenius, SolverPath::Dual, &opts).unwrap();
            let diff = a
                .field
                .as_slice()
                .iter()
                .zip(b.field.as_slice())
                .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            assert!(diff < 1e-6, "seed {seed}: {diff}");
        }
    }

    #[test]
    fn local_design_is_valid_and_no_better_than_global() {
        let opts = SolveOptions::default();
        let disc = Discretization::new(generate_perturbed_square(5, 0.35, 4).unwrap()).unwrap();
        let g = design_global(&disc, 1.0, Norm::Frobenius, SolverPath::Dual, &opts).unwrap();
        let l = design_local(&disc, 1.0, Norm::Frobenius, 9, &opts).unwrap();
        assert_eq!(l.solves, disc.edges.len());
        assert!(l.stiffness.min_off_diagonal() >= 0.0);
        assert!(l.report.max_residual < 1e-8);
        assert!(g.report.eta_f <= l.report.eta_f + 1e-10);
    }

    #[test]
    fn spectral_design_improves_eta_2() {
        let disc = obtuse();
        let opts = SolveOptions {
            l2_iterations: 300,
            ..Default::default()
        };
        let f = design_global(&disc, 1.0, Norm::Frobenius, SolverPath::Dual, &opts).unwrap();
        let two = design_global(&disc, 1.0, Norm::Spectral, SolverPath::Dual, &opts).unwrap();
        assert!(two.report.eta_2 <= f.report.eta_2 + 1e-15);
        assert!(two.stiffness.min_off_diagonal() >= 0.0);
    }

    #[test]
    fn rates_have_zero_row_sum_exit() {
        let disc = obtuse();
        let r = design_global(&disc, 1.0, Norm::Frobenius, SolverPath::Dual, &SolveOptions::default()).unwrap();
        let rates = emit_rates(&r, &disc.voxels).unwrap();
        for j in 0..disc.mesh.num_nodes() {
            let expected = -r.stiffness.diagonal()[j] / disc.voxels.volumes[j];
            assert!((rates.total(j) - expected).abs() < 1e-12 * expected.abs().max(1.0));
        }
    }
}
