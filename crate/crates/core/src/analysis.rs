//! Backward analysis: recover a per-element diffusion tensor field whose
//! standard FEM stiffness equals a given repaired S̃, and measure how far it
//! is from the isotropic γI.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::{Discretization, EdgeCoefficients, EdgeOperator};
use crate::linalg::{PivotPolicy, SkylineLdl};
use crate::qp::{equality_kkt, gram, solve_equality_qp, QpOptions, QpProblem, QpStatus, DEPENDENT_ROW_TOL};
use crate::tensor::{frobenius_deviation, spectral_deviation, sym_eigen, ElementDiffusionField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Local,
    Global,
}

impl FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local" => Ok(Scope::Local),
            "global" => Ok(Scope::Global),
            _ => Err(Error::InvalidArgument(format!("unknown scope '{s}' (local|global)"))),
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::Local => "local",
            Scope::Global => "global",
        })
    }
}

/// Matrix norm used in the objective Σ|T_k| ‖γ̃_k − γI‖².
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Norm {
    #[serde(rename = "f")]
    Frobenius,
    #[serde(rename = "2")]
    Spectral,
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f" | "F" | "frobenius" => Ok(Norm::Frobenius),
            "2" | "l2" | "spectral" => Ok(Norm::Spectral),
            _ => Err(Error::InvalidArgument(format!("unknown norm '{s}' (f|2)"))),
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Norm::Frobenius => "f",
            Norm::Spectral => "2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub qp: QpOptions,
    /// Projected subgradient steps for the spectral-norm objective on the
    /// global problem.
    pub l2_iterations: usize,
    /// The same for each local problem.
    pub l2_local_iterations: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            qp: QpOptions::default(),
            l2_iterations: 2000,
            l2_local_iterations: 200,
        }
    }
}

/// η₂ and η_F, volume-weighted RMS of ‖γ̃_k − γI‖ over the domain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaMetrics {
    pub eta_2: f64,
    pub eta_f: f64,
    /// e_k = ‖γ̃_k − γI‖₂.
    pub per_element: Vec<f64>,
}

pub fn eta_metrics(field: &ElementDiffusionField, volumes: &[f64], gamma: f64) -> EtaMetrics {
    let d = field.dim();
    let total: f64 = volumes.iter().sum();
    let mut s2 = 0.0;
    let mut sf = 0.0;
    let per_element: Vec<f64> = (0..field.len())
        .map(|k| {
            let g = field.element(k);
            let e2 = spectral_deviation(d, g, gamma);
            let ef = frobenius_deviation(d, g, gamma);
            s2 += volumes[k] * e2 * e2;
            sf += volumes[k] * ef * ef;
            e2
        })
        .collect();
    EtaMetrics {
        eta_2: (s2 / total).sqrt(),
        eta_f: (sf / total).sqrt(),
        per_element,
    }
}

/// Per-element eigen diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Definiteness {
    pub spd: Vec<bool>,
    /// q_k = λ_min/λ_max.
    pub eigen_ratio: Vec<f64>,
    /// Unit eigenvector of λ_max (first `dim` entries used).
    pub principal: Vec<[f64; 3]>,
    /// g = min_k λ_min.
    pub min_eigenvalue: f64,
    /// G = max_k λ_max.
    pub max_eigenvalue: f64,
}

impl Definiteness {
    pub fn all_spd(&self) -> bool {
        self.spd.iter().all(|&b| b)
    }
}

pub fn definiteness_report(field: &ElementDiffusionField) -> Definiteness {
    let mut out = Definiteness {
        spd: Vec::with_capacity(field.len()),
        eigen_ratio: Vec::with_capacity(field.len()),
        principal: Vec::with_capacity(field.len()),
        min_eigenvalue: f64::INFINITY,
        max_eigenvalue: f64::NEG_INFINITY,
    };
    for k in 0..field.len() {
        let e = sym_eigen(field.dim(), field.element(k));
        out.spd.push(e.min() > 0.0);
        out.eigen_ratio.push(e.min() / e.max());
        out.principal.push(e.principal());
        out.min_eigenvalue = out.min_eigenvalue.min(e.min());
        out.max_eigenvalue = out.max_eigenvalue.max(e.max());
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct BackwardErrorReport {
    pub scope: Scope,
    pub norm: Norm,
    pub gamma: f64,
    pub eta_2: f64,
    pub eta_f: f64,
    pub per_element_error: Vec<f64>,
    pub spd_flags: Vec<bool>,
    pub eigen_ratio: Vec<f64>,
    pub principal_directions: Vec<[f64; 3]>,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub all_spd: bool,
    /// max_e |Σ C γ̃ − S̃_e| / (1 + |S̃_e|).
    pub max_residual: f64,
}

impl BackwardErrorReport {
    pub fn new(disc: &Discretization, field: &ElementDiffusionField, gamma: f64, scope: Scope, norm: Norm, target: &[f64]) -> Self {
        let eta = eta_metrics(field, &disc.geometry.volumes, gamma);
        let def = definiteness_report(field);
        if !def.all_spd() {
            log::info!("recovered field has indefinite elements; forward-error bounds do not apply");
        }
        Self {
            scope,
            norm,
            gamma,
            eta_2: eta.eta_2,
            eta_f: eta.eta_f,
            per_element_error: eta.per_element,
            all_spd: def.all_spd(),
            spd_flags: def.spd,
            eigen_ratio: def.eigen_ratio,
            principal_directions: def.principal,
            min_eigenvalue: def.min_eigenvalue,
            max_eigenvalue: def.max_eigenvalue,
            max_residual: constraint_residual(&disc.coeffs, field, target),
        }
    }

    /// η in the norm the field was optimized for.
    pub fn eta(&self) -> f64 {
        match self.norm {
            Norm::Frobenius => self.eta_f,
            Norm::Spectral => self.eta_2,
        }
    }
}

/// Edge values of the symmetric part of S̃.
pub fn symmetric_edge_values(s: &EdgeOperator) -> Vec<f64> {
    (0..s.num_edges()).map(|e| 0.5 * (s.upper(e) + s.lower(e))).collect()
}

pub fn constraint_residual(coeffs: &EdgeCoefficients, field: &ElementDiffusionField, target: &[f64]) -> f64 {
    (0..coeffs.num_edges())
        .map(|e| (coeffs.contract(e, field) - target[e]).abs() / (1.0 + target[e].abs()))
        .fold(0.0, f64::max)
}

/// Frobenius weights per unknown: |T_k| on diagonal components, 2|T_k| on
/// off-diagonal ones, so that xᵀWx = Σ|T_k| ‖γ_k‖_F².
pub(crate) fn weights(dim: usize, volumes: &[f64]) -> Vec<f64> {
    let l = crate::fem::components(dim);
    volumes
        .iter()
        .flat_map(|&v| (0..l).map(move |c| if c < dim { v } else { 2.0 * v }))
        .collect()
}

/// γI flattened for `elements` elements.
pub(crate) fn isotropic_target(dim: usize, elements: usize, gamma: f64) -> Vec<f64> {
    ElementDiffusionField::isotropic(dim, elements, gamma).into_vec()
}

/// ½(x − t)ᵀW(x − t) as a QP without constraints.
pub(crate) fn frobenius_problem(w: Vec<f64>, target: &[f64]) -> QpProblem {
    let linear: Vec<f64> = w.iter().zip(target).map(|(a, b)| a * b).collect();
    let offset = 0.5 * linear.iter().zip(target).map(|(a, b)| a * b).sum::<f64>();
    let mut p = QpProblem::new(w, linear);
    p.offset = offset;
    p
}

/// Constraint row of edge `e` restricted to `elements` (sorted), in the
/// local numbering given by the position of each element.
pub(crate) fn local_row(coeffs: &EdgeCoefficients, e: usize, elements: &[usize]) -> Vec<(usize, f64)> {
    let l = coeffs.components();
    let mut row = Vec::new();
    for (k, c) in coeffs.row(e) {
        if let Ok(p) = elements.binary_search(k) {
            row.extend((0..l).map(|m| (p * l + m, c[m])));
        }
    }
    row
}

/// Global constraint rows for every edge.
pub(crate) fn global_rows(coeffs: &EdgeCoefficients) -> Vec<Vec<(usize, f64)>> {
    let l = coeffs.components();
    (0..coeffs.num_edges())
        .map(|e| {
            coeffs
                .row(e)
                .iter()
                .flat_map(|(k, c)| (0..l).map(move |m| (k * l + m, c[m])))
                .collect()
        })
        .collect()
}

/// W-orthogonal projection onto {x : Rx = b}.
pub(crate) struct AffineProjector {
    rows: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
    winv: Vec<f64>,
    ldl: SkylineLdl,
}

impl AffineProjector {
    pub(crate) fn new(rows: Vec<Vec<(usize, f64)>>, rhs: Vec<f64>, w: &[f64]) -> Result<Self> {
        let winv: Vec<f64> = w.iter().map(|v| 1.0 / v).collect();
        let refs: Vec<&[(usize, f64)]> = rows.iter().map(Vec::as_slice).collect();
        let ldl = SkylineLdl::factor(&gram(&refs, &winv), PivotPolicy::DropDependent { tol: DEPENDENT_ROW_TOL })?;
        Ok(Self { rows, rhs, winv, ldl })
    }

    pub(crate) fn project(&self, z: &[f64]) -> Vec<f64> {
        let r: Vec<f64> = self
            .rows
            .iter()
            .zip(&self.rhs)
            .map(|(row, b)| b - row.iter().map(|&(j, a)| a * z[j]).sum::<f64>())
            .collect();
        let y = self.ldl.solve(&r);
        let mut x = z.to_vec();
        for (row, yi) in self.rows.iter().zip(y) {
            for &(j, a) in row {
                x[j] += self.winv[j] * a * yi;
            }
        }
        x
    }
}

/// Σ_k vol_k ‖x_k − γI‖₂².
pub(crate) fn spectral_objective(dim: usize, vols: &[f64], gamma: f64, x: &[f64]) -> f64 {
    let l = crate::fem::components(dim);
    vols.iter()
        .enumerate()
        .map(|(k, v)| v * spectral_deviation(dim, &x[k * l..(k + 1) * l], gamma).powi(2))
        .sum()
}

/// Projected subgradient descent on Σ vol_k ‖x_k − γI‖₂² in the W metric,
/// started at the projected point `x0`; returns the best iterate seen.
pub(crate) fn l2_refine(
    dim: usize,
    vols: &[f64],
    gamma: f64,
    x0: Vec<f64>,
    iterations: usize,
    mut project: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    let l = crate::fem::components(dim);
    let idx = crate::fem::component_indices(dim);
    let mut best_val = spectral_objective(dim, vols, gamma, &x0);
    let radius = 0.5 * best_val.sqrt();
    let mut best = x0.clone();
    let mut x = x0;
    if best_val == 0.0 {
        return Ok(best);
    }
    for it in 0..iterations {
        let mut g = vec![0.0; x.len()];
        let mut gnorm2 = 0.0;
        for (k, &v) in vols.iter().enumerate() {
            let e = sym_eigen(dim, &x[k * l..(k + 1) * l]);
            let (lam, vec) = if (e.min() - gamma).abs() > (e.max() - gamma).abs() {
                (e.min(), e.vectors[0])
            } else {
                (e.max(), e.principal())
            };
            let s = 2.0 * (lam - gamma);
            for (c, &(a, b)) in idx.iter().enumerate() {
                let gc = s * vec[a] * vec[b];
                g[k * l + c] = gc;
                gnorm2 += if a == b { v } else { 2.0 * v } * gc * gc;
            }
        }
        if gnorm2 == 0.0 {
            break;
        }
        let t = radius / (gnorm2.sqrt() * ((it + 1) as f64).sqrt());
        let z: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - t * b).collect();
        x = project(&z)?;
        let val = spectral_objective(dim, vols, gamma, &x);
        if val < best_val {
            best_val = val;
            best.clone_from(&x);
        }
    }
    Ok(best)
}

/// The equality-constrained QP behind [`analyze_global`] in the Frobenius
/// norm.
pub fn global_analysis_problem(disc: &Discretization, s_tilde: &EdgeOperator, gamma: f64) -> Result<QpProblem> {
    check_pattern(disc, s_tilde)?;
    let dim = disc.mesh.dim();
    let w = weights(dim, &disc.geometry.volumes);
    let t = isotropic_target(dim, disc.mesh.num_simplices(), gamma);
    let mut p = frobenius_problem(w, &t);
    for (row, s) in global_rows(&disc.coeffs).into_iter().zip(symmetric_edge_values(s_tilde)) {
        p.eq.push(row, s);
    }
    Ok(p)
}

/// Global minimizer of Σ|T_k| ‖γ̃_k − γI‖² subject to reproducing S̃ on
/// every edge.
pub fn analyze_global(
    disc: &Discretization,
    s_tilde: &EdgeOperator,
    gamma: f64,
    norm: Norm,
    opts: &SolveOptions,
) -> Result<(ElementDiffusionField, BackwardErrorReport)> {
    let p = global_analysis_problem(disc, s_tilde, gamma)?;
    let dim = disc.mesh.dim();
    let target_s = p.eq.rhs.clone();
    let w = weights(dim, &disc.geometry.volumes);
    let sol = solve_equality_qp(&p, &opts.qp)?;
    if sol.status != QpStatus::Optimal {
        return Err(Error::Infeasible {
            residual: sol.kkt.equality,
        });
    }
    let mut x = sol.primal;
    if norm == Norm::Spectral {
        let proj = AffineProjector::new(p.eq.rows.clone(), p.eq.rhs.clone(), &w)?;
        x = l2_refine(dim, &disc.geometry.volumes, gamma, x, opts.l2_iterations, |z| Ok(proj.project(z)))?;
    }
    let field = ElementDiffusionField::from_vec(dim, x)?;
    let report = BackwardErrorReport::new(disc, &field, gamma, Scope::Global, norm, &target_s);
    Ok((field, report))
}

/// One sweep of edge-local problems in a seeded random order: for each edge
/// the fields of its incident elements are re-optimized so that the edge
/// reproduces S̃ while every neighbouring edge keeps the contribution it
/// receives from those elements.
pub fn analyze_local(
    disc: &Discretization,
    s_tilde: &EdgeOperator,
    gamma: f64,
    norm: Norm,
    seed: u64,
    opts: &SolveOptions,
) -> Result<(ElementDiffusionField, BackwardErrorReport)> {
    let (field, mut reports) = iterate_local(disc, s_tilde, gamma, norm, seed, 1, opts)?;
    Ok((field, reports.pop().expect("one sweep")))
}

/// Repeated local sweeps, each started from the previous field with a fresh
/// edge order (stream `pass` of the seeded generator).
pub fn iterate_local(
    disc: &Discretization,
    s_tilde: &EdgeOperator,
    gamma: f64,
    norm: Norm,
    seed: u64,
    iterations: usize,
    opts: &SolveOptions,
) -> Result<(ElementDiffusionField, Vec<BackwardErrorReport>)> {
    if iterations == 0 {
        return Err(Error::InvalidArgument("at least one local sweep is required".into()));
    }
    check_pattern(disc, s_tilde)?;
    let dim = disc.mesh.dim();
    let target_s = symmetric_edge_values(s_tilde);
    let mut field = ElementDiffusionField::isotropic(dim, disc.mesh.num_simplices(), gamma);
    let mut reports = Vec::with_capacity(iterations);
    for pass in 0..iterations {
        for e in edge_order(disc.edges.len(), seed, pass as u64) {
            local_analysis_step(disc, &mut field, e, target_s[e], gamma, norm, opts).map_err(|err| {
                let (i, j) = disc.edges.edge(e);
                Error::LocalProblem(i, j, Box::new(err))
            })?;
        }
        reports.push(BackwardErrorReport::new(disc, &field, gamma, Scope::Local, norm, &target_s));
    }
    Ok((field, reports))
}

pub(crate) fn edge_order(n: usize, seed: u64, stream: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Elements incident to edge `e` (sorted) and the other edges they touch.
pub(crate) fn local_patch(disc: &Discretization, e: usize) -> (Vec<usize>, Vec<usize>) {
    let elements: Vec<usize> = disc.coeffs.row(e).iter().map(|(k, _)| *k).collect::<BTreeSet<_>>().into_iter().collect();
    let others: BTreeSet<usize> = elements
        .iter()
        .flat_map(|&k| disc.edges.element_edges(k).iter().copied())
        .filter(|&m| m != e)
        .collect();
    (elements, others.into_iter().collect())
}

pub(crate) fn gather(field: &ElementDiffusionField, elements: &[usize]) -> Vec<f64> {
    elements.iter().flat_map(|&k| field.element(k).iter().copied()).collect()
}

pub(crate) fn scatter(field: &mut ElementDiffusionField, elements: &[usize], x: &[f64]) {
    let l = x.len() / elements.len().max(1);
    for (p, &k) in elements.iter().enumerate() {
        field.element_mut(k).copy_from_slice(&x[p * l..(p + 1) * l]);
    }
}

fn local_analysis_step(
    disc: &Discretization,
    field: &mut ElementDiffusionField,
    e: usize,
    s_e: f64,
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
    let mut rows = vec![local_row(&disc.coeffs, e, &elements)];
    let mut rhs = vec![s_e];
    for &m in &others {
        let row = local_row(&disc.coeffs, m, &elements);
        let current: f64 = row.iter().map(|&(j, a)| a * old[j]).sum();
        rows.push(row);
        rhs.push(current);
    }
    let p = frobenius_problem(w.clone(), &t);
    let refs: Vec<&[(usize, f64)]> = rows.iter().map(Vec::as_slice).collect();
    let (mut x, _) = equality_kkt(&p, &refs, &rhs)?;
    let scale = 1.0 + rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let residual = rows
        .iter()
        .zip(&rhs)
        .map(|(row, b)| (row.iter().map(|&(j, a)| a * x[j]).sum::<f64>() - b).abs())
        .fold(0.0, f64::max);
    if residual > opts.qp.feas_tol * scale {
        return Err(Error::Singular {
            pivot: e,
            value: residual,
        });
    }
    if norm == Norm::Spectral {
        let proj = AffineProjector::new(rows, rhs, &w)?;
        x = l2_refine(dim, &vols, gamma, x, opts.l2_local_iterations, |z| Ok(proj.project(z)))?;
    }
    scatter(field, &elements, &x);
    Ok(())
}

fn check_pattern(disc: &Discretization, s: &EdgeOperator) -> Result<()> {
    if s.n() != disc.mesh.num_nodes() || s.pairs() != disc.edges.edges() {
        return Err(Error::InvalidArgument("stiffness pattern does not match the mesh edges".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_perturbed_square, obtuse_pair, rhombus, structured_square};
    use crate::repair::{repair, RepairMethod};

    #[test]
    fn unrepaired_stiffness_gives_isotropic_field() {
        let disc = Discretization::new(generate_perturbed_square(4, 0.35, 2).unwrap()).unwrap();
        let s = disc.stiffness(1.5);
        let opts = SolveOptions::default();
        let (f, r) = analyze_global(&disc, &s, 1.5, Norm::Frobenius, &opts).unwrap();
        assert!(r.eta_f < 1e-12 && r.eta_2 < 1e-12);
        assert!(f.as_slice().iter().enumerate().all(|(i, v)| (v - if i % 3 < 2 { 1.5 } else { 0.0 }).abs() < 1e-12));
        let (_, r) = analyze_local(&disc, &s, 1.5, Norm::Frobenius, 7, &opts).unwrap();
        assert!(r.eta_f < 1e-12);
    }

    #[test]
    fn eta_single_element_examples() {
        let vols = [2.0];
        let a = 0.3;
        let f = ElementDiffusionField::from_vec(2, vec![1.0 + a, 1.0, 0.0]).unwrap();
        let m = eta_metrics(&f, &vols, 1.0);
        assert!((m.eta_2 - a).abs() < 1e-15 && (m.eta_f - a).abs() < 1e-15);
        let f = ElementDiffusionField::from_vec(2, vec![1.0 + a, 1.0 - a, 0.0]).unwrap();
        let m = eta_metrics(&f, &vols, 1.0);
        assert!((m.eta_2 - a).abs() < 1e-15);
        assert!((m.eta_f - a * 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn definiteness_examples() {
        let f = ElementDiffusionField::from_vec(2, vec![2.0, 0.5, 0.0, 1.0, 1.0, 0.6, 1.0, 1.0, 0.0]).unwrap();
        let d = definiteness_report(&f);
        assert!((d.eigen_ratio[0] - 0.25).abs() < 1e-15);
        assert!((d.principal[0][0].abs() - 1.0).abs() < 1e-15);
        assert!((d.eigen_ratio[1] - 0.25).abs() < 1e-12);
        let s = 0.5f64.sqrt();
        assert!((d.principal[1][0].abs() - s).abs() < 1e-12 && (d.principal[1][1].abs() - s).abs() < 1e-12);
        assert_eq!(d.eigen_ratio[2], 1.0);
        assert!(d.all_spd());
        assert_eq!((d.min_eigenvalue, d.max_eigenvalue), (0.4, 2.0));
    }

    #[test]
    fn local_never_beats_global_and_both_feasible() {
        let opts = SolveOptions::default();
        for seed in 0..3 {
            let disc = Discretization::new(generate_perturbed_square(4, 0.35, seed).unwrap()).unwrap();
            let r = repair(&disc, RepairMethod::NnFem, 1.0).unwrap();
            let (_, g) = analyze_global(&disc, &r.stiffness, 1.0, Norm::Frobenius, &opts).unwrap();
            let (_, l) = analyze_local(&disc, &r.stiffness, 1.0, Norm::Frobenius, seed, &opts).unwrap();
            assert!(g.max_residual < 1e-10 && l.max_residual < 1e-10);
            assert!(g.eta_f <= l.eta_f + 1e-10);
        }
    }

    #[test]
    fn spectral_path_improves_on_frobenius() {
        let disc = Discretization::new(obtuse_pair(100f64.to_radians()).unwrap()).unwrap();
        let r = repair(&disc, RepairMethod::NnFem, 1.0).unwrap();
        let opts = SolveOptions::default();
        let (_, f) = analyze_global(&disc, &r.stiffness, 1.0, Norm::Frobenius, &opts).unwrap();
        let (_, two) = analyze_global(&disc, &r.stiffness, 1.0, Norm::Spectral, &opts).unwrap();
        assert!(two.eta_2 <= f.eta_2 + 1e-15);
        assert!(f.eta_2 <= 2f64.sqrt() * two.eta_2);
        assert!(two.max_residual < 1e-10);
    }

    #[test]
    fn iterated_sweeps_stay_feasible() {
        let disc = Discretization::new(generate_perturbed_square(4, 0.35, 5).unwrap()).unwrap();
        let r = repair(&disc, RepairMethod::NnFem, 1.0).unwrap();
        let opts = SolveOptions::default();
        let (_, one) = analyze_local(&disc, &r.stiffness, 1.0, Norm::Frobenius, 3, &opts).unwrap();
        let (_, reps) = iterate_local(&disc, &r.stiffness, 1.0, Norm::Frobenius, 3, 4, &opts).unwrap();
        assert_eq!(reps[0].eta_f, one.eta_f);
        assert!(reps.iter().all(|r| r.max_residual < 1e-9));
    }

    #[test]
    fn local_problem_sizes() {
        let disc = Discretization::new(rhombus()).unwrap();
        let e = disc.edges.find(0, 1).unwrap();
        let (elements, others) = local_patch(&disc, e);
        assert_eq!(elements.len() * 3, 6);
        assert_eq!(others.len() + 1, 5);
        let disc = Discretization::new(structured_square(2)).unwrap();
        let e = disc.edges.find(0, 1).unwrap();
        let (elements, others) = local_patch(&disc, e);
        assert_eq!((elements.len() * 3, others.len() + 1), (3, 3));
    }

    #[test]
    fn pattern_mismatch_is_rejected() {
        let a = Discretization::new(rhombus()).unwrap();
        let b = Discretization::new(structured_square(2)).unwrap();
        assert!(analyze_global(&a, &b.stiffness(1.0), 1.0, Norm::Frobenius, &SolveOptions::default()).is_err());
    }
}
