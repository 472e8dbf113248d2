//! Baseline repairs that force non-negative off-diagonal stiffness entries.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::{generator, negative_edges, stiffness_from_generator, Discretization, EdgeOperator, OperatorRole};
use crate::linalg::{dot, norm2};
use crate::mesh::{dual_voxels, triangle_circumcenter, tet_circumcenter, DualVoxels, Mesh, Point};

const MAX_SWEEPS: usize = 100;
const NEARNESS_ITERATIONS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum RepairMethod {
    #[serde(rename = "nnfem")]
    NnFem,
    #[serde(rename = "fvm")]
    Fvm,
    #[serde(rename = "viscosity")]
    Viscosity,
    #[serde(rename = "nearness-f")]
    NearnessF,
    #[serde(rename = "nearness-2")]
    Nearness2,
    /// A matrix produced elsewhere and read from disk.
    #[serde(rename = "external")]
    External,
}

impl RepairMethod {
    pub const BUILTIN: [RepairMethod; 5] = [
        RepairMethod::NnFem,
        RepairMethod::Fvm,
        RepairMethod::Viscosity,
        RepairMethod::NearnessF,
        RepairMethod::Nearness2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RepairMethod::NnFem => "nnfem",
            RepairMethod::Fvm => "fvm",
            RepairMethod::Viscosity => "viscosity",
            RepairMethod::NearnessF => "nearness-f",
            RepairMethod::Nearness2 => "nearness-2",
            RepairMethod::External => "external",
        }
    }
}

impl fmt::Display for RepairMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RepairMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::BUILTIN
            .into_iter()
            .chain([RepairMethod::External])
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown repair method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NearnessNorm {
    Frobenius,
    Spectral,
}

#[derive(Debug, Clone)]
pub struct RepairResult {
    pub method: RepairMethod,
    pub stiffness: EdgeOperator,
    /// Edges whose off-diagonal entries differ from the input.
    pub changed_edges: Vec<usize>,
    /// Largest change of any off-diagonal entry.
    pub max_modification: f64,
    /// ‖D − D̃‖₂/‖D‖₂ for the generators, estimated by power iteration.
    pub relative_distance: f64,
}

impl RepairResult {
    fn new(method: RepairMethod, original: &EdgeOperator, stiffness: EdgeOperator, voxels: &DualVoxels) -> Self {
        let mut changed_edges = Vec::new();
        let mut max_modification: f64 = 0.0;
        for e in 0..original.num_edges() {
            let du = (stiffness.upper(e) - original.upper(e)).abs();
            let dl = (stiffness.lower(e) - original.lower(e)).abs();
            if du > 0.0 || dl > 0.0 {
                changed_edges.push(e);
                max_modification = max_modification.max(du).max(dl);
            }
        }
        let relative_distance = generator_distance(&generator(original, voxels), &generator(&stiffness, voxels));
        Self {
            method,
            stiffness,
            changed_edges,
            max_modification,
            relative_distance,
        }
    }

    pub fn num_modified(&self) -> usize {
        self.changed_edges.len()
    }
}

/// Applies a built-in repair to the FEM stiffness of `disc` for diffusion γ.
pub fn repair(disc: &Discretization, method: RepairMethod, gamma: f64) -> Result<RepairResult> {
    let s = disc.stiffness(gamma);
    match method {
        RepairMethod::NnFem => Ok(nnfem_with(&s, &disc.voxels)),
        RepairMethod::Fvm => fvm(&disc.mesh, &s, &disc.voxels, gamma),
        RepairMethod::Viscosity => viscosity_with(&s, &disc.edges, &disc.voxels),
        RepairMethod::NearnessF => Ok(matrix_nearness(&disc.generator(&s), &disc.voxels, NearnessNorm::Frobenius)),
        RepairMethod::Nearness2 => Ok(matrix_nearness(&disc.generator(&s), &disc.voxels, NearnessNorm::Spectral)),
        RepairMethod::External => Err(Error::InvalidArgument("external matrices are read, not computed".into())),
    }
}

/// Negative off-diagonals set to zero, diagonal recomputed.
pub fn nnfem(stiffness: &EdgeOperator, mesh: &Mesh) -> RepairResult {
    nnfem_with(stiffness, &dual_voxels(mesh))
}

fn nnfem_with(stiffness: &EdgeOperator, voxels: &DualVoxels) -> RepairResult {
    let out = clamp_negative(stiffness);
    RepairResult::new(RepairMethod::NnFem, stiffness, out, voxels)
}

fn clamp_negative(op: &EdgeOperator) -> EdgeOperator {
    let mut out = op.clone();
    for e in 0..op.num_edges() {
        if op.upper(e) < 0.0 {
            out.set_upper(e, 0.0);
        }
        if op.lower(e) < 0.0 {
            out.set_lower(e, 0.0);
        }
    }
    out.zero_row_sums();
    out
}

/// Vertex-centred finite volumes with the two-point flux
/// S̃_ij = γ (n_ij·e_ij)|∂V_ij| / ‖e_ij‖².
///
/// The dual point of an element is its circumcentre when that lies in the
/// closed element (and, in 3D, every face circumcentre lies in its face),
/// otherwise its barycentre. On non-obtuse triangulations this reproduces the
/// FEM entries exactly.
pub fn fvm(mesh: &Mesh, fem: &EdgeOperator, voxels: &DualVoxels, gamma: f64) -> Result<RepairResult> {
    let edges = crate::mesh::EdgeSet::build(mesh);
    let mut values = vec![0.0; edges.len()];
    let nodes = mesh.nodes();
    for (k, s) in mesh.simplices().iter().enumerate() {
        let p: Vec<Point> = s.iter().map(|&v| nodes[v]).collect();
        let local = edges.element_edges(k);
        let mut li = 0;
        if mesh.dim() == 2 {
            let center = triangle_dual_point(&p[0], &p[1], &p[2]);
            for a in 0..3 {
                for b in a + 1..3 {
                    let e = sub(&p[b], &p[a]);
                    let m = midpoint(&p[a], &p[b]);
                    let t = sub(&center, &m);
                    let area = (t[0] * e[1] - t[1] * e[0]).abs();
                    values[local[li]] += gamma * area / dot3(&e, &e);
                    li += 1;
                }
            }
        } else {
            let (center, faces) = tet_dual_points(&p);
            for a in 0..4 {
                for b in a + 1..4 {
                    // The two faces containing edge (a, b) omit one of the other vertices.
                    let others: Vec<usize> = (0..4).filter(|&v| v != a && v != b).collect();
                    let c1 = faces[others[1]];
                    let c2 = faces[others[0]];
                    let e = sub(&p[b], &p[a]);
                    let m = midpoint(&p[a], &p[b]);
                    let va = cross3(&sub(&center, &m), &sub(&c2, &c1));
                    let area = 0.5 * dot3(&va, &e).abs();
                    values[local[li]] += gamma * area / dot3(&e, &e);
                    li += 1;
                }
            }
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("finite-volume coefficient".into()));
    }
    let out = EdgeOperator::from_edge_values(OperatorRole::Stiffness, mesh.num_nodes(), edges.edges(), values);
    Ok(RepairResult::new(RepairMethod::Fvm, fem, out, voxels))
}

fn triangle_dual_point(a: &Point, b: &Point, c: &Point) -> Point {
    let o = triangle_circumcenter(a, b, c);
    if in_triangle(&o, a, b, c) {
        o
    } else {
        centroid(&[*a, *b, *c])
    }
}

/// Element dual point and, indexed by the omitted vertex, the face dual points.
fn tet_dual_points(p: &[Point]) -> (Point, [Point; 4]) {
    let face = |skip: usize| -> [Point; 3] {
        let f: Vec<Point> = (0..4).filter(|&v| v != skip).map(|v| p[v]).collect();
        [f[0], f[1], f[2]]
    };
    let o = tet_circumcenter(&p[0], &p[1], &p[2], &p[3]);
    let mut circ = [[0.0; 3]; 4];
    let mut well_centred = in_tet(&o, p);
    for (skip, c) in circ.iter_mut().enumerate() {
        let f = face(skip);
        *c = triangle_circumcenter(&f[0], &f[1], &f[2]);
        well_centred &= in_triangle(c, &f[0], &f[1], &f[2]);
    }
    if well_centred {
        return (o, circ);
    }
    let mut bary = [[0.0; 3]; 4];
    for (skip, c) in bary.iter_mut().enumerate() {
        *c = centroid(&face(skip));
    }
    (centroid(p), bary)
}

fn in_triangle(x: &Point, a: &Point, b: &Point, c: &Point) -> bool {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let n = cross3(&ab, &ac);
    let nn = dot3(&n, &n);
    let tol = -1e-12;
    let w = |p: &Point, q: &Point| dot3(&cross3(&sub(q, p), &sub(x, p)), &n) / nn;
    w(a, b) >= tol && w(b, c) >= tol && w(c, a) >= tol
}

fn in_tet(x: &Point, p: &[Point]) -> bool {
    let vol = |a: &Point, b: &Point, c: &Point, d: &Point| dot3(&cross3(&sub(b, a), &sub(c, a)), &sub(d, a));
    let total = vol(&p[0], &p[1], &p[2], &p[3]);
    let tol = -1e-12 * total.abs();
    let s = total.signum();
    s * vol(x, &p[1], &p[2], &p[3]) >= tol
        && s * vol(&p[0], x, &p[2], &p[3]) >= tol
        && s * vol(&p[0], &p[1], x, &p[3]) >= tol
        && s * vol(&p[0], &p[1], &p[2], x) >= tol
}

fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot3(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross3(a: &Point, b: &Point) -> Point {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn midpoint(a: &Point, b: &Point) -> Point {
    [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0, (a[2] + b[2]) / 2.0]
}

fn centroid(p: &[Point]) -> Point {
    let n = p.len() as f64;
    let mut c = [0.0; 3];
    for q in p {
        for d in 0..3 {
            c[d] += q[d] / n;
        }
    }
    c
}

/// Patchwise artificial viscosity: each negative edge (i, j) adds |S_ij|/2 to
/// every edge at i and every edge at j, symmetrically. Sweeps repeat until no
/// negative entry remains.
pub fn viscosity(stiffness: &EdgeOperator, mesh: &Mesh) -> Result<RepairResult> {
    viscosity_with(stiffness, &crate::mesh::EdgeSet::build(mesh), &dual_voxels(mesh))
}

fn viscosity_with(stiffness: &EdgeOperator, edges: &crate::mesh::EdgeSet, voxels: &DualVoxels) -> Result<RepairResult> {
    let mut out = symmetrize(stiffness);
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); out.n()];
    for (e, &(i, j)) in edges.edges().iter().enumerate() {
        incident[i].push(e);
        incident[j].push(e);
    }
    for sweep in 0.. {
        let negative = negative_list(&out);
        if negative.is_empty() {
            break;
        }
        if sweep == MAX_SWEEPS {
            return Err(Error::Failed(format!(
                "viscosity left {} negative entries after {MAX_SWEEPS} sweeps",
                negative.len()
            )));
        }
        for e in negative {
            let v = out.upper(e);
            if v >= 0.0 {
                continue;
            }
            let (i, j) = out.pairs()[e];
            let add = -v / 2.0;
            for &f in incident[i].iter().chain(&incident[j]) {
                out.set_symmetric(f, out.upper(f) + add);
            }
        }
    }
    out.zero_row_sums();
    Ok(RepairResult::new(RepairMethod::Viscosity, stiffness, out, voxels))
}

/// Negative edges by ascending value, with a strict zero threshold.
fn negative_list(op: &EdgeOperator) -> Vec<usize> {
    let mut neg: Vec<usize> = (0..op.num_edges()).filter(|&e| op.upper(e) < 0.0).collect();
    neg.sort_by(|&a, &b| op.upper(a).total_cmp(&op.upper(b)).then(a.cmp(&b)));
    neg
}

/// Nearest generator on the same pattern with non-negative off-diagonals and
/// zero row sums, returned as the symmetrised stiffness A·D̃.
///
/// The Frobenius mode projects entrywise. The spectral mode refines that
/// point by projected subgradient steps on ‖D − D̃‖₂ and keeps the best
/// symmetrised iterate, so it is never worse than the Frobenius result.
pub fn matrix_nearness(d: &EdgeOperator, voxels: &DualVoxels, norm: NearnessNorm) -> RepairResult {
    let original = stiffness_from_generator(d, voxels);
    let finish = |dt: &EdgeOperator| symmetrize(&stiffness_from_generator(dt, voxels));
    let proj = clamp_negative(d);
    let mut best = finish(&proj);
    let method = match norm {
        NearnessNorm::Frobenius => RepairMethod::NearnessF,
        NearnessNorm::Spectral => RepairMethod::Nearness2,
    };
    if norm == NearnessNorm::Spectral && !negative_edges(&original).is_empty() {
        let mut best_dist = generator_distance(d, &generator(&best, voxels));
        let mut cur = proj;
        let mut warm: Option<Vec<f64>> = None;
        let t0 = 0.5 * best_dist * spectral_norm(d, None).0;
        for it in 0..NEARNESS_ITERATIONS {
            let diff = difference(d, &cur);
            let (sigma, u, v) = top_singular(&diff, warm.take());
            warm = Some(v.clone());
            if sigma == 0.0 {
                break;
            }
            // ∂σ/∂D̃_ij = u_i (v_i − v_j), the diagonal following the row sum.
            let mut step = cur.clone();
            let mut gnorm2 = 0.0;
            let grads: Vec<(f64, f64)> = step
                .pairs()
                .iter()
                .map(|&(i, j)| {
                    let gu = u[i] * (v[i] - v[j]);
                    let gl = u[j] * (v[j] - v[i]);
                    gnorm2 += gu * gu + gl * gl;
                    (gu, gl)
                })
                .collect();
            if gnorm2 == 0.0 {
                break;
            }
            let t = t0 / (gnorm2.sqrt() * ((it + 1) as f64).sqrt());
            for (e, (gu, gl)) in grads.into_iter().enumerate() {
                step.set_upper(e, (cur.upper(e) - t * gu).max(0.0));
                step.set_lower(e, (cur.lower(e) - t * gl).max(0.0));
            }
            step.zero_row_sums();
            let candidate = finish(&step);
            let dist = generator_distance(d, &generator(&candidate, voxels));
            if dist < best_dist {
                best_dist = dist;
                best = candidate;
            }
            cur = step;
        }
    }
    RepairResult::new(method, &original, best, voxels)
}

/// (S̃ + S̃ᵀ)/2 with row sums re-zeroed.
pub fn symmetrize(stiffness: &EdgeOperator) -> EdgeOperator {
    let mut out = stiffness.clone();
    for e in 0..out.num_edges() {
        let (a, b) = (out.upper(e), out.lower(e));
        if a != b {
            out.set_symmetric(e, 0.5 * (a + b));
        }
    }
    out.zero_row_sums();
    out
}

fn difference(a: &EdgeOperator, b: &EdgeOperator) -> EdgeOperator {
    let upper = (0..a.num_edges()).map(|e| a.upper(e) - b.upper(e)).collect();
    let lower = (0..a.num_edges()).map(|e| a.lower(e) - b.lower(e)).collect();
    let diagonal = a.diagonal().iter().zip(b.diagonal()).map(|(x, y)| x - y).collect();
    EdgeOperator::from_parts(a.role(), a.pairs().to_vec(), upper, lower, diagonal)
}

/// ‖D − D̃‖₂/‖D‖₂ (0 when D vanishes).
pub fn generator_distance(d: &EdgeOperator, d_tilde: &EdgeOperator) -> f64 {
    let base = spectral_norm(d, None).0;
    if base == 0.0 {
        return 0.0;
    }
    spectral_norm(&difference(d, d_tilde), None).0 / base
}

/// Largest singular value by power iteration on AᵀA, with the right
/// singular vector for warm starts.
pub fn spectral_norm(op: &EdgeOperator, start: Option<Vec<f64>>) -> (f64, Vec<f64>) {
    let (s, _, v) = top_singular(op, start);
    (s, v)
}

fn top_singular(op: &EdgeOperator, start: Option<Vec<f64>>) -> (f64, Vec<f64>, Vec<f64>) {
    let n = op.n();
    let mut v = start.unwrap_or_else(|| {
        // A fixed, non-constant start: constants lie in the kernel of a generator.
        (0..n).map(|i| ((i as f64 * 0.618_033_988_749_895).fract() - 0.5) + 1e-3).collect()
    });
    let nv = norm2(&v);
    if n == 0 || nv == 0.0 {
        return (0.0, vec![0.0; n], vec![0.0; n]);
    }
    v.iter_mut().for_each(|x| *x /= nv);
    let mut sigma = 0.0;
    let mut u = vec![0.0; n];
    for _ in 0..2000 {
        let w = op.mul_vec(&v);
        let sw = norm2(&w);
        if sw == 0.0 {
            return (0.0, u, v);
        }
        u = w.iter().map(|x| x / sw).collect();
        let z = op.mul_transpose_vec(&u);
        let sz = norm2(&z);
        v = z.iter().map(|x| x / sz).collect();
        let done = (sz - sigma).abs() <= 1e-13 * sz;
        sigma = sz;
        if done {
            break;
        }
    }
    debug_assert!((dot(&u, &op.mul_vec(&v)) - sigma).abs() <= 1e-6 * sigma.max(1.0));
    (sigma, u, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_perturbed_square, obtuse_pair, structured_square};

    fn fixture() -> Discretization {
        Discretization::new(obtuse_pair(100f64.to_radians()).unwrap()).unwrap()
    }

    fn assert_contract(s: &EdgeOperator) {
        let scale = s.max_abs();
        assert!(s.min_off_diagonal() >= -1e-12 * scale);
        assert!(s.is_symmetric());
        assert!(s.max_row_sum() <= 1e-10 * scale);
    }

    #[test]
    fn nnfem_zeroes_the_obtuse_edge() {
        let disc = fixture();
        let s = disc.stiffness(1.0);
        let e = disc.edges.find(0, 1).unwrap();
        let v = 1.0 / 100f64.to_radians().tan();
        assert!((s.upper(e) - v).abs() < 1e-12);
        let r = repair(&disc, RepairMethod::NnFem, 1.0).unwrap();
        assert_eq!(r.stiffness.upper(e), 0.0);
        assert_eq!(r.changed_edges, vec![e]);
        for i in [0, 1] {
            // The diagonal grows by |v| in magnitude.
            assert!((r.stiffness.diagonal()[i] - (s.diagonal()[i] + v)).abs() < 1e-12);
        }
        assert_contract(&r.stiffness);
    }

    #[test]
    fn valid_input_is_a_fixed_point() {
        let disc = Discretization::new(structured_square(4)).unwrap();
        let s = disc.stiffness(1.0);
        for m in [RepairMethod::NnFem, RepairMethod::Viscosity, RepairMethod::NearnessF, RepairMethod::Nearness2] {
            let r = repair(&disc, m, 1.0).unwrap();
            assert_eq!(r.stiffness, s, "{m}");
            assert_eq!(r.relative_distance, 0.0);
        }
    }

    #[test]
    fn fvm_matches_fem_on_right_triangles() {
        let disc = Discretization::new(structured_square(4)).unwrap();
        let s = disc.stiffness(2.0);
        let r = repair(&disc, RepairMethod::Fvm, 2.0).unwrap();
        for e in 0..s.num_edges() {
            assert!((r.stiffness.upper(e) - s.upper(e)).abs() < 1e-12, "edge {e}");
        }
    }

    #[test]
    fn fvm_is_positive_on_the_obtuse_pair() {
        let disc = fixture();
        let r = repair(&disc, RepairMethod::Fvm, 1.0).unwrap();
        let e = disc.edges.find(0, 1).unwrap();
        // Barycentric dual: each triangle contributes height/3 over unit length.
        let d = 0.5 / 50f64.to_radians().tan();
        assert!((r.stiffness.upper(e) - 2.0 * d / 3.0).abs() < 1e-12);
        assert_contract(&r.stiffness);
    }

    #[test]
    fn viscosity_single_sweep() {
        let disc = fixture();
        let s = disc.stiffness(1.0);
        let r = repair(&disc, RepairMethod::Viscosity, 1.0).unwrap();
        let e = disc.edges.find(0, 1).unwrap();
        assert_eq!(r.stiffness.upper(e), 0.0);
        for f in 0..s.num_edges() {
            if f != e {
                assert!(r.stiffness.upper(f) >= s.upper(f));
            }
        }
        assert_contract(&r.stiffness);
    }

    #[test]
    fn symmetrize_averages_and_is_idempotent() {
        let mut op = fixture().stiffness(1.0);
        op.set_upper(0, 1.0);
        op.set_lower(0, 3.0);
        let s = symmetrize(&op);
        assert_eq!(s.upper(0), 2.0);
        assert_eq!(s.lower(0), 2.0);
        assert!(s.max_row_sum() < 1e-14);
        assert_eq!(symmetrize(&s), s);
    }

    #[test]
    fn spectral_nearness_never_worse() {
        for seed in 0..3 {
            let mesh = generate_perturbed_square(5, 0.35, seed).unwrap();
            let disc = Discretization::new(mesh).unwrap();
            let f = repair(&disc, RepairMethod::NearnessF, 1.0).unwrap();
            let two = repair(&disc, RepairMethod::Nearness2, 1.0).unwrap();
            assert!(two.relative_distance <= f.relative_distance + 1e-12);
            assert_contract(&two.stiffness);
        }
    }

    #[test]
    fn power_iteration_matches_dense_svd() {
        let disc = Discretization::new(generate_perturbed_square(4, 0.35, 1).unwrap()).unwrap();
        let d = disc.generator(&disc.stiffness(1.0));
        let dense = d.to_dense().singular_values().max();
        let (s, _) = spectral_norm(&d, None);
        assert!((s - dense).abs() < 1e-8 * dense);
    }

    #[test]
    fn method_names_round_trip() {
        for m in RepairMethod::BUILTIN {
            assert_eq!(m.name().parse::<RepairMethod>().unwrap(), m);
        }
        assert!("gfet".parse::<RepairMethod>().is_err());
    }
}
