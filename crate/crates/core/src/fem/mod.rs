//! Linear finite-element assembly on simplicial meshes and the maps between
//! stiffness matrices, generators and jump rates.

mod operator;
mod rates;

pub use operator::{EdgeOperator, OperatorRole};
pub use rates::{jump_rates, JumpRates};

use crate::error::{Error, Result};
use crate::mesh::{DualVoxels, EdgeSet, ElementGeometry, Mesh};
use crate::tensor::ElementDiffusionField;

/// Number of independent components of a symmetric d×d tensor.
pub fn components(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Index pairs (a, b) of the tensor components in storage order:
/// 2D (11, 22, 12); 3D (11, 22, 33, 12, 13, 23).
pub fn component_indices(dim: usize) -> &'static [(usize, usize)] {
    if dim == 2 {
        &[(0, 0), (1, 1), (0, 1)]
    } else {
        &[(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]
    }
}

/// S_ij = −γ Σ_k ∇ψ_i·∇ψ_j |T_k| on every edge; zero row sums on the diagonal.
pub fn assemble_stiffness(mesh: &Mesh, geometry: &ElementGeometry, edges: &EdgeSet, gamma: f64) -> EdgeOperator {
    let mut values = vec![0.0; edges.len()];
    for (k, s) in mesh.simplices().iter().enumerate() {
        let g = &geometry.gradients[k];
        let vol = geometry.volumes[k];
        let mut local = edges.element_edges(k).iter();
        for a in 0..s.len() {
            for b in a + 1..s.len() {
                let e = *local.next().expect("local edge");
                let dot: f64 = (0..3).map(|d| g[a][d] * g[b][d]).sum();
                values[e] -= gamma * dot * vol;
            }
        }
    }
    EdgeOperator::from_edge_values(OperatorRole::Stiffness, mesh.num_nodes(), edges.edges(), values)
}

/// 2D stiffness entry from the opposing angles: sin(φ+θ)/(2 sin φ sin θ) for
/// an interior edge, cot(φ)/2 for a boundary edge.
pub fn stiffness_entry_2d(angles: &[f64]) -> Result<f64> {
    let pi = std::f64::consts::PI;
    if let Some(a) = angles.iter().find(|&&a| !(a > 0.0 && a < pi)) {
        return Err(Error::InvalidArgument(format!("opposing angle {a} outside (0, π)")));
    }
    match *angles {
        [phi] => Ok(0.5 / phi.tan()),
        [phi, theta] => Ok((phi + theta).sin() / (2.0 * phi.sin() * theta.sin())),
        _ => Err(Error::InvalidArgument(format!(
            "an edge has one or two opposing angles, got {}",
            angles.len()
        ))),
    }
}

/// Per-edge contraction coefficients: for edge e and incident element k,
/// `C[l] = −|T_k| (∂_a ψ_i ∂_b ψ_j + ∂_b ψ_i ∂_a ψ_j)` for off-diagonal
/// components (a, b) and `−|T_k| ∂_a ψ_i ∂_a ψ_j` on the diagonal, so that
/// S̃_ij = Σ_k Σ_l C_ijkl γ̃_kl.
#[derive(Debug, Clone)]
pub struct EdgeCoefficients {
    dim: usize,
    num_elements: usize,
    rows: Vec<Vec<(usize, [f64; 6])>>,
}

impl EdgeCoefficients {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// L, the number of tensor components per element.
    pub fn components(&self) -> usize {
        components(self.dim)
    }

    pub fn num_edges(&self) -> usize {
        self.rows.len()
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    /// `(element, coefficients)` for each element incident to edge `e`; only
    /// the first L coefficients are meaningful.
    pub fn row(&self, e: usize) -> &[(usize, [f64; 6])] {
        &self.rows[e]
    }

    /// Contribution of element `k` to edge `e` under the field.
    pub fn contract_element(&self, e: usize, k: usize, gamma: &[f64]) -> f64 {
        let l = self.components();
        self.rows[e]
            .iter()
            .find(|(kk, _)| *kk == k)
            .map(|(_, c)| (0..l).map(|m| c[m] * gamma[m]).sum())
            .unwrap_or(0.0)
    }

    /// Σ_k Σ_l C_ijkl γ̃_kl for edge `e`.
    pub fn contract(&self, e: usize, field: &ElementDiffusionField) -> f64 {
        let l = self.components();
        self.rows[e]
            .iter()
            .map(|(k, c)| {
                let g = field.element(*k);
                (0..l).map(|m| c[m] * g[m]).sum::<f64>()
            })
            .sum()
    }
}

pub fn edge_coefficients(mesh: &Mesh, geometry: &ElementGeometry, edges: &EdgeSet) -> EdgeCoefficients {
    let dim = mesh.dim();
    let comps = component_indices(dim);
    let mut rows: Vec<Vec<(usize, [f64; 6])>> = vec![Vec::new(); edges.len()];
    for (k, s) in mesh.simplices().iter().enumerate() {
        let g = &geometry.gradients[k];
        let vol = geometry.volumes[k];
        let mut local = edges.element_edges(k).iter();
        for a in 0..s.len() {
            for b in a + 1..s.len() {
                let e = *local.next().expect("local edge");
                let mut c = [0.0; 6];
                for (l, &(p, q)) in comps.iter().enumerate() {
                    c[l] = if p == q {
                        -g[a][p] * g[b][p] * vol
                    } else {
                        -(g[a][p] * g[b][q] + g[a][q] * g[b][p]) * vol
                    };
                }
                rows[e].push((k, c));
            }
        }
    }
    EdgeCoefficients {
        dim,
        num_elements: mesh.num_simplices(),
        rows,
    }
}

/// S̃ assembled from a per-element tensor field.
pub fn stiffness_from_gamma(coeffs: &EdgeCoefficients, field: &ElementDiffusionField, n: usize, edges: &EdgeSet) -> Result<EdgeOperator> {
    if field.len() != coeffs.num_elements() || field.dim() != coeffs.dim() {
        return Err(Error::Dimension {
            expected: coeffs.num_elements(),
            actual: field.len(),
        });
    }
    let values = (0..coeffs.num_edges()).map(|e| coeffs.contract(e, field)).collect();
    Ok(EdgeOperator::from_edge_values(OperatorRole::Stiffness, n, edges.edges(), values))
}

/// D = A⁻¹S: row i scaled by 1/|V_i|.
pub fn generator(stiffness: &EdgeOperator, voxels: &DualVoxels) -> EdgeOperator {
    let v = &voxels.volumes;
    let pairs = stiffness.pairs().to_vec();
    let upper = pairs.iter().enumerate().map(|(e, &(i, _))| stiffness.upper(e) / v[i]).collect();
    let lower = pairs.iter().enumerate().map(|(e, &(_, j))| stiffness.lower(e) / v[j]).collect();
    let diagonal = stiffness.diagonal().iter().zip(v).map(|(d, vi)| d / vi).collect();
    EdgeOperator::from_parts(OperatorRole::Generator, pairs, upper, lower, diagonal)
}

/// S = A·D, the inverse of [`generator`].
pub fn stiffness_from_generator(generator: &EdgeOperator, voxels: &DualVoxels) -> EdgeOperator {
    let v = &voxels.volumes;
    let pairs = generator.pairs().to_vec();
    let upper = pairs.iter().enumerate().map(|(e, &(i, _))| generator.upper(e) * v[i]).collect();
    let lower = pairs.iter().enumerate().map(|(e, &(_, j))| generator.lower(e) * v[j]).collect();
    let diagonal = generator.diagonal().iter().zip(v).map(|(d, vi)| d * vi).collect();
    EdgeOperator::from_parts(OperatorRole::Stiffness, pairs, upper, lower, diagonal)
}

/// Tolerance separating round-off from genuinely negative entries.
pub fn rate_epsilon(op: &EdgeOperator) -> f64 {
    1e-12 * op.max_abs()
}

/// Edges whose symmetric entry is below −rate_epsilon, sorted ascending by
/// value (ties by edge id).
pub fn negative_edges(stiffness: &EdgeOperator) -> Vec<(usize, f64)> {
    let eps = rate_epsilon(stiffness);
    let mut out: Vec<(usize, f64)> = (0..stiffness.num_edges())
        .map(|e| (e, stiffness.upper(e).min(stiffness.lower(e))))
        .filter(|&(_, v)| v < -eps)
        .collect();
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    out
}

/// Everything assembly-related for one mesh, computed once.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Mesh,
    pub edges: EdgeSet,
    pub geometry: ElementGeometry,
    pub voxels: DualVoxels,
    pub coeffs: EdgeCoefficients,
}

impl Discretization {
    pub fn new(mesh: Mesh) -> Result<Self> {
        let edges = EdgeSet::build(&mesh);
        let geometry = crate::mesh::element_geometry(&mesh)?;
        let voxels = crate::mesh::dual_voxels(&mesh);
        let coeffs = edge_coefficients(&mesh, &geometry, &edges);
        Ok(Self {
            mesh,
            edges,
            geometry,
            voxels,
            coeffs,
        })
    }

    pub fn stiffness(&self, gamma: f64) -> EdgeOperator {
        assemble_stiffness(&self.mesh, &self.geometry, &self.edges, gamma)
    }

    pub fn stiffness_from_gamma(&self, field: &ElementDiffusionField) -> Result<EdgeOperator> {
        stiffness_from_gamma(&self.coeffs, field, self.mesh.num_nodes(), &self.edges)
    }

    pub fn generator(&self, stiffness: &EdgeOperator) -> EdgeOperator {
        generator(stiffness, &self.voxels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{obtuse_pair, rhombus};
    use std::f64::consts::PI;

    fn unit_right() -> Discretization {
        let m = Mesh::new(2, vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![vec![0, 1, 2]]).unwrap();
        Discretization::new(m).unwrap()
    }

    #[test]
    fn unit_right_triangle_stiffness() {
        let d = unit_right();
        let s = d.stiffness(1.0);
        assert_eq!(s.upper(d.edges.find(0, 1).unwrap()), 0.5);
        assert_eq!(s.upper(d.edges.find(0, 2).unwrap()), 0.5);
        assert_eq!(s.upper(d.edges.find(1, 2).unwrap()), 0.0);
        assert_eq!(s.diagonal(), &[-1.0, -0.5, -0.5]);
        let two = d.stiffness(2.0);
        for e in 0..3 {
            assert_eq!(two.upper(e), 2.0 * s.upper(e));
        }
    }

    #[test]
    fn rhombus_shared_edge_is_cot_formula() {
        let d = Discretization::new(rhombus()).unwrap();
        let s = d.stiffness(1.0);
        let e = d.edges.find(0, 1).unwrap();
        assert!((s.upper(e) - 1.0 / 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn angle_formula_values() {
        assert!((stiffness_entry_2d(&[PI / 3.0, PI / 3.0]).unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!(stiffness_entry_2d(&[0.4 * PI, 0.6 * PI]).unwrap().abs() < 1e-15);
        let a = 100f64.to_radians();
        let v = stiffness_entry_2d(&[a, a]).unwrap();
        assert!((v - 1.0 / a.tan()).abs() < 1e-15);
        assert!((v + 0.17632698070846498).abs() < 1e-12);
        assert!(stiffness_entry_2d(&[PI]).is_err());
    }

    #[test]
    fn unit_right_triangle_coefficients() {
        let d = unit_right();
        let e = d.edges.find(1, 2).unwrap();
        let (k, c) = d.coeffs.row(e)[0];
        assert_eq!(k, 0);
        assert_eq!(&c[..3], &[0.0, 0.0, -0.5]);
    }

    #[test]
    fn reference_tet_coefficients() {
        let m = Mesh::new(
            3,
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            vec![vec![0, 1, 2, 3]],
        )
        .unwrap();
        let d = Discretization::new(m).unwrap();
        let (_, c) = d.coeffs.row(d.edges.find(0, 1).unwrap())[0];
        let sixth = 1.0 / 6.0;
        // ∇ψ₀ = (−1,−1,−1), ∇ψ₁ = (1,0,0)
        let expect = [sixth, 0.0, 0.0, sixth, sixth, 0.0];
        for l in 0..6 {
            assert!((c[l] - expect[l]).abs() < 1e-15);
        }
    }

    #[test]
    fn isotropic_field_reproduces_stiffness() {
        let d = Discretization::new(crate::mesh::generate_perturbed_square(5, 0.3, 2).unwrap()).unwrap();
        let s = d.stiffness(1.7);
        let f = ElementDiffusionField::isotropic(2, d.mesh.num_simplices(), 1.7);
        let t = d.stiffness_from_gamma(&f).unwrap();
        for e in 0..s.num_edges() {
            assert!((s.upper(e) - t.upper(e)).abs() <= 1e-12 * s.max_abs());
        }
    }

    #[test]
    fn directional_field_on_two_right_triangles() {
        // Vertical shared edge x = 0, triangles on either side.
        let m = Mesh::new(
            2,
            vec![[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
            vec![vec![0, 1, 2], vec![0, 3, 1]],
        )
        .unwrap();
        let d = Discretization::new(m).unwrap();
        let e = d.edges.find(0, 1).unwrap();
        let mut f = ElementDiffusionField::isotropic(2, 2, 0.0);
        for k in 0..2 {
            f.element_mut(k)[0] = 1.0;
        }
        let s = d.stiffness_from_gamma(&f).unwrap();
        let x_only: f64 = (0..2)
            .map(|k| {
                let g = &d.geometry.gradients[k];
                let s = &d.mesh.simplices()[k];
                let a = s.iter().position(|&v| v == 0).unwrap();
                let b = s.iter().position(|&v| v == 1).unwrap();
                -g[a][0] * g[b][0] * d.geometry.volumes[k]
            })
            .sum();
        assert!((s.upper(e) - x_only).abs() < 1e-15);
    }

    #[test]
    fn generator_rows_sum_to_zero() {
        let d = unit_right();
        let g = d.generator(&d.stiffness(1.0));
        assert!(g.max_row_sum() < 1e-15);
        assert_eq!(g.upper(d.edges.find(1, 2).unwrap()), 0.0);
        let back = stiffness_from_generator(&g, &d.voxels);
        assert!(back.max_asymmetry() < 1e-15);
    }

    #[test]
    fn obtuse_pair_has_one_negative_edge() {
        let d = Discretization::new(obtuse_pair(100f64.to_radians()).unwrap()).unwrap();
        let neg = negative_edges(&d.stiffness(1.0));
        assert_eq!(neg.len(), 1);
        assert_eq!(neg[0].0, d.edges.find(0, 1).unwrap());
        assert!((neg[0].1 - 1.0 / 100f64.to_radians().tan()).abs() < 1e-12);
    }

    #[test]
    fn structured_square_has_no_negative_stiffness() {
        let d = Discretization::new(crate::mesh::structured_square(8)).unwrap();
        assert!(negative_edges(&d.stiffness(1.0)).is_empty());
    }
}
