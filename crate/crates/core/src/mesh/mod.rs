//! Unstructured simplicial meshes: loading, validation, edge topology and
//! the geometric quantities every other module consumes.

mod edges;
mod generate;
mod geometry;

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use edges::EdgeSet;
pub(crate) use geometry::{tet_circumcenter, triangle_circumcenter};
pub use generate::{
    ball, cube, disc, generate_perturbed_square, negative_angle_edges, obtuse_pair, rhombus, strip,
    structured_square,
};
pub use geometry::{
    dual_voxels, element_geometry, mesh_quality, opposing_angles, DualVoxels, ElementGeometry, Quality,
};

/// Point in model units; the third coordinate is zero for 2D meshes.
pub type Point = [f64; 3];

/// A triangular (2D) or tetrahedral (3D) mesh with its boundary nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    dim: usize,
    nodes: Vec<Point>,
    simplices: Vec<Vec<usize>>,
    boundary_nodes: BTreeSet<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MeshFile {
    dim: usize,
    nodes: Vec<Vec<f64>>,
    simplices: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    boundary_nodes: Option<Vec<usize>>,
}

impl Mesh {
    /// Builds and validates a mesh. Negatively oriented simplices are
    /// reoriented so that every stored simplex has positive signed volume.
    pub fn new(dim: usize, nodes: Vec<Point>, simplices: Vec<Vec<usize>>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidMesh(format!("dimension must be 2 or 3, got {dim}")));
        }
        if simplices.is_empty() {
            return Err(Error::InvalidMesh("mesh has no simplices".into()));
        }
        let mut simplices = simplices;
        for (k, s) in simplices.iter().enumerate() {
            if s.len() != dim + 1 {
                return Err(Error::InvalidMesh(format!(
                    "simplex {k} has {} vertices, expected {}",
                    s.len(),
                    dim + 1
                )));
            }
            if let Some(&bad) = s.iter().find(|&&v| v >= nodes.len()) {
                return Err(Error::InvalidMesh(format!("simplex {k} references missing node {bad}")));
            }
            let distinct: BTreeSet<usize> = s.iter().copied().collect();
            if distinct.len() != s.len() {
                return Err(Error::InvalidMesh(format!("simplex {k} repeats a node index")));
            }
        }
        for (i, p) in nodes.iter().enumerate() {
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidMesh(format!("node {i} has a non-finite coordinate")));
            }
        }

        let eps = volume_epsilon(dim, &nodes);
        for (k, s) in simplices.iter_mut().enumerate() {
            let v = signed_volume(dim, &nodes, s);
            if v.abs() <= eps {
                return Err(Error::DegenerateSimplex {
                    element: k,
                    volume: v.abs(),
                    epsilon: eps,
                });
            }
            if v < 0.0 {
                s.swap(dim - 1, dim);
            }
        }

        let boundary_nodes = detect_boundary(dim, &simplices)?;
        Ok(Self {
            dim,
            nodes,
            simplices,
            boundary_nodes,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> Point {
        self.nodes[i]
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn simplices(&self) -> &[Vec<usize>] {
        &self.simplices
    }

    pub fn num_simplices(&self) -> usize {
        self.simplices.len()
    }

    pub fn boundary_nodes(&self) -> &BTreeSet<usize> {
        &self.boundary_nodes
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary_nodes.contains(&i)
    }

    /// Number of boundary facets (edges in 2D, triangles in 3D).
    pub fn num_boundary_facets(&self) -> usize {
        facet_counts(self.dim, &self.simplices)
            .values()
            .filter(|&&c| c == 1)
            .count()
    }

    /// Signed volume of simplex `k` (positive after construction).
    pub fn simplex_volume(&self, k: usize) -> f64 {
        signed_volume(self.dim, &self.nodes, &self.simplices[k])
    }

    /// Sum of element volumes, |Ω|.
    pub fn total_volume(&self) -> f64 {
        (0..self.num_simplices()).map(|k| self.simplex_volume(k)).sum()
    }

    /// Arithmetic mean of the node coordinates.
    pub fn centroid(&self) -> Point {
        let mut c = [0.0; 3];
        for p in &self.nodes {
            for d in 0..3 {
                c[d] += p[d];
            }
        }
        let n = self.nodes.len() as f64;
        c.map(|v| v / n)
    }

    /// Node closest to the centroid of the domain, ties broken by lowest
    /// index. The centroid is the volume-weighted element barycenter mean.
    pub fn center_node(&self) -> usize {
        let mut c = [0.0; 3];
        let mut total = 0.0;
        for (k, s) in self.simplices.iter().enumerate() {
            let v = self.simplex_volume(k);
            total += v;
            for &i in s {
                for d in 0..3 {
                    c[d] += v * self.nodes[i][d] / s.len() as f64;
                }
            }
        }
        let c = c.map(|x| x / total);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.nodes.iter().enumerate() {
            let d = dist2(p, &c);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    pub fn bounding_box_diameter(&self) -> f64 {
        bbox_diameter(&self.nodes)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: MeshFile = serde_json::from_str(text).map_err(|e| Error::Parse(format!("mesh json: {e}")))?;
        let dim = file.dim;
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidMesh(format!("dimension must be 2 or 3, got {dim}")));
        }
        let mut nodes = Vec::with_capacity(file.nodes.len());
        for (i, n) in file.nodes.iter().enumerate() {
            if n.len() != dim {
                return Err(Error::Parse(format!("node {i} has {} coordinates, expected {dim}", n.len())));
            }
            let mut p = [0.0; 3];
            p[..dim].copy_from_slice(n);
            nodes.push(p);
        }
        let mesh = Mesh::new(dim, nodes, file.simplices)?;
        if let Some(given) = file.boundary_nodes {
            let given: BTreeSet<usize> = given.into_iter().collect();
            if given != mesh.boundary_nodes {
                return Err(Error::InvalidMesh(format!(
                    "boundary_nodes in file ({} nodes) disagree with detected boundary ({} nodes)",
                    given.len(),
                    mesh.boundary_nodes.len()
                )));
            }
        }
        Ok(mesh)
    }

    pub fn to_json_string(&self) -> String {
        let file = MeshFile {
            dim: self.dim,
            nodes: self.nodes.iter().map(|p| p[..self.dim].to_vec()).collect(),
            simplices: self.simplices.clone(),
            boundary_nodes: Some(self.boundary_nodes.iter().copied().collect()),
        };
        serde_json::to_string(&file).expect("mesh serializes")
    }
}

/// Reads a mesh from the JSON mesh format.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Mesh::from_json_str(&text)
}

pub fn save_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, mesh.to_json_string()).map_err(|e| Error::io(path, e))
}

pub(crate) fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot3(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: &Point, b: &Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dist2(a: &Point, b: &Point) -> f64 {
    let d = sub(a, b);
    dot3(&d, &d)
}

pub(crate) fn signed_volume(dim: usize, nodes: &[Point], s: &[usize]) -> f64 {
    let p0 = nodes[s[0]];
    let a = sub(&nodes[s[1]], &p0);
    let b = sub(&nodes[s[2]], &p0);
    if dim == 2 {
        0.5 * (a[0] * b[1] - a[1] * b[0])
    } else {
        let c = sub(&nodes[s[3]], &p0);
        dot3(&a, &cross(&b, &c)) / 6.0
    }
}

fn bbox_diameter(nodes: &[Point]) -> f64 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in nodes {
        for d in 0..3 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    dist2(&lo, &hi).sqrt()
}

/// Degeneracy threshold: 1e-14 times the bounding-box diameter to the power d.
pub(crate) fn volume_epsilon(dim: usize, nodes: &[Point]) -> f64 {
    1e-14 * bbox_diameter(nodes).powi(dim as i32)
}

fn facet_counts(dim: usize, simplices: &[Vec<usize>]) -> HashMap<Vec<usize>, usize> {
    let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
    for s in simplices {
        for skip in 0..=dim {
            let mut f: Vec<usize> = s
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != skip)
                .map(|(_, &v)| v)
                .collect();
            f.sort_unstable();
            *counts.entry(f).or_insert(0) += 1;
        }
    }
    counts
}

fn detect_boundary(dim: usize, simplices: &[Vec<usize>]) -> Result<BTreeSet<usize>> {
    let mut boundary = BTreeSet::new();
    for (facet, count) in facet_counts(dim, simplices) {
        match count {
            1 => boundary.extend(facet),
            2 => {}
            _ => {
                return Err(Error::InvalidMesh(format!(
                    "facet {facet:?} is shared by {count} simplices"
                )))
            }
        }
    }
    Ok(boundary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_triangle_json() -> &'static str {
        r#"{"dim":2,"nodes":[[0,0],[1,0],[0,1]],"simplices":[[0,1,2]]}"#
    }

    #[test]
    fn single_triangle_is_all_boundary() {
        let m = Mesh::from_json_str(unit_triangle_json()).unwrap();
        assert_eq!(m.num_nodes(), 3);
        assert_eq!(m.num_simplices(), 1);
        assert_eq!(m.boundary_nodes().len(), 3);
    }

    #[test]
    fn repeated_index_is_rejected() {
        let err = Mesh::from_json_str(r#"{"dim":2,"nodes":[[0,0],[1,0],[0,1]],"simplices":[[0,1,1]]}"#).unwrap_err();
        assert!(matches!(err, Error::InvalidMesh(_)));
    }

    #[test]
    fn dangling_index_is_rejected() {
        let err = Mesh::from_json_str(r#"{"dim":2,"nodes":[[0,0],[1,0],[0,1]],"simplices":[[0,1,3]]}"#).unwrap_err();
        assert!(matches!(err, Error::InvalidMesh(_)));
    }

    #[test]
    fn collinear_triangle_is_degenerate() {
        let err = Mesh::from_json_str(r#"{"dim":2,"nodes":[[0,0],[1,0],[2,0]],"simplices":[[0,1,2]]}"#).unwrap_err();
        assert!(matches!(err, Error::DegenerateSimplex { .. }));
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        assert!(matches!(Mesh::from_json_str("{dim: 2"), Err(Error::Parse(_))));
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let m = Mesh::from_json_str(r#"{"dim":2,"nodes":[[0,0],[1,0],[0,1]],"simplices":[[0,2,1]]}"#).unwrap();
        assert!(m.simplex_volume(0) > 0.0);
    }

    #[test]
    fn inconsistent_boundary_list_is_rejected() {
        let err = Mesh::from_json_str(
            r#"{"dim":2,"nodes":[[0,0],[1,0],[0,1]],"simplices":[[0,1,2]],"boundary_nodes":[0,1]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidMesh(_)));
    }

    #[test]
    fn json_round_trip() {
        let m = rhombus();
        let back = Mesh::from_json_str(&m.to_json_string()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn rhombus_has_interior_shared_edge() {
        let m = rhombus();
        assert_eq!(m.num_simplices(), 2);
        assert_eq!(m.boundary_nodes().len(), 4);
        assert_eq!(m.num_boundary_facets(), 4);
    }
}
