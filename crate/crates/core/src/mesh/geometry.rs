use serde::Serialize;

use super::{cross, dist2, dot3, sub, EdgeSet, Mesh, Point};
use crate::error::{Error, Result};

/// Per-element volumes and hat-function gradients.
#[derive(Debug, Clone)]
pub struct ElementGeometry {
    pub volumes: Vec<f64>,
    /// `gradients[k][a]` is ∇ψ of local vertex `a` on element `k`.
    pub gradients: Vec<Vec<Point>>,
}

/// Lumped-mass voxel volumes |V_j|.
#[derive(Debug, Clone, PartialEq)]
pub struct DualVoxels {
    pub volumes: Vec<f64>,
}

impl DualVoxels {
    pub fn total(&self) -> f64 {
        self.volumes.iter().sum()
    }
}

/// Inverts each element's affine map. Fails on a degenerate simplex, which
/// cannot happen for a mesh built through [`Mesh::new`].
pub fn element_geometry(mesh: &Mesh) -> Result<ElementGeometry> {
    let eps = super::volume_epsilon(mesh.dim(), mesh.nodes());
    let mut volumes = Vec::with_capacity(mesh.num_simplices());
    let mut gradients = Vec::with_capacity(mesh.num_simplices());
    for (k, s) in mesh.simplices().iter().enumerate() {
        let x0 = mesh.node(s[0]);
        let a = sub(&mesh.node(s[1]), &x0);
        let b = sub(&mesh.node(s[2]), &x0);
        let (det, mut g) = if mesh.dim() == 2 {
            let det = a[0] * b[1] - a[1] * b[0];
            (det, vec![[0.0; 3], [b[1], -b[0], 0.0], [-a[1], a[0], 0.0]])
        } else {
            let c = sub(&mesh.node(s[3]), &x0);
            let det = dot3(&a, &cross(&b, &c));
            (det, vec![[0.0; 3], cross(&b, &c), cross(&c, &a), cross(&a, &b)])
        };
        let volume = det / if mesh.dim() == 2 { 2.0 } else { 6.0 };
        if volume <= eps {
            return Err(Error::DegenerateSimplex {
                element: k,
                volume,
                epsilon: eps,
            });
        }
        for grad in g.iter_mut().skip(1) {
            for c in grad.iter_mut() {
                *c /= det;
            }
        }
        let mut g0 = [0.0; 3];
        for grad in g.iter().skip(1) {
            for d in 0..3 {
                g0[d] -= grad[d];
            }
        }
        g[0] = g0;
        volumes.push(volume);
        gradients.push(g);
    }
    Ok(ElementGeometry { volumes, gradients })
}

/// |V_j| = Σ_{T ∋ j} |T|/(d+1).
pub fn dual_voxels(mesh: &Mesh) -> DualVoxels {
    let mut volumes = vec![0.0; mesh.num_nodes()];
    let share = 1.0 / (mesh.dim() + 1) as f64;
    for (k, s) in mesh.simplices().iter().enumerate() {
        let v = mesh.simplex_volume(k) * share;
        for &i in s {
            volumes[i] += v;
        }
    }
    DualVoxels { volumes }
}

/// Angles at the vertices opposite edge `e`, one per incident triangle.
pub fn opposing_angles(mesh: &Mesh, edges: &EdgeSet, e: usize) -> Result<Vec<f64>> {
    if mesh.dim() != 2 {
        return Err(Error::Dimension {
            expected: 2,
            actual: mesh.dim(),
        });
    }
    let (i, j) = edges.edge(e);
    Ok(edges
        .incident_elements(e)
        .iter()
        .map(|&k| {
            let m = *mesh.simplices()[k]
                .iter()
                .find(|&&v| v != i && v != j)
                .expect("triangle has 3 vertices");
            angle_at(&mesh.node(m), &mesh.node(i), &mesh.node(j))
        })
        .collect())
}

/// Angle at `apex` between the rays to `p` and `q`.
pub(crate) fn angle_at(apex: &Point, p: &Point, q: &Point) -> f64 {
    let u = sub(p, apex);
    let v = sub(q, apex);
    let c = cross(&u, &v);
    dot3(&c, &c).sqrt().atan2(dot3(&u, &v))
}

/// Per-element quality. For triangles Q = 2 sin φ₃/(3 h₃) = 4|T|/(3 h₁h₂h₃),
/// equivalently 1/(3R) with R the circumradius. Tetrahedra report the
/// normalized radius ratio 3r/R, which is 1 for the regular tetrahedron.
#[derive(Debug, Clone, Serialize)]
pub struct Quality {
    pub measure: &'static str,
    pub values: Vec<f64>,
}

impl Quality {
    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

pub fn mesh_quality(mesh: &Mesh) -> Quality {
    let values = mesh
        .simplices()
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let p: Vec<Point> = s.iter().map(|&i| mesh.node(i)).collect();
            if mesh.dim() == 2 {
                let h1 = dist2(&p[1], &p[2]).sqrt();
                let h2 = dist2(&p[0], &p[2]).sqrt();
                let h3 = dist2(&p[0], &p[1]).sqrt();
                4.0 * mesh.simplex_volume(k) / (3.0 * h1 * h2 * h3)
            } else {
                let v = mesh.simplex_volume(k);
                let area: f64 = (0..4)
                    .map(|skip| {
                        let f: Vec<&Point> = (0..4).filter(|&a| a != skip).map(|a| &p[a]).collect();
                        triangle_area(f[0], f[1], f[2])
                    })
                    .sum();
                let inradius = 3.0 * v / area;
                let circ = tet_circumcenter(&p[0], &p[1], &p[2], &p[3]);
                let r = dist2(&circ, &p[0]).sqrt();
                3.0 * inradius / r
            }
        })
        .collect();
    Quality {
        measure: if mesh.dim() == 2 { "triangle" } else { "radius-ratio" },
        values,
    }
}

pub(crate) fn triangle_area(a: &Point, b: &Point, c: &Point) -> f64 {
    let n = cross(&sub(b, a), &sub(c, a));
    0.5 * dot3(&n, &n).sqrt()
}

/// Circumcenter of a triangle embedded in 3D space.
pub(crate) fn triangle_circumcenter(a: &Point, b: &Point, c: &Point) -> Point {
    let u = sub(b, a);
    let v = sub(c, a);
    let w = cross(&u, &v);
    let ww = dot3(&w, &w);
    let uu = dot3(&u, &u);
    let vv = dot3(&v, &v);
    let t1 = cross(&w, &u);
    let t2 = cross(&v, &w);
    let mut o = *a;
    for d in 0..3 {
        o[d] += (vv * t1[d] + uu * t2[d]) / (2.0 * ww);
    }
    o
}

pub(crate) fn tet_circumcenter(a: &Point, b: &Point, c: &Point, d: &Point) -> Point {
    let u = sub(b, a);
    let v = sub(c, a);
    let w = sub(d, a);
    let det = dot3(&u, &cross(&v, &w));
    let uu = dot3(&u, &u);
    let vv = dot3(&v, &v);
    let ww = dot3(&w, &w);
    let vw = cross(&v, &w);
    let wu = cross(&w, &u);
    let uv = cross(&u, &v);
    let mut o = *a;
    for k in 0..3 {
        o[k] += (uu * vw[k] + vv * wu[k] + ww * uv[k]) / (2.0 * det);
    }
    o
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tri(p: [[f64; 2]; 3]) -> Mesh {
        Mesh::new(2, p.iter().map(|q| [q[0], q[1], 0.0]).collect(), vec![vec![0, 1, 2]]).unwrap()
    }

    fn equilateral() -> Mesh {
        tri([[0.0, 0.0], [1.0, 0.0], [0.5, 3f64.sqrt() / 2.0]])
    }

    #[test]
    fn unit_right_triangle_gradients() {
        let g = element_geometry(&tri([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])).unwrap();
        assert_eq!(g.volumes[0], 0.5);
        assert_eq!(g.gradients[0][0], [-1.0, -1.0, 0.0]);
        assert_eq!(g.gradients[0][1], [1.0, 0.0, 0.0]);
        assert_eq!(g.gradients[0][2], [0.0, 1.0, 0.0]);
    }

    #[test]
    fn reference_tet_volume_and_gradients() {
        let m = Mesh::new(
            3,
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            vec![vec![0, 1, 2, 3]],
        )
        .unwrap();
        let g = element_geometry(&m).unwrap();
        assert!((g.volumes[0] - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(g.gradients[0][0], [-1.0, -1.0, -1.0]);
        assert_eq!(g.gradients[0][3], [0.0, 0.0, 1.0]);
    }

    #[test]
    fn gradient_edge_identity() {
        let m = tri([[0.1, 0.2], [1.3, -0.1], [0.4, 0.9]]);
        let g = element_geometry(&m).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    let d = sub(&m.node(j), &m.node(i));
                    assert!((dot3(&g.gradients[0][i], &d) + 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn voxels_of_unit_right_triangle() {
        let v = dual_voxels(&tri([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]));
        for x in v.volumes {
            assert!((x - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn equilateral_angles_and_quality() {
        let m = equilateral();
        let es = EdgeSet::build(&m);
        for e in 0..3 {
            let a = opposing_angles(&m, &es, e).unwrap();
            assert_eq!(a.len(), 1);
            assert!((a[0] - PI / 3.0).abs() < 1e-12);
        }
        let q = mesh_quality(&m);
        assert!((q.values[0] - 3f64.sqrt() / 3.0).abs() < 1e-12);
    }

    #[test]
    fn hypotenuse_angle_is_right() {
        let m = tri([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let es = EdgeSet::build(&m);
        let e = es.find(1, 2).unwrap();
        assert!((opposing_angles(&m, &es, e).unwrap()[0] - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn quality_scales_inversely() {
        let p = [[0.1, 0.2], [1.3, -0.1], [0.4, 0.9]];
        let q1 = mesh_quality(&tri(p)).values[0];
        let q3 = mesh_quality(&tri(p.map(|x| [3.0 * x[0], 3.0 * x[1]]))).values[0];
        assert!((q3 - q1 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn sliver_quality_vanishes() {
        let q = mesh_quality(&tri([[0.0, 0.0], [1.0, 0.0], [0.5, 1e-6]])).values[0];
        assert!(q < 1e-5);
    }

    #[test]
    fn regular_tet_radius_ratio_is_one() {
        let s = 1.0 / 2f64.sqrt();
        let m = Mesh::new(
            3,
            vec![[1.0, 0.0, -s], [-1.0, 0.0, -s], [0.0, 1.0, s], [0.0, -1.0, s]],
            vec![vec![0, 1, 2, 3]],
        )
        .unwrap();
        assert!((mesh_quality(&m).values[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn angles_rejected_in_3d() {
        let m = Mesh::new(
            3,
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            vec![vec![0, 1, 2, 3]],
        )
        .unwrap();
        let es = EdgeSet::build(&m);
        assert!(matches!(opposing_angles(&m, &es, 0), Err(Error::Dimension { .. })));
    }

    #[test]
    fn circumcenters_are_equidistant() {
        let a = [0.1, 0.2, 0.3];
        let b = [1.1, -0.2, 0.0];
        let c = [0.3, 0.9, 0.2];
        let d = [0.2, 0.1, 1.4];
        let o = tet_circumcenter(&a, &b, &c, &d);
        let r = dist2(&o, &a);
        for p in [&b, &c, &d] {
            assert!((dist2(&o, p) - r).abs() < 1e-12);
        }
        let o = triangle_circumcenter(&a, &b, &c);
        let r = dist2(&o, &a);
        assert!((dist2(&o, &b) - r).abs() < 1e-12 && (dist2(&o, &c) - r).abs() < 1e-12);
    }
}
