use std::collections::HashMap;

use super::Mesh;

/// Edge topology of a mesh. Edges are sorted node pairs `(i, j)` with
/// `i < j`, ordered lexicographically; edge ids index that order.
#[derive(Debug, Clone)]
pub struct EdgeSet {
    edges: Vec<(usize, usize)>,
    index: HashMap<(usize, usize), usize>,
    incident: Vec<Vec<usize>>,
    element_edges: Vec<Vec<usize>>,
    neighborhood: Vec<Vec<usize>>,
    node_neighbors: Vec<Vec<usize>>,
}

impl EdgeSet {
    pub fn build(mesh: &Mesh) -> Self {
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for s in mesh.simplices() {
            for a in 0..s.len() {
                for b in a + 1..s.len() {
                    pairs.push(ordered(s[a], s[b]));
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        let index: HashMap<(usize, usize), usize> = pairs.iter().enumerate().map(|(e, &p)| (p, e)).collect();

        let mut incident = vec![Vec::new(); pairs.len()];
        let mut element_edges = Vec::with_capacity(mesh.num_simplices());
        for (k, s) in mesh.simplices().iter().enumerate() {
            let mut local = Vec::with_capacity(s.len() * (s.len() - 1) / 2);
            for a in 0..s.len() {
                for b in a + 1..s.len() {
                    let e = index[&ordered(s[a], s[b])];
                    incident[e].push(k);
                    local.push(e);
                }
            }
            element_edges.push(local);
        }

        let neighborhood = incident
            .iter()
            .map(|elems| {
                let mut hood: Vec<usize> = elems.iter().flat_map(|&k| element_edges[k].iter().copied()).collect();
                hood.sort_unstable();
                hood.dedup();
                hood
            })
            .collect();

        let mut node_neighbors = vec![Vec::new(); mesh.num_nodes()];
        for &(i, j) in &pairs {
            node_neighbors[i].push(j);
            node_neighbors[j].push(i);
        }
        for list in &mut node_neighbors {
            list.sort_unstable();
        }

        Self {
            edges: pairs,
            index,
            incident,
            element_edges,
            neighborhood,
            node_neighbors,
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> (usize, usize) {
        self.edges[e]
    }

    /// Id of the edge joining `i` and `j`, in either order.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        self.index.get(&ordered(i, j)).copied()
    }

    /// Elements containing edge `e`.
    pub fn incident_elements(&self, e: usize) -> &[usize] {
        &self.incident[e]
    }

    /// Edges of element `k`, in local vertex-pair order (0,1), (0,2), ...
    pub fn element_edges(&self, k: usize) -> &[usize] {
        &self.element_edges[k]
    }

    /// All edges of all elements containing edge `e`, sorted; includes `e`.
    pub fn neighborhood(&self, e: usize) -> &[usize] {
        &self.neighborhood[e]
    }

    /// Mesh neighbours of node `i`, sorted.
    pub fn node_neighbors(&self, i: usize) -> &[usize] {
        &self.node_neighbors[i]
    }
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::rhombus;

    #[test]
    fn single_triangle_edges() {
        let m = Mesh::new(2, vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![vec![0, 1, 2]]).unwrap();
        let es = EdgeSet::build(&m);
        assert_eq!(es.edges(), &[(0, 1), (0, 2), (1, 2)]);
        for e in 0..3 {
            assert_eq!(es.incident_elements(e).len(), 1);
        }
    }

    #[test]
    fn rhombus_shared_edge() {
        let m = rhombus();
        let es = EdgeSet::build(&m);
        assert_eq!(es.len(), 5);
        let shared = (0..es.len()).find(|&e| es.incident_elements(e).len() == 2).unwrap();
        assert_eq!(es.neighborhood(shared).len(), 5);
        assert!(es.neighborhood(shared).contains(&shared));
    }

    #[test]
    fn single_tetrahedron_edges() {
        let m = Mesh::new(
            3,
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            vec![vec![0, 1, 2, 3]],
        )
        .unwrap();
        let es = EdgeSet::build(&m);
        assert_eq!(es.len(), 6);
        assert!((0..6).all(|e| es.incident_elements(e).len() == 1));
    }
}
