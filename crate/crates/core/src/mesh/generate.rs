//! Mesh generators for tests, fixtures and the `mesh gen` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EdgeSet, Mesh, Point};
use crate::error::{Error, Result};

const MAX_ATTEMPTS: u64 = 100;

/// Uniform right-triangle mesh of [−0.5, 0.5]² with `n` cells per side; every
/// cell is split along the same diagonal.
pub fn structured_square(n: usize) -> Mesh {
    perturbed_square_attempt(n, 0.0, None).expect("structured mesh is valid")
}

/// Structured square with seeded node jitter. Interior nodes move uniformly
/// within a disc of radius `jitter·h`; boundary nodes slide along their side
/// and corners stay fixed. For `jitter ≥ 0.3` the mesh must contain an edge
/// whose opposing angles sum above π; invalid or non-qualifying draws are
/// retried with the next RNG stream, at most 100 times.
pub fn generate_perturbed_square(n: usize, jitter: f64, seed: u64) -> Result<Mesh> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("grid size must be at least 2, got {n}")));
    }
    if !(0.0..0.5).contains(&jitter) {
        return Err(Error::InvalidArgument(format!("jitter must lie in [0, 0.5), got {jitter}")));
    }
    if jitter == 0.0 {
        return Ok(structured_square(n));
    }
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt);
        let Ok(mesh) = perturbed_square_attempt(n, jitter, Some(&mut rng)) else {
            continue;
        };
        if jitter < 0.3 || !negative_angle_edges(&mesh, &EdgeSet::build(&mesh)).is_empty() {
            if attempt > 0 {
                log::debug!("perturbed square accepted after {} attempts", attempt + 1);
            }
            return Ok(mesh);
        }
    }
    Err(Error::Failed(format!(
        "no valid perturbed mesh with a negative edge after {MAX_ATTEMPTS} attempts (n={n}, jitter={jitter}, seed={seed})"
    )))
}

fn perturbed_square_attempt(n: usize, jitter: f64, mut rng: Option<&mut ChaCha8Rng>) -> Result<Mesh> {
    let h = 1.0 / n as f64;
    let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let mut p = [-0.5 + i as f64 * h, -0.5 + j as f64 * h, 0.0];
            if let Some(rng) = rng.as_deref_mut() {
                let on_x = i == 0 || i == n;
                let on_y = j == 0 || j == n;
                match (on_x, on_y) {
                    (true, true) => {}
                    (true, false) => p[1] += jitter * h * rng.random_range(-1.0..1.0),
                    (false, true) => p[0] += jitter * h * rng.random_range(-1.0..1.0),
                    (false, false) => {
                        let r = jitter * h * rng.random::<f64>().sqrt();
                        let t = std::f64::consts::TAU * rng.random::<f64>();
                        p[0] += r * t.cos();
                        p[1] += r * t.sin();
                    }
                }
            }
            nodes.push(p);
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut simplices = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            simplices.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            simplices.push(vec![id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    // A flipped triangle would be silently reoriented by Mesh::new, which
    // hides an overlapping mesh, so orientation is checked first.
    if !all_positive(2, &nodes, &simplices) {
        return Err(Error::InvalidMesh("jitter inverted a triangle".into()));
    }
    Mesh::new(2, nodes, simplices)
}

/// 2D edges whose standard stiffness entry (cot φ + cot θ)/2 is negative.
pub fn negative_angle_edges(mesh: &Mesh, edges: &EdgeSet) -> Vec<usize> {
    (0..edges.len())
        .filter(|&e| {
            let angles = super::opposing_angles(mesh, edges, e).unwrap_or_default();
            let s: f64 = angles.iter().map(|a| 0.5 / a.tan()).sum();
            s < -1e-12
        })
        .collect()
}

/// Two equilateral triangles of unit side sharing the edge (0, 1).
pub fn rhombus() -> Mesh {
    let s = 3f64.sqrt() / 2.0;
    Mesh::new(
        2,
        vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, s, 0.0], [0.5, -s, 0.0]],
        vec![vec![0, 1, 2], vec![0, 3, 1]],
    )
    .expect("rhombus is valid")
}

/// Two triangles sharing the vertical edge (0, ±0.5) whose opposing angles
/// both equal `angle` (radians). Node 0 and 1 form the shared edge.
pub fn obtuse_pair(angle: f64) -> Result<Mesh> {
    if !(angle > 0.0 && angle < std::f64::consts::PI) {
        return Err(Error::InvalidArgument(format!("angle must lie in (0, π), got {angle}")));
    }
    let d = 0.5 / (angle / 2.0).tan();
    Mesh::new(
        2,
        vec![[0.0, -0.5, 0.0], [0.0, 0.5, 0.0], [-d, 0.0, 0.0], [d, 0.0, 0.0]],
        vec![vec![0, 1, 2], vec![0, 3, 1]],
    )
}

/// Structured strip [0, 1] × [0, width] with `n` cells along x and one across.
pub fn strip(n: usize, width: f64) -> Result<Mesh> {
    if n < 1 || width <= 0.0 {
        return Err(Error::InvalidArgument("strip needs n ≥ 1 and width > 0".into()));
    }
    let h = 1.0 / n as f64;
    let mut nodes = Vec::with_capacity(2 * (n + 1));
    for j in 0..2 {
        for i in 0..=n {
            nodes.push([i as f64 * h, j as f64 * width, 0.0]);
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut simplices = Vec::with_capacity(2 * n);
    for i in 0..n {
        simplices.push(vec![id(i, 0), id(i + 1, 0), id(i + 1, 1)]);
        simplices.push(vec![id(i, 0), id(i + 1, 1), id(i, 1)]);
    }
    Mesh::new(2, nodes, simplices)
}

/// Unit disc from `rings` concentric rings, ring k holding 6k nodes, stitched
/// ring to ring by angle. Node count is 1 + 3·rings·(rings+1).
pub fn disc(rings: usize) -> Result<Mesh> {
    if rings < 1 {
        return Err(Error::InvalidArgument("disc needs at least one ring".into()));
    }
    let mut nodes: Vec<Point> = vec![[0.0; 3]];
    let mut ring_start = vec![0usize];
    let mut ring_len = vec![1usize];
    for k in 1..=rings {
        ring_start.push(nodes.len());
        ring_len.push(6 * k);
        let r = k as f64 / rings as f64;
        for j in 0..6 * k {
            let t = std::f64::consts::TAU * j as f64 / (6 * k) as f64;
            nodes.push([r * t.cos(), r * t.sin(), 0.0]);
        }
    }
    let mut simplices = Vec::new();
    for k in 1..=rings {
        let (o0, m_out) = (ring_start[k], ring_len[k]);
        if k == 1 {
            for j in 0..m_out {
                simplices.push(vec![0, o0 + j, o0 + (j + 1) % m_out]);
            }
            continue;
        }
        let (i0, m_in) = (ring_start[k - 1], ring_len[k - 1]);
        let (mut i, mut j) = (0usize, 0usize);
        while i < m_in || j < m_out {
            let next_in = (i + 1) as f64 / m_in as f64;
            let next_out = (j + 1) as f64 / m_out as f64;
            if j < m_out && (i == m_in || next_out <= next_in) {
                simplices.push(vec![i0 + i % m_in, o0 + j, o0 + (j + 1) % m_out]);
                j += 1;
            } else {
                simplices.push(vec![i0 + i, o0 + j % m_out, i0 + (i + 1) % m_in]);
                i += 1;
            }
        }
    }
    Mesh::new(2, nodes, simplices)
}

fn kuhn_simplices(n: usize) -> Vec<Vec<usize>> {
    let id = |i: usize, j: usize, k: usize| (k * (n + 1) + j) * (n + 1) + i;
    let axes = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];
    // Even permutations give positively oriented tetrahedra.
    let perms = [[0, 1, 2], [1, 2, 0], [2, 0, 1], [0, 2, 1], [1, 0, 2], [2, 1, 0]];
    let mut simplices = Vec::with_capacity(6 * n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                for (parity, p) in perms.iter().enumerate() {
                    let mut c = [i, j, k];
                    let mut tet = vec![id(c[0], c[1], c[2])];
                    for &a in p {
                        for d in 0..3 {
                            c[d] += axes[a][d];
                        }
                        tet.push(id(c[0], c[1], c[2]));
                    }
                    if parity >= 3 {
                        tet.swap(2, 3);
                    }
                    simplices.push(tet);
                }
            }
        }
    }
    simplices
}

fn jitter_ball(rng: &mut ChaCha8Rng, radius: f64) -> Point {
    loop {
        let p = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        if p[0] * p[0] + p[1] * p[1] + p[2] * p[2] <= 1.0 {
            return p.map(|c| c * radius);
        }
    }
}

/// Kuhn (six tetrahedra per cell) mesh of [−0.5, 0.5]³ with `n` cells per
/// side. Interior nodes are jittered within a ball of radius `jitter·h`;
/// boundary nodes stay fixed. Inverted draws are retried like the 2D case.
pub fn cube(n: usize, jitter: f64, seed: u64) -> Result<Mesh> {
    if n < 1 {
        return Err(Error::InvalidArgument("cube needs n ≥ 1".into()));
    }
    if !(0.0..0.5).contains(&jitter) {
        return Err(Error::InvalidArgument(format!("jitter must lie in [0, 0.5), got {jitter}")));
    }
    let h = 1.0 / n as f64;
    let simplices = kuhn_simplices(n);
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt);
        let mut nodes = Vec::with_capacity((n + 1).pow(3));
        for k in 0..=n {
            for j in 0..=n {
                for i in 0..=n {
                    let mut p = [-0.5 + i as f64 * h, -0.5 + j as f64 * h, -0.5 + k as f64 * h];
                    let interior = [i, j, k].iter().all(|&c| c > 0 && c < n);
                    if interior && jitter > 0.0 {
                        let d = jitter_ball(&mut rng, jitter * h);
                        for c in 0..3 {
                            p[c] += d[c];
                        }
                    }
                    nodes.push(p);
                }
            }
        }
        if all_positive(3, &nodes, &simplices) {
            return Mesh::new(3, nodes, simplices);
        }
    }
    Err(Error::Failed(format!("no valid jittered cube after {MAX_ATTEMPTS} attempts")))
}

/// Unit ball: a Kuhn mesh of [−1, 1]³ with `n` cells per side pushed onto
/// the ball by the smooth cube-to-sphere map, so boundary nodes lie on the
/// unit sphere.
pub fn ball(n: usize) -> Result<Mesh> {
    if n < 2 {
        return Err(Error::InvalidArgument("ball needs n ≥ 2".into()));
    }
    let h = 2.0 / n as f64;
    let mut nodes = Vec::with_capacity((n + 1).pow(3));
    for k in 0..=n {
        for j in 0..=n {
            for i in 0..=n {
                let (x, y, z) = (-1.0 + i as f64 * h, -1.0 + j as f64 * h, -1.0 + k as f64 * h);
                let (x2, y2, z2) = (x * x, y * y, z * z);
                nodes.push([
                    x * (1.0 - y2 / 2.0 - z2 / 2.0 + y2 * z2 / 3.0).sqrt(),
                    y * (1.0 - z2 / 2.0 - x2 / 2.0 + z2 * x2 / 3.0).sqrt(),
                    z * (1.0 - x2 / 2.0 - y2 / 2.0 + x2 * y2 / 3.0).sqrt(),
                ]);
            }
        }
    }
    let simplices = kuhn_simplices(n);
    if !all_positive(3, &nodes, &simplices) {
        return Err(Error::InvalidMesh("cube-to-ball map inverted an element".into()));
    }
    Mesh::new(3, nodes, simplices)
}

fn all_positive(dim: usize, nodes: &[Point], simplices: &[Vec<usize>]) -> bool {
    let eps = super::volume_epsilon(dim, nodes);
    simplices.iter().all(|s| super::signed_volume(dim, nodes, s) > eps)
}
