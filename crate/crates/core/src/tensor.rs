//! Per-element symmetric diffusion tensors and small symmetric eigensolvers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{component_indices, components};

/// One symmetric d×d tensor per element, stored as component vectors
/// (2D: γ11, γ22, γ12; 3D: γ11, γ22, γ33, γ12, γ13, γ23).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementDiffusionField {
    dim: usize,
    data: Vec<f64>,
}

impl ElementDiffusionField {
    /// γ·I on every element.
    pub fn isotropic(dim: usize, elements: usize, gamma: f64) -> Self {
        let l = components(dim);
        let mut data = vec![0.0; elements * l];
        for k in 0..elements {
            for c in 0..dim {
                data[k * l + c] = gamma;
            }
        }
        Self { dim, data }
    }

    pub fn from_vec(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidArgument(format!("dimension must be 2 or 3, got {dim}")));
        }
        if data.len() % components(dim) != 0 {
            return Err(Error::Dimension {
                expected: components(dim),
                actual: data.len() % components(dim),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of elements.
    pub fn len(&self) -> usize {
        self.data.len() / components(self.dim)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn element(&self, k: usize) -> &[f64] {
        let l = components(self.dim);
        &self.data[k * l..(k + 1) * l]
    }

    pub fn element_mut(&mut self, k: usize) -> &mut [f64] {
        let l = components(self.dim);
        &mut self.data[k * l..(k + 1) * l]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Dense 3×3 form of element `k` (the unused row/column is zero in 2D).
    pub fn matrix(&self, k: usize) -> [[f64; 3]; 3] {
        to_matrix(self.dim, self.element(k))
    }
}

pub fn to_matrix(dim: usize, comps: &[f64]) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for (l, &(a, b)) in component_indices(dim).iter().enumerate() {
        m[a][b] = comps[l];
        m[b][a] = comps[l];
    }
    m
}

/// Eigen-decomposition of a symmetric 2×2 or 3×3 tensor; values ascending,
/// `vectors[i]` belongs to `values[i]`. Only the first `dim` entries are used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymEigen {
    pub dim: usize,
    pub values: [f64; 3],
    pub vectors: [[f64; 3]; 3],
}

impl SymEigen {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.dim - 1]
    }

    pub fn principal(&self) -> [f64; 3] {
        self.vectors[self.dim - 1]
    }
}

pub fn sym_eigen(dim: usize, comps: &[f64]) -> SymEigen {
    if dim == 2 {
        eigen2(comps[0], comps[1], comps[2])
    } else {
        eigen3(&to_matrix(3, comps))
    }
}

fn eigen2(a: f64, c: f64, b: f64) -> SymEigen {
    let m = 0.5 * (a + c);
    let r = (0.5 * (a - c)).hypot(b);
    let hi = m + r;
    let lo = m - r;
    let v = if r == 0.0 {
        [1.0, 0.0]
    } else {
        // Two candidate eigenvectors of hi; take the better conditioned one.
        let p = [b, hi - a];
        let q = [hi - c, b];
        let (x, y) = if p[0].hypot(p[1]) >= q[0].hypot(q[1]) { (p[0], p[1]) } else { (q[0], q[1]) };
        let n = x.hypot(y);
        let (mut x, mut y) = (x / n, y / n);
        if x < 0.0 || (x == 0.0 && y < 0.0) {
            x = -x;
            y = -y;
        }
        [x, y]
    };
    SymEigen {
        dim: 2,
        values: [lo, hi, 0.0],
        vectors: [[-v[1], v[0], 0.0], [v[0], v[1], 0.0], [0.0; 3]],
    }
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm(a: &[f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Null vector of (A − λI) from the best cross product of its rows.
fn null_vector(a: &[[f64; 3]; 3], lambda: f64) -> ([f64; 3], f64) {
    let r: Vec<[f64; 3]> = (0..3)
        .map(|i| {
            let mut row = a[i];
            row[i] -= lambda;
            row
        })
        .collect();
    let cands = [cross(&r[0], &r[1]), cross(&r[0], &r[2]), cross(&r[1], &r[2])];
    let best = cands
        .iter()
        .max_by(|x, y| norm(x).total_cmp(&norm(y)))
        .copied()
        .expect("three candidates");
    let n = norm(&best);
    (best.map(|v| v / n), n)
}

fn eigen3(a: &[[f64; 3]; 3]) -> SymEigen {
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return SymEigen {
            dim: 3,
            values: [0.0; 3],
            vectors: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        };
    }
    let p1 = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    if p < 1e-12 * scale {
        return jacobi3(a);
    }
    let mut b = *a;
    for i in 0..3 {
        b[i][i] -= q;
        for j in 0..3 {
            b[i][j] /= p;
        }
    }
    let det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let phi = (0.5 * det).clamp(-1.0, 1.0).acos() / 3.0;
    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
    let mid = 3.0 * q - hi - lo;
    // Cross-product vectors lose accuracy as eigenvalues approach each other.
    if (hi - mid).min(mid - lo) < 1e-6 * scale {
        return jacobi3(a);
    }
    let (v_hi, n_hi) = null_vector(a, hi);
    let (v_lo, n_lo) = null_vector(a, lo);
    if n_hi < 1e-12 * scale * scale || n_lo < 1e-12 * scale * scale {
        return jacobi3(a);
    }
    let v_mid = cross(&v_hi, &v_lo);
    SymEigen {
        dim: 3,
        values: [lo, mid, hi],
        vectors: [v_lo, v_mid, v_hi],
    }
}

/// Cyclic Jacobi for a symmetric 3×3 matrix.
pub(crate) fn jacobi3(a: &[[f64; 3]; 3]) -> SymEigen {
    let mut m = *a;
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _ in 0..64 {
        let off = m[0][1].abs() + m[0][2].abs() + m[1][2].abs();
        let diag = m[0][0].abs() + m[1][1].abs() + m[2][2].abs();
        if off <= 1e-300 || off < 1e-17 * diag {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if m[p][q] == 0.0 {
                continue;
            }
            let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..3 {
                let mkp = m[k][p];
                let mkq = m[k][q];
                m[k][p] = c * mkp - s * mkq;
                m[k][q] = s * mkp + c * mkq;
            }
            for k in 0..3 {
                let mpk = m[p][k];
                let mqk = m[q][k];
                m[p][k] = c * mpk - s * mqk;
                m[q][k] = s * mpk + c * mqk;
            }
            for row in v.iter_mut() {
                let vp = row[p];
                let vq = row[q];
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&x, &y| m[x][x].total_cmp(&m[y][y]));
    let values = order.map(|i| m[i][i]);
    let vectors = order.map(|i| [v[0][i], v[1][i], v[2][i]]);
    SymEigen {
        dim: 3,
        values,
        vectors,
    }
}

/// ‖γ̃ − γI‖₂ = max_j |λ_j − γ|.
pub fn spectral_deviation(dim: usize, comps: &[f64], gamma: f64) -> f64 {
    let e = sym_eigen(dim, comps);
    (e.min() - gamma).abs().max((e.max() - gamma).abs())
}

/// ‖γ̃ − γI‖_F; off-diagonal components count twice.
pub fn frobenius_deviation(dim: usize, comps: &[f64], gamma: f64) -> f64 {
    let mut s = 0.0;
    for (l, &c) in comps.iter().enumerate() {
        if l < dim {
            s += (c - gamma).powi(2);
        } else {
            s += 2.0 * c * c;
        }
    }
    s.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_decomposition(dim: usize, comps: &[f64]) {
        let e = sym_eigen(dim, comps);
        let m = to_matrix(dim, comps);
        let scale = comps.iter().fold(1e-300f64, |a, b| a.max(b.abs()));
        for i in 0..dim {
            let v = e.vectors[i];
            assert!((norm(&v) - 1.0).abs() < 1e-10);
            for r in 0..dim {
                let mv: f64 = (0..dim).map(|c| m[r][c] * v[c]).sum();
                assert!((mv - e.values[i] * v[r]).abs() < 1e-9 * scale, "{comps:?}");
            }
        }
        assert!(e.values[..dim].windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn two_by_two_cases() {
        let e = sym_eigen(2, &[1.0, 1.0, 0.6]);
        assert!((e.max() - 1.6).abs() < 1e-15 && (e.min() - 0.4).abs() < 1e-15);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.principal()[0] - h).abs() < 1e-15 && (e.principal()[1] - h).abs() < 1e-15);
        let d = sym_eigen(2, &[2.0, 0.5, 0.0]);
        assert_eq!(d.principal(), [1.0, 0.0, 0.0]);
        assert_eq!(d.min() / d.max(), 0.25);
        let iso = sym_eigen(2, &[3.0, 3.0, 0.0]);
        assert_eq!(iso.principal(), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn three_by_three_distinct_and_degenerate() {
        check_decomposition(3, &[2.0, 1.0, 0.5, 0.3, -0.2, 0.1]);
        check_decomposition(3, &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        check_decomposition(3, &[1.0, 1.0, 2.0, 0.0, 0.0, 0.0]);
        check_decomposition(3, &[1.0, 1.0, 1.0, 1e-9, 0.0, 0.0]);
        check_decomposition(3, &[0.0; 6]);
        check_decomposition(2, &[-1.0, 4.0, 2.5]);
    }

    #[test]
    fn deviations_of_simple_tensors() {
        let g = 1.3;
        assert!((spectral_deviation(2, &[g + 0.2, g, 0.0], g) - 0.2).abs() < 1e-15);
        assert!((frobenius_deviation(2, &[g + 0.2, g - 0.2, 0.0], g) - 0.2 * 2f64.sqrt()).abs() < 1e-15);
        assert!((frobenius_deviation(2, &[g, g, 0.1], g) - 0.1 * 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn field_layout() {
        let mut f = ElementDiffusionField::isotropic(3, 2, 0.7);
        assert_eq!(f.element(1), &[0.7, 0.7, 0.7, 0.0, 0.0, 0.0]);
        f.element_mut(0)[4] = 0.25;
        assert_eq!(f.matrix(0)[2][0], 0.25);
        assert!(ElementDiffusionField::from_vec(2, vec![0.0; 5]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn random_tensors_decompose(c in proptest::collection::vec(-5.0f64..5.0, 6)) {
                check_decomposition(3, &c);
                check_decomposition(2, &c[..3]);
            }
        }
    }
}
