//! Sparse symmetric storage and a profile (skyline) LDLᵀ factorization with
//! reverse Cuthill-McKee ordering.
//!
//! Every linear system in the crate (implicit time steps, Dirichlet exit-time
//! solves, interior-point normal equations, equality-constrained KKT systems)
//! is symmetric and has the sparsity of a mesh graph or of its edge-adjacency
//! graph, so one envelope factorization covers all of them.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Sparse symmetric matrix; only the lower triangle (including the diagonal)
/// is stored, rows sorted by column.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

/// Triplet accumulator for [`SymmetricMatrix`]. Duplicate entries are summed.
#[derive(Debug, Clone)]
pub struct SymmetricBuilder {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SymmetricBuilder {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n: usize, capacity: usize) -> Self {
        Self {
            n,
            entries: Vec::with_capacity(capacity),
        }
    }

    /// Adds `value` to entry (i, j) and, implicitly, to (j, i).
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(i < self.n && j < self.n);
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        self.entries.push((r, c, value));
    }

    pub fn build(mut self) -> SymmetricMatrix {
        self.entries.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.n];
        for (r, c, v) in self.entries {
            let row = &mut rows[r];
            match row.last_mut() {
                Some(last) if last.0 == c => last.1 += v,
                _ => row.push((c, v)),
            }
        }
        SymmetricMatrix { n: self.n, rows }
    }
}

impl SymmetricMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Lower-triangular entries of row `i` (columns `<= i`).
    pub fn lower_row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        self.rows[r]
            .binary_search_by(|e| e.0.cmp(&c))
            .map(|k| self.rows[r][k].1)
            .unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                y[i] += v * x[j];
                if j != i {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.rows
            .iter()
            .flatten()
            .fold(0.0_f64, |m, &(_, v)| m.max(v.abs()))
    }

    /// Copy with `d` added to the diagonal.
    pub fn with_added_diagonal(&self, d: &[f64]) -> SymmetricMatrix {
        let mut rows = self.rows.clone();
        for (i, row) in rows.iter_mut().enumerate() {
            match row.last_mut() {
                Some(last) if last.0 == i => last.1 += d[i],
                _ => row.push((i, d[i])),
            }
        }
        SymmetricMatrix { n: self.n, rows }
    }

    /// Principal submatrix on `indices` (in the given order).
    pub fn submatrix(&self, indices: &[usize]) -> SymmetricMatrix {
        let mut pos = vec![usize::MAX; self.n];
        for (new, &old) in indices.iter().enumerate() {
            pos[old] = new;
        }
        let mut b = SymmetricBuilder::new(indices.len());
        for &old in indices {
            for &(j, v) in &self.rows[old] {
                if pos[j] != usize::MAX {
                    b.add(pos[old], pos[j], v);
                }
            }
        }
        b.build()
    }

    /// Neighbour lists of the off-diagonal pattern.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, _) in row {
                if j != i {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
        adj
    }
}

/// Reverse Cuthill-McKee ordering. Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let degree: Vec<usize> = adjacency.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let bfs_levels = |start: usize, mark: &mut Vec<bool>| -> Vec<Vec<usize>> {
        let mut levels = vec![vec![start]];
        mark[start] = true;
        loop {
            let mut next = Vec::new();
            for &u in levels.last().unwrap() {
                for &v in &adjacency[u] {
                    if !mark[v] {
                        mark[v] = true;
                        next.push(v);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            levels.push(next);
        }
        levels
    };

    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));

    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        // pseudo-peripheral start node
        let mut start = seed;
        let mut depth = 0;
        for _ in 0..4 {
            let mut mark = visited.clone();
            let levels = bfs_levels(start, &mut mark);
            if levels.len() <= depth {
                break;
            }
            depth = levels.len();
            let last = levels.last().unwrap();
            let candidate = *last.iter().min_by_key(|&&v| (degree[v], v)).unwrap();
            if candidate == start {
                break;
            }
            start = candidate;
        }

        let mut queue = VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut nbrs: Vec<usize> = adjacency[u].iter().copied().filter(|&v| !visited[v]).collect();
            nbrs.sort_by_key(|&v| (degree[v], v));
            nbrs.dedup();
            for v in nbrs {
                if !visited[v] {
                    visited[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    order.reverse();
    order
}

/// How zero or negative pivots are treated during factorization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PivotPolicy {
    /// Pivots must exceed `tol * |a_ii|`; anything else is an error.
    Positive { tol: f64 },
    /// Positive semi-definite input: pivots below `tol * a_ii` mark the row
    /// as linearly dependent on earlier rows and its unknown is set to zero.
    DropDependent { tol: f64 },
    /// Symmetric indefinite input without pivoting; only exact breakdown
    /// (|pivot| below `tol * |a_ii|`) is an error.
    Indefinite { tol: f64 },
}

impl Default for PivotPolicy {
    fn default() -> Self {
        PivotPolicy::Positive { tol: 1e-14 }
    }
}

/// Envelope LDLᵀ factorization of a [`SymmetricMatrix`] in RCM order.
#[derive(Debug, Clone)]
pub struct SkylineLdl {
    n: usize,
    perm: Vec<usize>,
    first: Vec<usize>,
    offsets: Vec<usize>,
    lower: Vec<f64>,
    diag: Vec<f64>,
    dropped: Vec<bool>,
}

impl SkylineLdl {
    pub fn factor(a: &SymmetricMatrix, policy: PivotPolicy) -> Result<Self> {
        let perm = reverse_cuthill_mckee(&a.adjacency());
        Self::factor_with_order(a, perm, policy)
    }

    /// Factorizes with an explicit ordering (`perm[new] = old`).
    pub fn factor_with_order(a: &SymmetricMatrix, perm: Vec<usize>, policy: PivotPolicy) -> Result<Self> {
        let n = a.n();
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }

        let mut first: Vec<usize> = (0..n).collect();
        let mut diag = vec![0.0; n];
        for old_r in 0..n {
            for &(old_c, v) in a.lower_row(old_r) {
                let (r, c) = (inv[old_r], inv[old_c]);
                if r == c {
                    diag[r] += v;
                } else {
                    let (hi, lo) = if r > c { (r, c) } else { (c, r) };
                    first[hi] = first[hi].min(lo);
                }
            }
        }
        let mut offsets = vec![0; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + (i - first[i]);
        }
        let mut lower = vec![0.0; offsets[n]];
        for old_r in 0..n {
            for &(old_c, v) in a.lower_row(old_r) {
                let (r, c) = (inv[old_r], inv[old_c]);
                if r != c {
                    let (hi, lo) = if r > c { (r, c) } else { (c, r) };
                    lower[offsets[hi] + lo - first[hi]] += v;
                }
            }
        }

        let original_diag = diag.clone();
        let mut dropped = vec![false; n];
        for i in 0..n {
            let fi = first[i];
            let (done, rest) = lower.split_at_mut(offsets[i]);
            let row = &mut rest[..i - fi];
            // w_j = a_ij - sum_k L_jk w_k
            for j in fi..i {
                if dropped[j] {
                    row[j - fi] = 0.0;
                    continue;
                }
                let fj = first[j];
                let k0 = fi.max(fj);
                let lj = &done[offsets[j]..offsets[j] + (j - fj)];
                let mut s = row[j - fi];
                for k in k0..j {
                    s -= lj[k - fj] * row[k - fi];
                }
                row[j - fi] = s;
            }
            let mut d = diag[i];
            for j in fi..i {
                if dropped[j] {
                    continue;
                }
                let w = row[j - fi];
                let l = w / diag[j];
                d -= l * w;
                row[j - fi] = l;
            }
            let scale = original_diag[i].abs().max(f64::MIN_POSITIVE);
            match policy {
                PivotPolicy::Positive { tol } => {
                    if !(d > tol * scale) {
                        return Err(Error::Singular {
                            pivot: perm[i],
                            value: d,
                        });
                    }
                }
                PivotPolicy::DropDependent { tol } => {
                    if d <= tol * scale {
                        dropped[i] = true;
                        d = 0.0;
                    }
                }
                PivotPolicy::Indefinite { tol } => {
                    if !(d.abs() > tol * scale) {
                        return Err(Error::Singular {
                            pivot: perm[i],
                            value: d,
                        });
                    }
                }
            }
            diag[i] = d;
        }

        Ok(Self {
            n,
            perm,
            first,
            offsets,
            lower,
            diag,
            dropped,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of non-dropped pivots.
    pub fn rank(&self) -> usize {
        self.dropped.iter().filter(|d| !**d).count()
    }

    /// Original indices of rows found linearly dependent.
    pub fn dropped_rows(&self) -> Vec<usize> {
        let mut rows: Vec<usize> = (0..self.n).filter(|&i| self.dropped[i]).map(|i| self.perm[i]).collect();
        rows.sort_unstable();
        rows
    }

    /// Stored entries in the envelope, a proxy for factorization cost.
    pub fn envelope_size(&self) -> usize {
        self.lower.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.lower[self.offsets[i]..self.offsets[i + 1]];
            let mut s = y[i];
            for j in fi..i {
                s -= row[j - fi] * y[j];
            }
            y[i] = s;
        }
        for i in 0..self.n {
            y[i] = if self.dropped[i] { 0.0 } else { y[i] / self.diag[i] };
        }
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = &self.lower[self.offsets[i]..self.offsets[i + 1]];
            let yi = y[i];
            for j in fi..i {
                y[j] -= row[j - fi] * yi;
            }
        }
        let mut x = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> SymmetricMatrix {
        let mut b = SymmetricBuilder::new(n);
        for i in 0..n {
            b.add(i, i, 2.0);
            if i + 1 < n {
                b.add(i + 1, i, -1.0);
            }
        }
        b.build()
    }

    #[test]
    fn solves_tridiagonal_system() {
        let a = laplacian_1d(50);
        let x_true: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.mul_vec(&x_true);
        let f = SkylineLdl::factor(&a, PivotPolicy::default()).unwrap();
        let x = f.solve(&b);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn rcm_is_a_permutation() {
        let a = laplacian_1d(17);
        let mut p = reverse_cuthill_mckee(&a.adjacency());
        p.sort_unstable();
        assert_eq!(p, (0..17).collect::<Vec<_>>());
    }

    #[test]
    fn duplicate_rows_are_dropped() {
        // Gram matrix of rows r0, r1, r0 (third duplicates the first)
        let rows = [[1.0, 2.0, 0.0], [0.0, 1.0, 1.0], [1.0, 2.0, 0.0]];
        let mut b = SymmetricBuilder::new(3);
        for i in 0..3 {
            for j in 0..=i {
                let g: f64 = (0..3).map(|k| rows[i][k] * rows[j][k]).sum();
                b.add(i, j, g);
            }
        }
        let f = SkylineLdl::factor_with_order(&b.build(), vec![0, 1, 2], PivotPolicy::DropDependent { tol: 1e-10 }).unwrap();
        assert_eq!(f.rank(), 2);
        assert_eq!(f.dropped_rows(), vec![2]);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut b = SymmetricBuilder::new(2);
        b.add(0, 0, 1.0);
        b.add(1, 1, 1.0);
        b.add(1, 0, 1.0);
        assert!(matches!(
            SkylineLdl::factor(&b.build(), PivotPolicy::default()),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn indefinite_system_without_pivoting() {
        let mut b = SymmetricBuilder::new(2);
        b.add(0, 0, 2.0);
        b.add(1, 1, -3.0);
        b.add(1, 0, 1.0);
        let a = b.build();
        let f = SkylineLdl::factor(&a, PivotPolicy::Indefinite { tol: 1e-14 }).unwrap();
        let x = f.solve(&[1.0, 2.0]);
        let r = a.mul_vec(&x);
        assert!((r[0] - 1.0).abs() < 1e-12 && (r[1] - 2.0).abs() < 1e-12);
    }
}
