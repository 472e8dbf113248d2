use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{SymmetricBuilder, SymmetricMatrix};
use crate::mesh::EdgeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorRole {
    Stiffness,
    Generator,
}

/// Square matrix on a mesh edge pattern. For each edge `(i, j)` with `i < j`
/// it stores the upper entry A_ij and the lower entry A_ji; the diagonal is
/// kept separately.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeOperator {
    role: OperatorRole,
    pairs: Vec<(usize, usize)>,
    upper: Vec<f64>,
    lower: Vec<f64>,
    diagonal: Vec<f64>,
}

impl EdgeOperator {
    /// Symmetric operator from one value per edge; the diagonal is set for
    /// zero row sums.
    pub fn from_edge_values(role: OperatorRole, n: usize, pairs: &[(usize, usize)], values: Vec<f64>) -> Self {
        assert_eq!(pairs.len(), values.len());
        let mut op = Self {
            role,
            pairs: pairs.to_vec(),
            upper: values.clone(),
            lower: values,
            diagonal: vec![0.0; n],
        };
        op.zero_row_sums();
        op
    }

    /// Operator from explicit upper, lower and diagonal parts.
    pub fn from_parts(
        role: OperatorRole,
        pairs: Vec<(usize, usize)>,
        upper: Vec<f64>,
        lower: Vec<f64>,
        diagonal: Vec<f64>,
    ) -> Self {
        assert!(pairs.len() == upper.len() && pairs.len() == lower.len());
        Self {
            role,
            pairs,
            upper,
            lower,
            diagonal,
        }
    }

    pub fn role(&self) -> OperatorRole {
        self.role
    }

    pub fn n(&self) -> usize {
        self.diagonal.len()
    }

    pub fn num_edges(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// A_ij for edge `e = (i, j)`, `i < j`.
    pub fn upper(&self, e: usize) -> f64 {
        self.upper[e]
    }

    /// A_ji for edge `e = (i, j)`, `i < j`.
    pub fn lower(&self, e: usize) -> f64 {
        self.lower[e]
    }

    pub fn upper_values(&self) -> &[f64] {
        &self.upper
    }

    pub fn lower_values(&self) -> &[f64] {
        &self.lower
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    /// Sets both A_ij and A_ji. The diagonal is not touched.
    pub fn set_symmetric(&mut self, e: usize, value: f64) {
        self.upper[e] = value;
        self.lower[e] = value;
    }

    pub fn set_upper(&mut self, e: usize, value: f64) {
        self.upper[e] = value;
    }

    pub fn set_lower(&mut self, e: usize, value: f64) {
        self.lower[e] = value;
    }

    /// Recomputes the diagonal so that every row sums to zero.
    pub fn zero_row_sums(&mut self) {
        self.diagonal.iter_mut().for_each(|d| *d = 0.0);
        for (e, &(i, j)) in self.pairs.iter().enumerate() {
            self.diagonal[i] -= self.upper[e];
            self.diagonal[j] -= self.lower[e];
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.diagonal.iter().zip(x).map(|(d, v)| d * v).collect();
        for (e, &(i, j)) in self.pairs.iter().enumerate() {
            y[i] += self.upper[e] * x[j];
            y[j] += self.lower[e] * x[i];
        }
        y
    }

    /// Largest absolute entry, diagonal included.
    /// Aᵀx.
    pub fn mul_transpose_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.diagonal.iter().zip(x).map(|(d, v)| d * v).collect();
        for (e, &(i, j)) in self.pairs.iter().enumerate() {
            y[j] += self.upper[e] * x[i];
            y[i] += self.lower[e] * x[j];
        }
        y
    }

    pub fn max_abs(&self) -> f64 {
        self.upper
            .iter()
            .chain(&self.lower)
            .chain(&self.diagonal)
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_asymmetry(&self) -> f64 {
        self.upper.iter().zip(&self.lower).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_symmetric(&self) -> bool {
        self.upper == self.lower
    }

    pub fn max_row_sum(&self) -> f64 {
        let ones = vec![1.0; self.n()];
        self.mul_vec(&ones).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Smallest off-diagonal entry (+∞ for an operator without edges).
    pub fn min_off_diagonal(&self) -> f64 {
        self.upper.iter().chain(&self.lower).copied().fold(f64::INFINITY, f64::min)
    }

    /// Symmetric matrix of the symmetric part, for the sparse solvers.
    pub fn to_symmetric_matrix(&self) -> SymmetricMatrix {
        let mut b = SymmetricBuilder::with_capacity(self.n(), self.n() + self.pairs.len());
        for (i, &d) in self.diagonal.iter().enumerate() {
            b.add(i, i, d);
        }
        for (e, &(i, j)) in self.pairs.iter().enumerate() {
            b.add(i, j, 0.5 * (self.upper[e] + self.lower[e]));
        }
        b.build()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.n();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for (i, &d) in self.diagonal.iter().enumerate() {
            m[(i, i)] = d;
        }
        for (e, &(i, j)) in self.pairs.iter().enumerate() {
            m[(i, j)] = self.upper[e];
            m[(j, i)] = self.lower[e];
        }
        m
    }

    /// The contract every repaired stiffness must meet: non-negative
    /// off-diagonals down to `-tol·max|A|`, symmetry to 1e-12 scaled and zero
    /// row sums to 1e-10 scaled. Returns the first violation as text.
    pub fn check_generator_contract(&self, tol: f64) -> std::result::Result<(), String> {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        if self.min_off_diagonal() < -tol * scale {
            return Err(format!("negative off-diagonal {:e}", self.min_off_diagonal()));
        }
        if self.max_asymmetry() > 1e-12 * scale {
            return Err(format!("asymmetry {:e}", self.max_asymmetry()));
        }
        if self.max_row_sum() > 1e-10 * scale {
            return Err(format!("row sum {:e}", self.max_row_sum()));
        }
        Ok(())
    }

    /// Text dump, one "row col value" line per stored entry, diagonal
    /// included, values with 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut rows: Vec<(usize, usize, f64)> = Vec::with_capacity(self.n() + 2 * self.pairs.len());
        for (i, &d) in self.diagonal.iter().enumerate() {
            rows.push((i, i, d));
        }
        for (e, &(i, j)) in self.pairs.iter().enumerate() {
            rows.push((i, j, self.upper[e]));
            rows.push((j, i, self.lower[e]));
        }
        rows.sort_by_key(|&(r, c, _)| (r, c));
        let mut out = String::with_capacity(rows.len() * 32);
        for (r, c, v) in rows {
            writeln!(out, "{r} {c} {v:.16e}").expect("write to string");
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Parses a matrix dump onto the edge pattern of `edges`. Entries outside
    /// the pattern are rejected; missing entries are zero; the diagonal is
    /// taken from the file.
    pub fn from_text(text: &str, role: OperatorRole, n: usize, edges: &EdgeSet) -> Result<Self> {
        let mut op = Self {
            role,
            pairs: edges.edges().to_vec(),
            upper: vec![0.0; edges.len()],
            lower: vec![0.0; edges.len()],
            diagonal: vec![0.0; n],
        };
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with('%') {
                continue;
            }
            let bad = || Error::Parse(format!("matrix line {}: expected 'row col value', got '{line}'", lineno + 1));
            let mut it = line.split_whitespace();
            let r: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let c: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let v: f64 = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            if it.next().is_some() {
                return Err(bad());
            }
            if r >= n || c >= n {
                return Err(Error::OutsidePattern { row: r, col: c });
            }
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("matrix entry ({r}, {c})")));
            }
            if r == c {
                op.diagonal[r] = v;
                continue;
            }
            let e = edges.find(r, c).ok_or(Error::OutsidePattern { row: r, col: c })?;
            if r < c {
                op.upper[e] = v;
            } else {
                op.lower[e] = v;
            }
        }
        Ok(op)
    }

    pub fn read(path: impl AsRef<Path>, role: OperatorRole, n: usize, edges: &EdgeSet) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, role, n, edges)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::rhombus;

    #[test]
    fn text_round_trip_is_exact() {
        let m = rhombus();
        let es = EdgeSet::build(&m);
        let vals: Vec<f64> = (0..es.len()).map(|e| 0.1 + e as f64 / 3.0).collect();
        let op = EdgeOperator::from_edge_values(OperatorRole::Stiffness, 4, es.edges(), vals);
        let back = EdgeOperator::from_text(&op.to_text(), OperatorRole::Stiffness, 4, &es).unwrap();
        assert_eq!(op, back);
        assert!(op.max_row_sum() < 1e-15);
    }

    #[test]
    fn entries_off_pattern_are_rejected() {
        let m = rhombus();
        let es = EdgeSet::build(&m);
        let err = EdgeOperator::from_text("2 3 1.0\n", OperatorRole::Stiffness, 4, &es).unwrap_err();
        assert!(matches!(err, Error::OutsidePattern { row: 2, col: 3 }));
    }

    #[test]
    fn garbage_line_is_a_parse_error() {
        let m = rhombus();
        let es = EdgeSet::build(&m);
        assert!(matches!(
            EdgeOperator::from_text("0 1\n", OperatorRole::Stiffness, 4, &es),
            Err(Error::Parse(_))
        ));
    }
}
