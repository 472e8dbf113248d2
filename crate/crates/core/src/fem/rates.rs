use std::fmt::Write as _;
use std::path::Path;

use super::{rate_epsilon, EdgeOperator};
use crate::error::{Error, Result};
use crate::mesh::DualVoxels;

/// Jump rates λ_ji = S_ij/|V_j| for a molecule in voxel j moving to voxel i.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpRates {
    /// `outgoing[j]` lists `(i, λ_ji)` sorted by `i`; zero rates are kept so
    /// the neighbour structure matches the mesh.
    outgoing: Vec<Vec<(usize, f64)>>,
    total: Vec<f64>,
}

impl JumpRates {
    /// Rates from explicit per-node lists. Negative or non-finite rates are
    /// rejected.
    pub fn from_outgoing(mut outgoing: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = outgoing.len();
        for (j, list) in outgoing.iter_mut().enumerate() {
            list.sort_by_key(|&(i, _)| i);
            for &(i, r) in list.iter() {
                if i >= n || i == j {
                    return Err(Error::InvalidArgument(format!("rate {j} -> {i} is not between two distinct voxels")));
                }
                if !r.is_finite() || r < 0.0 {
                    return Err(Error::InvalidArgument(format!("rate {j} -> {i} is {r}")));
                }
            }
        }
        let total = outgoing.iter().map(|l| l.iter().map(|&(_, r)| r).sum()).collect();
        Ok(Self { outgoing, total })
    }

    pub fn num_voxels(&self) -> usize {
        self.outgoing.len()
    }

    pub fn outgoing(&self, j: usize) -> &[(usize, f64)] {
        &self.outgoing[j]
    }

    /// λ_j = Σ_i λ_ji.
    pub fn total(&self, j: usize) -> f64 {
        self.total[j]
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.outgoing[from]
            .binary_search_by_key(&to, |&(i, _)| i)
            .map(|p| self.outgoing[from][p].1)
            .unwrap_or(0.0)
    }

    /// CSV with header `from,to,rate`, one line per directed edge.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("from,to,rate\n");
        for (j, list) in self.outgoing.iter().enumerate() {
            for &(i, r) in list {
                writeln!(out, "{j},{i},{r:.16e}").expect("write to string");
            }
        }
        out
    }

    /// Parses the CSV produced by [`JumpRates::to_csv`]. The voxel count is
    /// `n` if given, else one more than the largest index.
    pub fn from_csv(text: &str, n: Option<usize>) -> Result<Self> {
        let mut triples = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (lineno == 0 && line.starts_with("from")) {
                continue;
            }
            let bad = || Error::Parse(format!("rates line {}: expected 'from,to,rate', got '{line}'", lineno + 1));
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(bad());
            }
            let j: usize = parts[0].parse().map_err(|_| bad())?;
            let i: usize = parts[1].parse().map_err(|_| bad())?;
            let r: f64 = parts[2].parse().map_err(|_| bad())?;
            triples.push((j, i, r));
        }
        let n = n.unwrap_or_else(|| triples.iter().map(|&(j, i, _)| j.max(i) + 1).max().unwrap_or(0));
        let mut outgoing = vec![Vec::new(); n];
        for (j, i, r) in triples {
            if j >= n || i >= n {
                return Err(Error::InvalidArgument(format!("rate {j} -> {i} outside {n} voxels")));
            }
            outgoing[j].push((i, r));
        }
        Self::from_outgoing(outgoing)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>, n: Option<usize>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text, n)
    }
}

/// λ_ji = max(S_ij, 0)/|V_j|. Entries in (−rate_epsilon, 0) are clamped to
/// zero; anything more negative is refused.
pub fn jump_rates(stiffness: &EdgeOperator, voxels: &DualVoxels) -> Result<JumpRates> {
    let eps = rate_epsilon(stiffness);
    let offending: Vec<(usize, usize, f64)> = stiffness
        .pairs()
        .iter()
        .enumerate()
        .filter_map(|(e, &(i, j))| {
            let v = stiffness.upper(e).min(stiffness.lower(e));
            (v < -eps).then_some((i, j, v))
        })
        .collect();
    if !offending.is_empty() {
        return Err(Error::NegativeCoefficient { edges: offending });
    }
    let v = &voxels.volumes;
    let mut outgoing = vec![Vec::new(); stiffness.n()];
    for (e, &(i, j)) in stiffness.pairs().iter().enumerate() {
        // S_ij feeds the jump j -> i, S_ji the jump i -> j.
        outgoing[j].push((i, stiffness.upper(e).max(0.0) / v[j]));
        outgoing[i].push((j, stiffness.lower(e).max(0.0) / v[i]));
    }
    JumpRates::from_outgoing(outgoing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::Discretization;
    use crate::mesh::{obtuse_pair, rhombus};

    #[test]
    fn rhombus_rate_across_shared_edge_is_two() {
        let d = Discretization::new(rhombus()).unwrap();
        let r = jump_rates(&d.stiffness(1.0), &d.voxels).unwrap();
        assert!((r.rate(0, 1) - 2.0).abs() < 1e-12);
        assert!((r.rate(1, 0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn negative_entry_is_refused_with_edge() {
        let d = Discretization::new(obtuse_pair(100f64.to_radians()).unwrap()).unwrap();
        match jump_rates(&d.stiffness(1.0), &d.voxels) {
            Err(Error::NegativeCoefficient { edges }) => {
                assert_eq!(edges.len(), 1);
                assert_eq!((edges[0].0, edges[0].1), (0, 1));
            }
            other => panic!("expected NegativeCoefficient, got {other:?}"),
        }
    }

    #[test]
    fn zero_operator_gives_zero_rates() {
        let d = Discretization::new(rhombus()).unwrap();
        let r = jump_rates(&d.stiffness(0.0), &d.voxels).unwrap();
        assert!((0..4).all(|j| r.total(j) == 0.0));
    }

    #[test]
    fn csv_round_trip_and_detailed_balance() {
        let d = Discretization::new(rhombus()).unwrap();
        let r = jump_rates(&d.stiffness(1.0), &d.voxels).unwrap();
        let v = &d.voxels.volumes;
        for j in 0..4 {
            for &(i, lam) in r.outgoing(j) {
                assert!((lam * v[j] - r.rate(i, j) * v[i]).abs() < 1e-14);
            }
        }
        assert_eq!(JumpRates::from_csv(&r.to_csv(), Some(4)).unwrap(), r);
    }
}
