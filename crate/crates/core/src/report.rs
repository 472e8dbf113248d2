//! Method comparison tables, run manifests and fixed-precision output.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::analysis::{analyze_global, analyze_local, Norm, SolveOptions};
use crate::design::{design_global, design_local, SolverPath};
use crate::error::{Error, Result};
use crate::fem::{negative_edges, Discretization, EdgeOperator, OperatorRole};
use crate::pde::{forward_error, tanh_initial_condition, StepPolicy};
use crate::repair::{generator_distance, repair, RepairMethod};

/// Seventeen significant digits, enough to round-trip any f64.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Provenance embedded in every JSON output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: serde_json::Value,
    /// Input path to SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
    pub seeds: Vec<u64>,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_seconds: Option<f64>,
}

impl RunManifest {
    pub fn new(command: impl Into<String>, parameters: serde_json::Value) -> Self {
        Self {
            command: command.into(),
            parameters,
            inputs: BTreeMap::new(),
            seeds: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_seconds: None,
        }
    }

    pub fn with_input(mut self, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seeds.push(seed);
        self
    }
}

/// A row label for [`compare_methods`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MethodSpec {
    FemRaw,
    Repair(RepairMethod),
    MbeLocal,
    MbeGlobal,
    External(PathBuf),
}

impl MethodSpec {
    pub fn all_builtin() -> Vec<MethodSpec> {
        let mut out = vec![MethodSpec::FemRaw];
        out.extend(RepairMethod::BUILTIN.into_iter().map(MethodSpec::Repair));
        out.extend([MethodSpec::MbeLocal, MethodSpec::MbeGlobal]);
        out
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodSpec::FemRaw => f.write_str("fem-raw"),
            MethodSpec::Repair(m) => write!(f, "{m}"),
            MethodSpec::MbeLocal => f.write_str("mbe-local"),
            MethodSpec::MbeGlobal => f.write_str("mbe-global"),
            MethodSpec::External(p) => write!(f, "external:{}", p.display()),
        }
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fem-raw" => Ok(MethodSpec::FemRaw),
            "mbe-local" => Ok(MethodSpec::MbeLocal),
            "mbe-global" => Ok(MethodSpec::MbeGlobal),
            _ => match s.strip_prefix("external:") {
                Some(path) if !path.is_empty() => Ok(MethodSpec::External(PathBuf::from(path))),
                _ => match s.parse::<RepairMethod>() {
                    Ok(RepairMethod::External) | Err(_) => Err(Error::InvalidArgument(format!("unknown method '{s}'"))),
                    Ok(m) => Ok(MethodSpec::Repair(m)),
                },
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareOptions {
    pub gamma: f64,
    pub seed: u64,
    pub norm: Norm,
    /// Sample times for the forward error.
    pub times: Vec<f64>,
    pub timing: bool,
    #[serde(skip)]
    pub solve: SolveOptions,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            seed: 0,
            norm: Norm::Frobenius,
            times: (0..=20).map(|k| 10f64.powf(-4.0 + 0.2 * k as f64)).collect(),
            timing: false,
            solve: SolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodRow {
    pub method: String,
    pub eta_local: Option<f64>,
    pub eta_global: Option<f64>,
    pub negative_edges: Option<usize>,
    pub modified_edges: Option<usize>,
    /// ‖D − D̃‖₂/‖D‖₂.
    pub relative_distance: Option<f64>,
    pub spd_violations: Option<usize>,
    pub forward_error_peak: Option<f64>,
    /// Forward error at each of the comparison times.
    pub forward_error: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub options: CompareOptions,
    pub rows: Vec<MethodRow>,
}

impl ComparisonReport {
    /// Summary table, one line per method. Missing values are empty.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
        let opt_n = |v: Option<usize>| v.map(|n| n.to_string()).unwrap_or_default();
        let mut out = String::from(
            "method,eta_local,eta_global,negative_edges,modified_edges,relative_distance,spd_violations,forward_error_peak,seconds,error\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.method,
                opt(r.eta_local),
                opt(r.eta_global),
                opt_n(r.negative_edges),
                opt_n(r.modified_edges),
                opt(r.relative_distance),
                opt_n(r.spd_violations),
                opt(r.forward_error_peak),
                opt(r.seconds),
                r.error.as_deref().unwrap_or("").replace(',', ";"),
            );
        }
        out
    }

    /// Forward error against time, one column per method.
    pub fn forward_error_csv(&self) -> String {
        let mut out = String::from("t");
        for r in &self.rows {
            let _ = write!(out, ",{}", r.method);
        }
        out.push('\n');
        for (k, t) in self.options.times.iter().enumerate() {
            out.push_str(&fmt17(*t));
            for r in &self.rows {
                out.push(',');
                if let Some(v) = r.forward_error.get(k) {
                    out.push_str(&fmt17(*v));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Produce S̃ for one method.
pub fn method_stiffness(disc: &Discretization, method: &MethodSpec, opts: &CompareOptions) -> Result<EdgeOperator> {
    match method {
        MethodSpec::FemRaw => Ok(disc.stiffness(opts.gamma)),
        MethodSpec::Repair(m) => Ok(repair(disc, *m, opts.gamma)?.stiffness),
        MethodSpec::MbeLocal => Ok(design_local(disc, opts.gamma, opts.norm, opts.seed, &opts.solve)?.stiffness),
        MethodSpec::MbeGlobal => Ok(design_global(disc, opts.gamma, opts.norm, SolverPath::Primal, &opts.solve)?.stiffness),
        MethodSpec::External(path) => EdgeOperator::read(path, OperatorRole::Stiffness, disc.mesh.num_nodes(), &disc.edges),
    }
}

fn method_row(disc: &Discretization, method: &MethodSpec, opts: &CompareOptions) -> Result<MethodRow> {
    let start = Instant::now();
    let s = disc.stiffness(opts.gamma);
    let s_tilde = method_stiffness(disc, method, opts)?;
    let (_, global) = analyze_global(disc, &s_tilde, opts.gamma, opts.norm, &opts.solve)?;
    let (_, local) = analyze_local(disc, &s_tilde, opts.gamma, opts.norm, opts.seed, &opts.solve)?;
    let d = disc.generator(&s);
    let d_tilde = disc.generator(&s_tilde);
    let u0 = tanh_initial_condition(&disc.mesh);
    let fe = if opts.times.is_empty() {
        Vec::new()
    } else {
        forward_error(&d, &d_tilde, &disc.voxels, &u0, &opts.times, StepPolicy::default())?
    };
    let modified = (0..s.num_edges())
        .filter(|&e| s.upper(e) != s_tilde.upper(e) || s.lower(e) != s_tilde.lower(e))
        .count();
    Ok(MethodRow {
        method: method.to_string(),
        eta_local: Some(local.eta()),
        eta_global: Some(global.eta()),
        negative_edges: Some(negative_edges(&s_tilde).len()),
        modified_edges: Some(modified),
        relative_distance: Some(generator_distance(&d, &d_tilde)),
        spd_violations: Some(global.spd_flags.iter().filter(|ok| !**ok).count()),
        forward_error_peak: fe.iter().copied().reduce(f64::max),
        forward_error: fe,
        seconds: opts.timing.then(|| start.elapsed().as_secs_f64()),
        error: None,
    })
}

/// One row per method; a failing method yields a row carrying the error and
/// does not affect the others.
pub fn compare_methods(disc: &Discretization, methods: &[MethodSpec], opts: &CompareOptions) -> ComparisonReport {
    let rows = methods
        .iter()
        .map(|m| {
            method_row(disc, m, opts).unwrap_or_else(|e| MethodRow {
                method: m.to_string(),
                eta_local: None,
                eta_global: None,
                negative_edges: None,
                modified_edges: None,
                relative_distance: None,
                spd_violations: None,
                forward_error_peak: None,
                forward_error: Vec::new(),
                seconds: None,
                error: Some(format!("{}: {e}", e.code())),
            })
        })
        .collect();
    ComparisonReport {
        options: opts.clone(),
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{obtuse_pair, structured_square};

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23] {
            let s = fmt17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap();
            assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17);
        }
    }

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn method_names_round_trip() {
        for m in MethodSpec::all_builtin() {
            assert_eq!(m.to_string().parse::<MethodSpec>().unwrap(), m);
        }
        assert_eq!("external:s.txt".parse::<MethodSpec>().unwrap(), MethodSpec::External("s.txt".into()));
        assert!("external".parse::<MethodSpec>().is_err());
        assert!("gfet".parse::<MethodSpec>().is_err());
    }

    #[test]
    fn nnfem_on_a_valid_mesh_is_exact() {
        let disc = Discretization::new(structured_square(3)).unwrap();
        let opts = CompareOptions {
            times: vec![0.01],
            ..Default::default()
        };
        let r = compare_methods(&disc, &[MethodSpec::Repair(RepairMethod::NnFem)], &opts);
        assert_eq!(r.rows.len(), 1);
        let row = &r.rows[0];
        assert_eq!(row.modified_edges, Some(0));
        assert!(row.eta_global.unwrap() < 1e-12 && row.eta_local.unwrap() < 1e-12);
        assert_eq!(row.seconds, None);
    }

    #[test]
    fn failing_rows_do_not_spoil_the_table() {
        let disc = Discretization::new(obtuse_pair(100f64.to_radians()).unwrap()).unwrap();
        let opts = CompareOptions {
            times: vec![0.01],
            ..Default::default()
        };
        let methods = [MethodSpec::External("/nonexistent/s.txt".into()), MethodSpec::MbeGlobal];
        let r = compare_methods(&disc, &methods, &opts);
        assert!(r.rows[0].error.is_some());
        assert!(r.rows[1].error.is_none());
        assert!(r.to_csv().lines().count() == 3);
    }
}
