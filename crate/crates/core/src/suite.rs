//! The reproduction suite: every acceptance criterion as a function that
//! returns a pass/fail verdict with the measured value and the tolerance.
//!
//! Mesh fixtures are read from a directory holding `manifest.json`, a map
//! from file name to SHA-256. A file whose hash differs from the manifest
//! fails every criterion that uses it, with the two hashes in the details.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{
    analyze_global, analyze_local, frobenius_problem, global_rows, isotropic_target, symmetric_edge_values, weights,
    BackwardErrorReport, Norm, SolveOptions,
};
use crate::design::{design_global, design_local, emit_rates, MbeResult, SolverPath};
use crate::error::{Error, Result};
use crate::fem::{negative_edges, Discretization, EdgeOperator, JumpRates, OperatorRole};
use crate::mesh::{
    ball, cube, disc, generate_perturbed_square, load_mesh, obtuse_pair, opposing_angles, rhombus, save_mesh,
    structured_square, DualVoxels, Mesh,
};
use crate::pde::{
    exit_time, hitting_time_quadrature, hitting_times, integrate, tanh_initial_condition, HittingTimeSolver,
    SinkSelection, StepPolicy,
};
use crate::qp::dense::brute_force;
use crate::repair::{repair, RepairMethod};
use crate::report::{compare_methods, sha256_file, CompareOptions, MethodSpec};
use crate::ssa::{hitting_mc, run, EnsembleStats};
use crate::tensor::ElementDiffusionField;

pub const CRITERIA: usize = 13;
pub const MANIFEST: &str = "manifest.json";

/// Fixture files shipped with the crate, with the recipe that produced them.
pub const FIXTURES: [&str; 6] = [
    "obtuse_100.json",
    "perturbed_square.json",
    "structured_square.json",
    "disc.json",
    "cube.json",
    "ball.json",
];

fn fixture_mesh(name: &str) -> Result<Mesh> {
    match name {
        "obtuse_100.json" => obtuse_pair(100f64.to_radians()),
        "perturbed_square.json" => generate_perturbed_square(14, 0.35, 0),
        "structured_square.json" => Ok(structured_square(8)),
        "disc.json" => disc(12),
        "cube.json" => cube(3, 0.3, 0),
        "ball.json" => ball(3),
        _ => Err(Error::InvalidArgument(format!("unknown fixture {name}"))),
    }
}

/// Regenerate all fixtures and the manifest in `dir`.
pub fn write_fixtures(dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = BTreeMap::new();
    for name in FIXTURES {
        let path = dir.join(name);
        save_mesh(&fixture_mesh(name)?, &path)?;
        manifest.insert(name.to_string(), sha256_file(&path)?);
    }
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    let path = dir.join(MANIFEST);
    std::fs::write(&path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub title: &'static str,
    pub passed: bool,
    pub measured: String,
    pub tolerance: String,
    pub details: Vec<String>,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {} {}: measured {}; tolerance {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.measured,
            self.tolerance
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub criteria: Vec<CriterionResult>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }
}

pub const TITLES: [&str; CRITERIA] = [
    "coefficient round trip",
    "angle formula",
    "repair contracts",
    "backward-analysis feasibility",
    "optimality ordering",
    "QP oracle equivalence",
    "norm sandwich",
    "identity on valid meshes",
    "steady state and forward error",
    "exit time on the disc",
    "hitting-time equivalence",
    "SSA exactness",
    "determinism",
];

/// Outcome of one criterion body before timing is attached.
struct Verdict {
    passed: bool,
    measured: String,
    tolerance: String,
    details: Vec<String>,
}

impl Verdict {
    fn new(passed: bool, measured: impl Into<String>, tolerance: impl Into<String>, details: Vec<String>) -> Self {
        Self {
            passed,
            measured: measured.into(),
            tolerance: tolerance.into(),
            details,
        }
    }
}

/// Repaired operators and their backward analyses on one mesh.
struct MethodRun {
    name: String,
    stiffness: EdgeOperator,
    global: BackwardErrorReport,
    local: BackwardErrorReport,
    /// Field produced by design, for MBE rows.
    designed: Option<BackwardErrorReport>,
}

struct FixtureRun {
    name: String,
    disc: Discretization,
    negative: usize,
    methods: Vec<MethodRun>,
    /// Analyses and designs in the spectral norm.
    spectral: Vec<BackwardErrorReport>,
}

pub const METHODS: [&str; 7] = ["nnfem", "fvm", "viscosity", "nearness-f", "nearness-2", "mbe-local", "mbe-global"];

const GAMMA: f64 = 1.0;
const SEED: u64 = 0;

fn method_result(disc: &Discretization, name: &str, norm: Norm, opts: &SolveOptions) -> Result<(EdgeOperator, Option<MbeResult>)> {
    Ok(match name {
        "mbe-local" => {
            let r = design_local(disc, GAMMA, norm, SEED, opts)?;
            (r.stiffness.clone(), Some(r))
        }
        "mbe-global" => {
            let r = design_global(disc, GAMMA, norm, SolverPath::Primal, opts)?;
            (r.stiffness.clone(), Some(r))
        }
        other => (repair(disc, other.parse::<RepairMethod>()?, GAMMA)?.stiffness, None),
    })
}

fn run_fixture(name: &str, mesh: Mesh, spectral: bool) -> Result<FixtureRun> {
    let disc = Discretization::new(mesh)?;
    let opts = SolveOptions::default();
    let negative = negative_edges(&disc.stiffness(GAMMA)).len();
    let methods = METHODS
        .par_iter()
        .map(|&m| -> Result<MethodRun> {
            let (stiffness, design) = method_result(&disc, m, Norm::Frobenius, &opts)?;
            let (_, global) = analyze_global(&disc, &stiffness, GAMMA, Norm::Frobenius, &opts)?;
            let (_, local) = analyze_local(&disc, &stiffness, GAMMA, Norm::Frobenius, SEED, &opts)?;
            Ok(MethodRun {
                name: m.to_string(),
                stiffness,
                global,
                local,
                designed: design.map(|d| d.report),
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::Failed(format!("{name}: {e}")))?;
    let mut extra = Vec::new();
    if spectral {
        for m in ["nnfem", "mbe-global"] {
            let s = &methods.iter().find(|r| r.name == m).expect("method ran").stiffness;
            extra.push(analyze_global(&disc, s, GAMMA, Norm::Spectral, &opts)?.1);
            extra.push(analyze_local(&disc, s, GAMMA, Norm::Spectral, SEED, &opts)?.1);
        }
        extra.push(design_global(&disc, GAMMA, Norm::Spectral, SolverPath::Primal, &opts)?.report);
    }
    Ok(FixtureRun {
        name: name.to_string(),
        disc,
        negative,
        methods,
        spectral: extra,
    })
}

pub struct Suite {
    dir: PathBuf,
    manifest: BTreeMap<String, String>,
    runs: OnceLock<std::result::Result<Vec<FixtureRun>, String>>,
}

impl Suite {
    /// Opens a fixture directory; fails when the manifest or any listed
    /// fixture is missing.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: BTreeMap<String, String> =
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        for name in FIXTURES {
            if !manifest.contains_key(name) {
                return Err(Error::InvalidArgument(format!("manifest does not list fixture {name}")));
            }
            let p = dir.join(name);
            if !p.is_file() {
                return Err(Error::io(&p, std::io::Error::new(std::io::ErrorKind::NotFound, "missing fixture")));
            }
        }
        Ok(Self {
            dir,
            manifest,
            runs: OnceLock::new(),
        })
    }

    /// Loads a fixture after checking its hash against the manifest.
    pub fn mesh(&self, name: &str) -> Result<Mesh> {
        let path = self.dir.join(name);
        let expected = self
            .manifest
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("fixture {name} is not in the manifest")))?;
        let found = sha256_file(&path)?;
        if &found != expected {
            return Err(Error::Failed(format!("fixture {name} differs from the manifest: sha256 {found}, expected {expected}")));
        }
        load_mesh(path)
    }

    fn runs(&self) -> std::result::Result<&[FixtureRun], String> {
        self.runs
            .get_or_init(|| {
                let mut jobs: Vec<(String, Result<Mesh>, bool)> = ["obtuse_100.json", "perturbed_square.json", "cube.json"]
                    .into_iter()
                    .map(|n| (n.to_string(), self.mesh(n), n != "perturbed_square.json"))
                    .collect();
                for seed in 0..10 {
                    jobs.push((format!("perturbed square n=8 seed {seed}"), generate_perturbed_square(8, 0.35, seed), false));
                }
                jobs.into_par_iter()
                    .map(|(name, mesh, spectral)| run_fixture(&name, mesh?, spectral))
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| e.to_string())
            })
            .as_ref()
            .map(Vec::as_slice)
            .map_err(Clone::clone)
    }

    pub fn run(&self, id: usize) -> CriterionResult {
        let start = Instant::now();
        let verdict = match id {
            1 => self.c01(),
            2 => self.c02(),
            3 => self.c03(),
            4 => self.c04(),
            5 => self.c05(),
            6 => self.c06(),
            7 => self.c07(),
            8 => self.c08(),
            9 => self.c09(),
            10 => self.c10(),
            11 => self.c11(),
            12 => self.c12(),
            13 => self.c13(),
            _ => Err(Error::InvalidArgument(format!("no criterion {id}"))),
        };
        let verdict = verdict.unwrap_or_else(|e| Verdict::new(false, format!("error {}", e.code()), "-", vec![e.to_string()]));
        CriterionResult {
            id,
            title: TITLES.get(id.wrapping_sub(1)).copied().unwrap_or("unknown"),
            passed: verdict.passed,
            measured: verdict.measured,
            tolerance: verdict.tolerance,
            details: verdict.details,
            seconds: start.elapsed().as_secs_f64(),
        }
    }

    fn fixture_runs(&self) -> Result<&[FixtureRun]> {
        self.runs().map_err(Error::Failed)
    }

    fn c01(&self) -> Result<Verdict> {
        let mut meshes = Vec::new();
        for k in 0..20u64 {
            let n = 3 + (k as usize % 10);
            let jitter = [0.1, 0.2, 0.3, 0.4][k as usize % 4];
            meshes.push(generate_perturbed_square(n, jitter, k)?);
        }
        for k in 0..10u64 {
            meshes.push(cube(2 + (k as usize % 3), 0.25, k)?);
        }
        let worst = meshes
            .into_par_iter()
            .enumerate()
            .map(|(k, mesh)| -> Result<f64> {
                let d = Discretization::new(mesh)?;
                let gamma = 0.5 + 0.1 * k as f64;
                let direct = d.stiffness(gamma);
                let field = ElementDiffusionField::isotropic(d.mesh.dim(), d.mesh.num_simplices(), gamma);
                let via = d.stiffness_from_gamma(&field)?;
                Ok(max_entry_error(&direct, &via))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        Ok(Verdict::new(worst <= 1e-12, format!("max relative entry error {worst:.3e} over 30 meshes"), "≤ 1e-12", vec![]))
    }

    fn c02(&self) -> Result<Verdict> {
        let mut meshes = vec![
            self.mesh("obtuse_100.json")?,
            self.mesh("perturbed_square.json")?,
            self.mesh("structured_square.json")?,
            self.mesh("disc.json")?,
        ];
        for k in 0..10 {
            meshes.push(generate_perturbed_square(4 + k as usize, 0.4, k)?);
        }
        let mut worst: f64 = 0.0;
        let mut sign_errors = Vec::new();
        let mut edges = 0;
        for mesh in meshes {
            let d = Discretization::new(mesh)?;
            let s = d.stiffness(1.0);
            let floor = 1e-14 * s.max_abs();
            for e in 0..d.edges.len() {
                let angles = opposing_angles(&d.mesh, &d.edges, e)?;
                // Near-zero entries are pure round-off in both evaluations, so
                // the error is measured against the conditioning of the
                // formula: the cotangent terms and the factor on sin(φ+θ).
                let (formula, sum, terms) = match angles[..] {
                    [phi, theta] => (
                        (phi + theta).sin() / (2.0 * phi.sin() * theta.sin()),
                        phi + theta,
                        (0.5 * (phi.tan().recip().abs() + theta.tan().recip().abs())).max(0.5 / (phi.sin() * theta.sin()).abs()),
                    ),
                    [phi] => (phi.cos() / (2.0 * phi.sin()), 2.0 * phi, 0.5 / phi.sin().abs()),
                    _ => return Err(Error::InvalidMesh(format!("edge {e} has {} opposing angles", angles.len()))),
                };
                let value = s.upper(e);
                worst = worst.max((value - formula).abs() / value.abs().max(terms).max(floor));
                if (sum - PI).abs() > 1e-9 && ((value < 0.0) != (sum > PI)) {
                    sign_errors.push(format!("edge {:?}: S = {value:e}, angle sum {sum}", d.edges.edge(e)));
                }
                edges += 1;
            }
        }
        Ok(Verdict::new(
            worst <= 1e-12 && sign_errors.is_empty(),
            format!("max relative error {worst:.3e}, {} sign mismatches over {edges} edges", sign_errors.len()),
            "≤ 1e-12, no sign mismatch",
            sign_errors,
        ))
    }

    fn c03(&self) -> Result<Verdict> {
        let runs = self.fixture_runs()?;
        let mut details = Vec::new();
        let (mut neg, mut asym, mut rows): (f64, f64, f64) = (0.0, 0.0, 0.0);
        for r in runs {
            for m in &r.methods {
                let s = &m.stiffness;
                let scale = s.max_abs();
                let n = (-s.min_off_diagonal()).max(0.0) / scale;
                let a = s.max_asymmetry() / scale;
                let z = s.max_row_sum() / scale;
                if n > 1e-12 || a > 1e-12 || z > 1e-10 {
                    details.push(format!("{} / {}: negative {n:e}, asymmetry {a:e}, row sum {z:e}", r.name, m.name));
                }
                neg = neg.max(n);
                asym = asym.max(a);
                rows = rows.max(z);
            }
        }
        Ok(Verdict::new(
            details.is_empty(),
            format!("scaled: most negative off-diagonal {neg:.3e}, asymmetry {asym:.3e}, row sum {rows:.3e}"),
            "≤ 1e-12, ≤ 1e-12, ≤ 1e-10",
            details,
        ))
    }

    fn c04(&self) -> Result<Verdict> {
        let runs = self.fixture_runs()?;
        let mut worst: f64 = 0.0;
        let mut details = Vec::new();
        let mut count = 0;
        for r in runs {
            let reports = r
                .methods
                .iter()
                .flat_map(|m| [(&m.name, &m.global), (&m.name, &m.local)])
                .chain(r.spectral.iter().map(|rep| (&r.name, rep)));
            for (name, rep) in reports {
                count += 1;
                worst = worst.max(rep.max_residual);
                if rep.max_residual > 1e-8 {
                    details.push(format!("{} / {name} ({:?} {:?}): {:e}", r.name, rep.scope, rep.norm, rep.max_residual));
                }
            }
        }
        Ok(Verdict::new(
            details.is_empty(),
            format!("max scaled residual {worst:.3e} over {count} recovered fields"),
            "≤ 1e-8",
            details,
        ))
    }

    fn c05(&self) -> Result<Verdict> {
        let runs = self.fixture_runs()?;
        let mut details = Vec::new();
        let mut worst_order: f64 = f64::NEG_INFINITY;
        let mut worst_dominance: f64 = f64::NEG_INFINITY;
        let mut strict_gap = f64::NAN;
        for r in runs.iter().filter(|r| r.negative > 0) {
            let eta = |m: &str| r.methods.iter().find(|x| x.name == m).expect("method ran").global.eta_f;
            for m in &r.methods {
                let d = m.global.eta_f - m.local.eta_f;
                worst_order = worst_order.max(d);
                if d > 1e-10 {
                    details.push(format!("{} / {}: η^G {} > η^L {}", r.name, m.name, m.global.eta_f, m.local.eta_f));
                }
            }
            let mbe = eta("mbe-global");
            for other in ["nnfem", "fvm", "viscosity"] {
                let d = mbe - eta(other);
                worst_dominance = worst_dominance.max(d);
                if d > 1e-10 {
                    details.push(format!("{}: η^G(mbe) {mbe} > η^G({other}) {}", r.name, eta(other)));
                }
            }
            if r.name == "obtuse_100.json" {
                strict_gap = eta("nnfem") - mbe;
                if !(strict_gap > 1e-6) {
                    details.push(format!("obtuse_100.json: η^G(nnfem) − η^G(mbe) = {strict_gap:e}"));
                }
            }
        }
        Ok(Verdict::new(
            details.is_empty() && strict_gap.is_finite(),
            format!(
                "max η^G − η^L {worst_order:.3e}, max η^G(mbe) − η^G(baseline) {worst_dominance:.3e}, 100° gap {strict_gap:.4e}"
            ),
            "≤ 1e-10, ≤ 1e-10, > 1e-6",
            details,
        ))
    }

    fn c06(&self) -> Result<Verdict> {
        let opts = SolveOptions::default();
        let mut details = Vec::new();
        let mut worst_obj: f64 = 0.0;
        for (name, mesh) in small_meshes()? {
            let disc = Discretization::new(mesh)?;
            let dim = disc.mesh.dim();
            let w = weights(dim, &disc.geometry.volumes);
            let t = isotropic_target(dim, disc.mesh.num_simplices(), GAMMA);
            let base = frobenius_problem(w, &t);
            // Global analysis of the nnFEM repair.
            let s_tilde = repair(&disc, RepairMethod::NnFem, GAMMA)?.stiffness;
            let (field, _) = analyze_global(&disc, &s_tilde, GAMMA, Norm::Frobenius, &opts)?;
            let mut p = base.clone();
            for (row, s) in global_rows(&disc.coeffs).into_iter().zip(symmetric_edge_values(&s_tilde)) {
                p.eq.push(row, s);
            }
            let oracle = brute_force(&p, 1e-9)?;
            let gap = (p.objective(field.as_slice()) - oracle.objective).abs() / (1.0 + oracle.objective.abs());
            worst_obj = worst_obj.max(gap);
            if gap > 1e-7 {
                details.push(format!("{name} analysis: objective gap {gap:e}"));
            }
            // Global design.
            let mbe = design_global(&disc, GAMMA, Norm::Frobenius, SolverPath::Primal, &opts)?;
            let mut p = base.clone();
            for row in global_rows(&disc.coeffs) {
                p.ineq.push(row, 0.0);
            }
            let oracle = brute_force(&p, 1e-9)?;
            let gap = (p.objective(mbe.field.as_slice()) - oracle.objective).abs() / (1.0 + oracle.objective.abs());
            worst_obj = worst_obj.max(gap);
            if gap > 1e-7 {
                details.push(format!("{name} design: objective gap {gap:e}"));
            }
        }
        let mut primal_dual: Vec<(String, Mesh)> = small_meshes()?;
        primal_dual.push(("perturbed_square.json".into(), self.mesh("perturbed_square.json")?));
        primal_dual.push(("cube.json".into(), self.mesh("cube.json")?));
        for seed in 0..5 {
            primal_dual.push((format!("perturbed square n=8 seed {seed}"), generate_perturbed_square(8, 0.35, seed)?));
        }
        let gaps = primal_dual
            .into_par_iter()
            .map(|(name, mesh)| -> Result<(String, f64)> {
                let disc = Discretization::new(mesh)?;
                let p = design_global(&disc, GAMMA, Norm::Frobenius, SolverPath::Primal, &opts)?;
                let d = design_global(&disc, GAMMA, Norm::Frobenius, SolverPath::Dual, &opts)?;
                let scale = p.field.as_slice().iter().fold(1.0f64, |m, v| m.max(v.abs()));
                let diff = p
                    .field
                    .as_slice()
                    .iter()
                    .zip(d.field.as_slice())
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                Ok((name, diff / scale))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut worst_pd: f64 = 0.0;
        for (name, g) in gaps {
            worst_pd = worst_pd.max(g);
            if g > 1e-6 {
                details.push(format!("{name}: primal and dual fields differ by {g:e}"));
            }
        }
        Ok(Verdict::new(
            details.is_empty(),
            format!("max objective gap {worst_obj:.3e}, max primal/dual field difference {worst_pd:.3e}"),
            "≤ 1e-7, ≤ 1e-6",
            details,
        ))
    }

    fn c07(&self) -> Result<Verdict> {
        let runs = self.fixture_runs()?;
        let mut details = Vec::new();
        let mut count = 0;
        let mut dims = [false; 4];
        let mut tight_low = f64::INFINITY;
        let mut tight_high = f64::INFINITY;
        for r in runs {
            let d = r.disc.mesh.dim() as f64;
            let reports = r
                .methods
                .iter()
                .flat_map(|m| [Some(&m.global), Some(&m.local), m.designed.as_ref()])
                .flatten()
                .chain(&r.spectral);
            for rep in reports {
                count += 1;
                dims[r.disc.mesh.dim()] = true;
                let slack = 1e-12 * rep.eta_f.max(1e-300);
                if rep.eta_2 > rep.eta_f + slack || rep.eta_f > d.sqrt() * rep.eta_2 + slack {
                    details.push(format!("{}: η₂ {} η_F {}", r.name, rep.eta_2, rep.eta_f));
                }
                if rep.eta_f > 0.0 {
                    tight_low = tight_low.min(rep.eta_f / rep.eta_2 - 1.0);
                    tight_high = tight_high.min(d.sqrt() - rep.eta_f / rep.eta_2);
                }
            }
        }
        Ok(Verdict::new(
            details.is_empty() && dims[2] && dims[3],
            format!("{count} fields in 2D and 3D, min margins η_F/η₂ − 1 = {tight_low:.3e}, √d − η_F/η₂ = {tight_high:.3e}"),
            "η₂ ≤ η_F ≤ √d η₂",
            details,
        ))
    }

    fn c08(&self) -> Result<Verdict> {
        let opts = SolveOptions::default();
        let mut details = Vec::new();
        let mut worst_s: f64 = 0.0;
        let mut worst_eta: f64 = 0.0;
        for (name, mesh) in [("structured_square.json", self.mesh("structured_square.json")?), ("rhombus", rhombus())] {
            let disc = Discretization::new(mesh)?;
            let s = disc.stiffness(GAMMA);
            if !negative_edges(&s).is_empty() {
                return Err(Error::InvalidMesh(format!("{name} has negative edges")));
            }
            for m in METHODS {
                let (st, design) = method_result(&disc, m, Norm::Frobenius, &opts)?;
                let ds = max_entry_abs_diff(&s, &st) / s.max_abs();
                let g = analyze_global(&disc, &st, GAMMA, Norm::Frobenius, &opts)?.1;
                let l = analyze_local(&disc, &st, GAMMA, Norm::Frobenius, SEED, &opts)?.1;
                let mut eta = g.eta_f.max(g.eta_2).max(l.eta_f).max(l.eta_2);
                if let Some(d) = design {
                    eta = eta.max(d.report.eta_f);
                }
                worst_s = worst_s.max(ds);
                worst_eta = worst_eta.max(eta);
                if ds > 1e-12 || eta > 1e-12 {
                    details.push(format!("{name} / {m}: ‖S̃ − S‖ {ds:e}, η {eta:e}"));
                }
            }
        }
        Ok(Verdict::new(
            details.is_empty(),
            format!("max scaled ‖S̃ − S‖ {worst_s:.3e}, max η {worst_eta:.3e}"),
            "≤ 1e-12, ≤ 1e-12",
            details,
        ))
    }

    fn c09(&self) -> Result<Verdict> {
        let runs = self.fixture_runs()?;
        let run = runs
            .iter()
            .find(|r| r.name == "perturbed_square.json")
            .ok_or_else(|| Error::Failed("perturbed square fixture did not run".into()))?;
        let disc = &run.disc;
        let u0 = tanh_initial_condition(&disc.mesh);
        let vol = &disc.voxels.volumes;
        let constant = vol.iter().zip(&u0).map(|(v, u)| v * u.abs()).sum::<f64>() / disc.voxels.total();
        let d = disc.generator(&disc.stiffness(GAMMA));
        let small_t = 1e-4;
        let times = [small_t, 10.0];
        let reference = integrate(&d, &disc.voxels, &u0, &times, StepPolicy::default())?;
        let fixed = StepPolicy::Fixed { dt: reference.dt };
        let mut details = Vec::new();
        let mut worst_steady: f64 = 0.0;
        let mut worst_final: f64 = 0.0;
        let mut rows = Vec::new();
        for m in &run.methods {
            let tr = integrate(&disc.generator(&m.stiffness), &disc.voxels, &u0, &times, fixed)?;
            let dev = tr.last().iter().fold(0.0f64, |a, u| a.max((u - constant).abs()));
            let fe: Vec<f64> = tr.states[1..]
                .iter()
                .zip(&reference.states[1..])
                .map(|(a, b)| {
                    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                    crate::pde::lumped_norm(&disc.voxels, &diff) / crate::pde::lumped_norm(&disc.voxels, b)
                })
                .collect();
            worst_steady = worst_steady.max(dev);
            worst_final = worst_final.max(fe[1]);
            if dev >= 1e-6 || fe[1] >= 1e-6 {
                details.push(format!("{}: steady deviation {dev:e}, forward error at t_end {:e}", m.name, fe[1]));
            }
            rows.push((m.name.clone(), m.global.eta_f, fe[0]));
        }
        let mut inversions = 0;
        for a in &rows {
            for b in &rows {
                let tied = (a.1 - b.1).abs() <= 1e-9 * a.1.max(b.1);
                if !tied && a.1 < b.1 && a.2 > b.2 {
                    inversions += 1;
                    details.push(format!(
                        "ranking: {} has η^G {:.6e} < {} {:.6e} but forward error {:.6e} > {:.6e} at t = {small_t}",
                        a.0, a.1, b.0, b.1, a.2, b.2
                    ));
                }
            }
        }
        let mut order = rows.clone();
        order.sort_by(|a, b| a.1.total_cmp(&b.1));
        let ranking: Vec<&str> = order.iter().map(|r| r.0.as_str()).collect();
        Ok(Verdict::new(
            details.is_empty(),
            format!(
                "max steady deviation {worst_steady:.3e}, max forward error at t=10 {worst_final:.3e}, {inversions} ranking inversions at t={small_t} (η^G order {})",
                ranking.join(" < ")
            ),
            "< 1e-6, < 1e-6, 0",
            details,
        ))
    }

    fn c10(&self) -> Result<Verdict> {
        let disc = Discretization::new(self.mesh("disc.json")?)?;
        let d = disc.generator(&disc.stiffness(1.0));
        let boundary: Vec<usize> = disc.mesh.boundary_nodes().iter().copied().collect();
        let eps = exit_time(&d, &disc.voxels, &boundary)?;
        let c = disc.mesh.center_node();
        let rel = (eps[c] - 0.25).abs() / 0.25;
        let nonzero = boundary.iter().filter(|&&b| eps[b] != 0.0).count();
        Ok(Verdict::new(
            rel < 0.05 && nonzero == 0,
            format!(
                "ε(center) = {:.6} on {} nodes (relative error {rel:.3e}), {nonzero} boundary nodes with ε ≠ 0",
                eps[c],
                disc.mesh.num_nodes()
            ),
            "< 5%, 0",
            vec![],
        ))
    }

    fn c11(&self) -> Result<Verdict> {
        let k = 1e9;
        let opts = SolveOptions::default();
        let mut cases: Vec<(String, Discretization, EdgeOperator)> = Vec::new();
        let sq = Discretization::new(structured_square(8))?;
        let s = sq.stiffness(1.0);
        cases.push(("structured square n=8, FEM".into(), sq, s));
        let ps = Discretization::new(generate_perturbed_square(10, 0.35, 0)?)?;
        let s = design_global(&ps, 1.0, Norm::Frobenius, SolverPath::Primal, &opts)?.stiffness;
        cases.push(("perturbed square n=10, MBE".into(), ps, s));
        let b = Discretization::new(self.mesh("ball.json")?)?;
        let s = b.stiffness(1.0);
        cases.push(("ball.json, FEM".into(), b, s));
        let mut worst: f64 = 0.0;
        let mut details = Vec::new();
        for (name, disc, s) in &cases {
            let d = disc.generator(s);
            let n = disc.mesh.num_nodes();
            for sink in [disc.mesh.center_node(), 0, n - 1, n / 3] {
                let solve = crate::pde::hitting_time(&d, &disc.voxels, sink, k)?;
                let quad = hitting_time_quadrature(&d, &disc.voxels, sink, k)?;
                let rel = (solve - quad).abs() / quad;
                worst = worst.max(rel);
                if rel >= 1e-3 {
                    details.push(format!("{name}, sink {sink}: solve {solve}, quadrature {quad}"));
                }
            }
        }
        let one = EdgeOperator::from_edge_values(OperatorRole::Generator, 1, &[], vec![]);
        let e1 = HittingTimeSolver::new(&one, &DualVoxels { volumes: vec![1.0] }, k)?.time(0)?;
        let rel1 = (e1 - 1.0 / k).abs() * k;
        if rel1 >= 0.01 {
            details.push(format!("single voxel: E = {e1:e}"));
        }
        Ok(Verdict::new(
            details.is_empty(),
            format!("max relative gap {worst:.3e} over {} meshes ≤ 200 nodes; single voxel E = {e1:.6e}", cases.len()),
            "< 1e-3; within 1% of 1e-9",
            details,
        ))
    }

    fn c12(&self) -> Result<Verdict> {
        let mut details = Vec::new();
        // (a) first jump of one molecule between two voxels.
        let lambda = 2.0;
        let two = JumpRates::from_outgoing(vec![vec![(1, lambda)], vec![(0, lambda)]])?;
        let m = 100_000u64;
        let first: Vec<f64> = (0..m)
            .into_par_iter()
            .map(|id| run(&two, &[1, 0], 1e3, &[], SEED, id).map(|r| r.first_event.unwrap_or(f64::INFINITY)))
            .collect::<Result<_>>()?;
        let a = EnsembleStats::from_samples(0, m as usize, first);
        let za = (a.mean - 1.0 / lambda).abs() / a.std_error;
        if za > 3.0 {
            details.push(format!("first jump mean {} vs {}", a.mean, 1.0 / lambda));
        }
        // (b) stationary occupancy of n molecules.
        let n = 20u64;
        let mb = 10_000u64;
        let occ: Vec<f64> = (0..mb)
            .into_par_iter()
            .map(|id| run(&two, &[n, 0], 20.0, &[], SEED + 1, id).map(|r| r.state.counts[0] as f64))
            .collect::<Result<_>>()?;
        let mean = occ.iter().sum::<f64>() / mb as f64;
        let var = occ.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (mb - 1) as f64;
        let (p, nf, mf) = (0.5, n as f64, mb as f64);
        let sigma2 = nf * p * (1.0 - p);
        let mu4 = sigma2 * (1.0 + 3.0 * (nf - 2.0) * p * (1.0 - p));
        let z_mean = (mean - nf * p).abs() / (sigma2 / mf).sqrt();
        let z_var = (var - sigma2).abs() / ((mu4 - sigma2 * sigma2 * (mf - 3.0) / (mf - 1.0)) / mf).sqrt();
        if z_mean > 3.0 || z_var > 3.0 {
            details.push(format!("occupancy mean {mean} (z {z_mean:.2}), variance {var} (z {z_var:.2})"));
        }
        // (c) Monte Carlo against the linear solve on a repaired mesh.
        let disc = Discretization::new(generate_perturbed_square(12, 0.35, 0)?)?;
        let mbe = design_global(&disc, 1.0, Norm::Frobenius, SolverPath::Primal, &SolveOptions::default())?;
        let rates = emit_rates(&mbe, &disc.voxels)?;
        let d = disc.generator(&mbe.stiffness);
        let det = hitting_times(&d, &disc.mesh, &disc.voxels, SinkSelection::Center, 1e9)?;
        let e_cdet = det.e_cdet.expect("centre sink");
        let mc = hitting_mc(&rates, &disc.voxels, det.center, 10_000, SEED)?;
        let gap = (mc.mean - e_cdet).abs() / e_cdet;
        if gap >= 0.02 || mc.excluded > 0 {
            details.push(format!("E_Cstoch {} ± {} vs E_Cdet {e_cdet}, {} excluded", mc.mean, mc.std_error, mc.excluded));
        }
        Ok(Verdict::new(
            details.is_empty(),
            format!(
                "(a) z = {za:.2}; (b) z_mean = {z_mean:.2}, z_var = {z_var:.2}; (c) E_Cstoch = {:.5} ± {:.5}, E_Cdet = {e_cdet:.5}, gap {:.3}% on {} nodes",
                mc.mean,
                mc.std_error,
                100.0 * gap,
                disc.mesh.num_nodes()
            ),
            "z ≤ 3; z ≤ 3; gap < 2%",
            details,
        ))
    }

    fn c13(&self) -> Result<Verdict> {
        let opts = SolveOptions::default();
        let mut details = Vec::new();
        let mut check = |what: &str, a: String, b: String| {
            if a != b {
                details.push(format!("{what} differs between runs"));
            }
        };
        let mesh_json = || generate_perturbed_square(8, 0.35, 3).map(|m| m.to_json_string());
        check("perturbed mesh", mesh_json()?, mesh_json()?);
        let disc = Discretization::new(self.mesh("perturbed_square.json")?)?;
        let s = repair(&disc, RepairMethod::NnFem, GAMMA)?.stiffness;
        let local = || -> Result<String> {
            let (f, r) = analyze_local(&disc, &s, GAMMA, Norm::Frobenius, 7, &opts)?;
            Ok(format!("{:?}{}", f.as_slice(), serde_json::to_string(&r).expect("serializes")))
        };
        check("local analysis", local()?, local()?);
        let design = || -> Result<String> {
            let r = design_local(&disc, GAMMA, Norm::Frobenius, 7, &opts)?;
            Ok(format!("{:?}", r.field.as_slice()))
        };
        check("local design", design()?, design()?);
        let mbe = design_global(&disc, GAMMA, Norm::Frobenius, SolverPath::Primal, &opts)?;
        let rates = emit_rates(&mbe, &disc.voxels)?;
        let center = disc.mesh.center_node();
        let mc = || -> Result<String> {
            let r = hitting_mc(&rates, &disc.voxels, center, 2_000, 11)?;
            Ok(format!("{:?}{:?}", r.samples, r.mean.to_bits()))
        };
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| Error::Failed(e.to_string()))?;
        check("Monte Carlo hitting times across thread counts", mc()?, single.install(mc)?);
        let init: Vec<u64> = (0..disc.mesh.num_nodes() as u64).map(|k| k % 5).collect();
        let ssa = || run(&rates, &init, 0.5, &[0.1, 0.25], 5, 2).map(|r| format!("{r:?}"));
        check("SSA trajectory", ssa()?, ssa()?);
        let cmp = || {
            let small = Discretization::new(obtuse_pair(100f64.to_radians())?)?;
            let r = compare_methods(&small, &MethodSpec::all_builtin(), &CompareOptions::default());
            Ok::<_, Error>(r.to_csv() + &r.forward_error_csv())
        };
        check("comparison table", cmp()?, cmp()?);
        let checked = 6;
        Ok(Verdict::new(
            details.is_empty(),
            format!("{} of {checked} seeded computations reproduced bit for bit", checked - details.len()),
            "all identical",
            details,
        ))
    }
}

/// Meshes with at most four elements for the dense oracle.
pub fn small_meshes() -> Result<Vec<(String, Mesh)>> {
    let fan = Mesh::new(
        2,
        vec![[-0.5, -0.5, 0.0], [0.5, -0.5, 0.0], [0.5, 0.5, 0.0], [-0.5, 0.5, 0.0], [0.3, 0.1, 0.0]],
        vec![vec![0, 1, 4], vec![1, 2, 4], vec![2, 3, 4], vec![3, 0, 4]],
    )?;
    let tet = Mesh::new(
        3,
        vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        vec![vec![0, 1, 2, 3]],
    )?;
    let flat = Mesh::new(
        3,
        vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.3, 0.3, 0.15], [0.3, 0.3, -0.15]],
        vec![vec![0, 1, 2, 3], vec![0, 2, 1, 4]],
    )?;
    Ok(vec![
        ("obtuse pair 100°".into(), obtuse_pair(100f64.to_radians())?),
        ("obtuse pair 120°".into(), obtuse_pair(120f64.to_radians())?),
        ("rhombus".into(), rhombus()),
        ("unit square".into(), structured_square(1)),
        ("four-triangle fan".into(), fan),
        ("single tetrahedron".into(), tet),
        ("two flat tetrahedra".into(), flat),
    ])
}

/// max over entries of |a − b| / max(|a|, 1e-14 ‖a‖_max).
fn max_entry_error(a: &EdgeOperator, b: &EdgeOperator) -> f64 {
    let floor = 1e-14 * a.max_abs();
    let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(floor);
    let mut worst: f64 = 0.0;
    for e in 0..a.num_edges() {
        worst = worst.max(rel(a.upper(e), b.upper(e))).max(rel(a.lower(e), b.lower(e)));
    }
    for (x, y) in a.diagonal().iter().zip(b.diagonal()) {
        worst = worst.max(rel(*x, *y));
    }
    worst
}

fn max_entry_abs_diff(a: &EdgeOperator, b: &EdgeOperator) -> f64 {
    let mut worst: f64 = 0.0;
    for e in 0..a.num_edges() {
        worst = worst.max((a.upper(e) - b.upper(e)).abs()).max((a.lower(e) - b.lower(e)).abs());
    }
    for (x, y) in a.diagonal().iter().zip(b.diagonal()) {
        worst = worst.max((x - y).abs());
    }
    worst
}

/// Runs every criterion against the fixtures in `dir`.
pub fn reproduce_suite(dir: impl AsRef<Path>) -> Result<SuiteReport> {
    let suite = Suite::open(dir)?;
    Ok(SuiteReport {
        criteria: (1..=CRITERIA).map(|id| suite.run(id)).collect(),
    })
}
