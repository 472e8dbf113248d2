use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use meso_core::analysis::{Norm, Scope};
use meso_core::design::SolverPath;
use meso_core::repair::RepairMethod;

#[derive(Debug, Parser)]
#[command(name = "meso", version, about = "Non-negative jump coefficients for mesoscopic diffusion")]
pub struct Cli {
    /// JSON file whose keys mirror the long flags of the chosen subcommand.
    /// Flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Record wall time in the manifest of JSON outputs.
    #[arg(long, global = true)]
    pub timing: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate, inspect and grade meshes.
    #[command(subcommand)]
    Mesh(MeshCommand),
    /// Assemble the FEM stiffness matrix.
    Assemble(AssembleArgs),
    /// Apply a baseline repair, or validate an externally produced matrix.
    Repair(RepairArgs),
    /// Backward analysis of a stiffness matrix.
    Analyze(AnalyzeArgs),
    /// Minimal-backward-error coefficient design.
    Design(DesignArgs),
    /// Deterministic solves.
    #[command(subcommand)]
    Solve(SolveCommand),
    /// Stochastic simulation.
    #[command(subcommand)]
    Ssa(SsaCommand),
    /// Side-by-side comparison of methods on one mesh.
    Compare(CompareArgs),
    /// Run the acceptance criteria against shipped fixtures.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Subcommand)]
pub enum MeshCommand {
    /// Write a generated mesh as JSON.
    Gen(MeshGenArgs),
    /// Counts, volume, boundary and negative-edge summary.
    Info(MeshInfoArgs),
    /// Per-element quality.
    Quality(MeshQualityArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeshKind {
    PerturbedSquare,
    StructuredSquare,
    Disc,
    Cube,
    Ball,
    Obtuse,
    Rhombus,
    Strip,
}

#[derive(Debug, Args, Serialize)]
pub struct MeshGenArgs {
    #[arg(long, value_enum)]
    pub kind: MeshKind,
    /// Grid size, ring count or layer count depending on the kind.
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    /// Node displacement as a fraction of the grid spacing.
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    /// Opposing angle in degrees for `obtuse`.
    #[arg(long, default_value_t = 100.0)]
    pub angle: f64,
    /// Height of `strip`.
    #[arg(long, default_value_t = 0.2)]
    pub width: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct MeshInfoArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct MeshQualityArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    /// JSON summary with every element value.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV with columns `element,quality`.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct AssembleArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Stiffness matrix, one `row col value` line per stored entry.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the generator D = A⁻¹S.
    #[arg(long)]
    pub generator: Option<PathBuf>,
    /// Also write jump rates; fails when an off-diagonal entry is negative.
    #[arg(long)]
    pub rates: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct RepairArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long, value_parser = parse_repair, required_unless_present = "external", conflicts_with = "external")]
    #[serde(serialize_with = "serialize_display")]
    pub method: Option<RepairMethod>,
    /// Matrix produced elsewhere; checked against the mesh edge pattern,
    /// symmetry, zero row sums and non-negativity.
    #[arg(long)]
    pub external: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub rates: Option<PathBuf>,
    /// JSON with changed edges and distances.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn parse_repair(s: &str) -> Result<RepairMethod, String> {
    match s.parse::<RepairMethod>() {
        Ok(RepairMethod::External) => Err("use --external <file> for external matrices".into()),
        Ok(m) => Ok(m),
        Err(e) => Err(e.to_string()),
    }
}

fn serialize_display<T: std::fmt::Display, S: serde::Serializer>(v: &Option<T>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(v) => s.collect_str(v),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Args, Serialize)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    /// S̃ to explain; the FEM matrix itself when omitted.
    #[arg(long)]
    pub stiffness: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value = "global")]
    pub scope: Scope,
    #[arg(long, default_value = "f")]
    pub norm: Norm,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Local sweeps.
    #[arg(long, default_value_t = 1)]
    pub iters: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the global QP in text form.
    #[arg(long)]
    pub dump_qp: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct DesignArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value = "global")]
    pub scope: Scope,
    #[arg(long, default_value = "f")]
    pub norm: Norm,
    #[arg(long, default_value = "dual")]
    pub path: SolverPath,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Designed stiffness S̃.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Jump rates as `from,to,rate` CSV.
    #[arg(long)]
    pub rates: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub dump_qp: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SolveCommand {
    /// Forward error ‖u − ũ‖/‖u‖ in the lumped norm from a tanh initial
    /// state. CSV columns: `t,forward_error`.
    Forward(ForwardArgs),
    /// Mean exit time through the boundary from every node. CSV columns:
    /// `node,x,y[,z],exit_time`.
    Exit(ExitArgs),
    /// Expected first hitting time of absorbing sinks from a uniform start.
    Hitting(HittingArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ForwardArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    /// Reference stiffness; the FEM matrix when omitted.
    #[arg(long = "S", alias = "s")]
    pub s: Option<PathBuf>,
    #[arg(long = "Stilde", alias = "stilde")]
    pub stilde: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub t_end: f64,
    /// Output times; 21 log-spaced points ending at t_end when omitted.
    #[arg(long, value_delimiter = ',')]
    pub times: Vec<f64>,
    /// Fixed step; halving until converged when omitted.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ExitArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub stiffness: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Radial shell width for a `radius,mean_exit_time` profile.
    #[arg(long, requires = "shells_out")]
    pub shell_width: Option<f64>,
    #[arg(long, requires = "shell_width")]
    pub shells_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct HittingArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long, conflicts_with = "rates")]
    pub stiffness: Option<PathBuf>,
    /// Use a generator built from jump rates instead of a stiffness matrix.
    #[arg(long)]
    pub rates: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// `all`, `boundary`, `center` or a node id.
    #[arg(long, default_value = "center")]
    pub sink: String,
    /// Sink strength.
    #[arg(long = "K", alias = "k", default_value_t = 1e9)]
    pub k: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SsaCommand {
    /// Simulate molecule counts. CSV columns: `t,v0,v1,...`.
    Run(SsaRunArgs),
    /// Monte Carlo first hitting time of one sink.
    Hit(SsaHitArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SsaRunArgs {
    #[arg(long)]
    pub rates: PathBuf,
    /// One molecule count per line, voxel order.
    #[arg(long)]
    pub init: PathBuf,
    #[arg(long)]
    pub t_end: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub stream: u64,
    #[arg(long, value_delimiter = ',')]
    pub snapshots: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON with the final state and event counts.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SsaHitArgs {
    #[arg(long)]
    pub rates: PathBuf,
    /// Mesh the rates live on; sets the start distribution and the centre.
    #[arg(long)]
    pub mesh: PathBuf,
    /// `center` or a node id.
    #[arg(long, default_value = "center")]
    pub sink: String,
    #[arg(long = "M", alias = "m", default_value_t = 10_000)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sink strength of the deterministic comparison value.
    #[arg(long = "K", alias = "k", default_value_t = 1e9)]
    pub k: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Any of fem-raw, nnfem, fvm, viscosity, nearness-f, nearness-2,
    /// mbe-local, mbe-global, external:<file>; all built-in methods when
    /// omitted.
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
    #[arg(long, default_value = "f")]
    pub norm: Norm,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Summary table. Columns: method, eta_local, eta_global,
    /// negative_edges, modified_edges, relative_distance, spd_violations,
    /// forward_error_peak, seconds, error.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Forward error against time, one column per method.
    #[arg(long)]
    pub forward_csv: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReproduceArgs {
    #[arg(long, default_value = "crates/core/fixtures")]
    pub fixtures: PathBuf,
    /// Machine-readable summary.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Regenerate the fixtures and their manifest into this directory
    /// instead of running the criteria.
    #[arg(long)]
    pub write_fixtures: Option<PathBuf>,
}
