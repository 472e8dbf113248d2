use std::path::Path;

use rayon::prelude::*;
use serde_json::json;

use meso_core::analysis::{analyze_global, global_analysis_problem, iterate_local, Scope, SolveOptions};
use meso_core::design::{design_global, design_local, emit_rates, global_design_problem};
use meso_core::fem::{jump_rates, negative_edges, Discretization, EdgeOperator, JumpRates, OperatorRole};
use meso_core::mesh::{self, load_mesh, mesh_quality, save_mesh, Mesh};
use meso_core::pde::{self, SinkSelection, StepPolicy};
use meso_core::repair::repair;
use meso_core::report::{compare_methods, fmt17, CompareOptions, MethodSpec};
use meso_core::{ssa, suite, Error};

use crate::args::*;
use crate::output::{csv, write_text, CliResult, Context, Failure};

pub fn dispatch(cli: Cli) -> CliResult {
    let t = cli.timing;
    match cli.command {
        Command::Mesh(MeshCommand::Gen(a)) => mesh_gen(a),
        Command::Mesh(MeshCommand::Info(a)) => mesh_info(a, t),
        Command::Mesh(MeshCommand::Quality(a)) => mesh_quality_cmd(a, t),
        Command::Assemble(a) => assemble(a),
        Command::Repair(a) => repair_cmd(a, t),
        Command::Analyze(a) => analyze(a, t),
        Command::Design(a) => design(a, t),
        Command::Solve(SolveCommand::Forward(a)) => forward(a),
        Command::Solve(SolveCommand::Exit(a)) => exit(a),
        Command::Solve(SolveCommand::Hitting(a)) => hitting(a, t),
        Command::Ssa(SsaCommand::Run(a)) => ssa_run(a, t),
        Command::Ssa(SsaCommand::Hit(a)) => ssa_hit(a, t),
        Command::Compare(a) => compare(a, t),
        Command::Reproduce(a) => reproduce(a, t),
    }
}

fn discretize(path: &Path) -> CliResult<Discretization> {
    Ok(Discretization::new(load_mesh(path)?)?)
}

fn read_stiffness(disc: &Discretization, path: &Path) -> CliResult<EdgeOperator> {
    Ok(EdgeOperator::read(path, OperatorRole::Stiffness, disc.mesh.num_nodes(), &disc.edges)?)
}

/// The matrix at `path`, or the FEM stiffness for γ without one.
fn stiffness_or_fem(disc: &Discretization, path: Option<&Path>, gamma: f64) -> CliResult<EdgeOperator> {
    match path {
        Some(p) => read_stiffness(disc, p),
        None => Ok(disc.stiffness(gamma)),
    }
}

fn write_operator(op: &EdgeOperator, path: &Path) -> CliResult {
    op.write(path)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn write_rates(rates: &JumpRates, path: &Path) -> CliResult {
    rates.write_csv(path)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn mesh_gen(a: MeshGenArgs) -> CliResult {
    let m: Mesh = match a.kind {
        MeshKind::PerturbedSquare => mesh::generate_perturbed_square(a.n, a.jitter, a.seed)?,
        MeshKind::StructuredSquare => mesh::structured_square(a.n),
        MeshKind::Disc => mesh::disc(a.n)?,
        MeshKind::Cube => mesh::cube(a.n, a.jitter, a.seed)?,
        MeshKind::Ball => mesh::ball(a.n)?,
        MeshKind::Obtuse => mesh::obtuse_pair(a.angle.to_radians())?,
        MeshKind::Rhombus => mesh::rhombus(),
        MeshKind::Strip => mesh::strip(a.n, a.width)?,
    };
    save_mesh(&m, &a.out)?;
    log::info!("wrote {}", a.out.display());
    Ok(())
}

fn mesh_info(a: MeshInfoArgs, timing: bool) -> CliResult {
    let mut ctx = Context::new("mesh info", &a, timing)?;
    ctx.input(&a.mesh)?;
    let disc = discretize(&a.mesh)?;
    let m = &disc.mesh;
    let negative = negative_edges(&disc.stiffness(1.0)).len();
    let info = json!({
        "dim": m.dim(),
        "nodes": m.num_nodes(),
        "simplices": m.num_simplices(),
        "edges": disc.edges.len(),
        "boundary_nodes": m.boundary_nodes().len(),
        "boundary_facets": m.num_boundary_facets(),
        "volume": m.total_volume(),
        "center_node": m.center_node(),
        "bounding_box_diameter": m.bounding_box_diameter(),
        "negative_edges": negative,
    });
    ctx.write_json(a.out.as_deref(), &info)
}

fn mesh_quality_cmd(a: MeshQualityArgs, timing: bool) -> CliResult {
    let mut ctx = Context::new("mesh quality", &a, timing)?;
    ctx.input(&a.mesh)?;
    let q = mesh_quality(&load_mesh(&a.mesh)?);
    if let Some(path) = &a.csv {
        let rows = q.values.iter().enumerate().map(|(k, v)| vec![k.to_string(), fmt17(*v)]);
        write_text(Some(path), &csv("element,quality", rows))?;
    }
    let summary = json!({ "measure": q.measure, "min": q.min(), "mean": q.mean(), "values": q.values });
    if a.out.is_some() || a.csv.is_none() {
        ctx.write_json(a.out.as_deref(), &summary)?;
    }
    Ok(())
}

fn assemble(a: AssembleArgs) -> CliResult {
    let disc = discretize(&a.mesh)?;
    let s = disc.stiffness(a.gamma);
    write_operator(&s, &a.out)?;
    if let Some(path) = &a.generator {
        write_operator(&disc.generator(&s), path)?;
    }
    if let Some(path) = &a.rates {
        write_rates(&jump_rates(&s, &disc.voxels)?, path)?;
    }
    Ok(())
}

fn repair_cmd(a: RepairArgs, timing: bool) -> CliResult {
    let mut ctx = Context::new("repair", &a, timing)?;
    ctx.input(&a.mesh)?;
    let disc = discretize(&a.mesh)?;
    let (stiffness, summary) = match (&a.external, a.method) {
        (Some(path), _) => {
            ctx.input(path)?;
            let s = read_stiffness(&disc, path)?;
            validate_external(&s, &disc)?;
            let fem = disc.stiffness(a.gamma);
            let distance = meso_core::repair::generator_distance(&disc.generator(&fem), &disc.generator(&s));
            let summary = json!({ "method": "external", "valid": true, "relative_distance": distance });
            (s, summary)
        }
        (None, Some(method)) => {
            let r = repair(&disc, method, a.gamma)?;
            let summary = json!({
                "method": method,
                "changed_edges": r.changed_edges.iter().map(|&e| disc.edges.edge(e)).collect::<Vec<_>>(),
                "max_modification": r.max_modification,
                "relative_distance": r.relative_distance,
            });
            (r.stiffness, summary)
        }
        (None, None) => unreachable!("clap requires --method or --external"),
    };
    if let Some(path) = &a.out {
        write_operator(&stiffness, path)?;
    }
    if let Some(path) = &a.rates {
        write_rates(&jump_rates(&stiffness, &disc.voxels)?, path)?;
    }
    if a.report.is_some() || (a.out.is_none() && a.rates.is_none()) {
        ctx.write_json(a.report.as_deref(), &summary)?;
    }
    Ok(())
}

/// Pattern is enforced by the reader; the rest of the generator contract
/// is checked here.
fn validate_external(s: &EdgeOperator, disc: &Discretization) -> CliResult {
    let negative = negative_edges(s);
    if !negative.is_empty() {
        let edges = negative
            .into_iter()
            .map(|(e, v)| {
                let (i, j) = disc.edges.edge(e);
                (i, j, v)
            })
            .collect();
        return Err(Error::NegativeCoefficient { edges }.into());
    }
    s.check_generator_contract(1e-12).map_err(|m| Failure::new("E_CONTRACT", m))
}

fn analyze(a: AnalyzeArgs, timing: bool) -> CliResult {
    let mut ctx = Context::new("analyze", &a, timing)?;
    ctx.input(&a.mesh)?;
    if let Some(p) = &a.stiffness {
        ctx.input(p)?;
    }
    ctx.seed(a.seed);
    let disc = discretize(&a.mesh)?;
    let s = stiffness_or_fem(&disc, a.stiffness.as_deref(), a.gamma)?;
    let opts = SolveOptions::default();
    if let Some(path) = &a.dump_qp {
        if a.scope != Scope::Global {
            return Err(Failure::new("E_ARGUMENT", "--dump-qp needs --scope global"));
        }
        write_text(Some(path), &global_analysis_problem(&disc, &s, a.gamma)?.to_text())?;
    }
    let result = match a.scope {
        Scope::Global => {
            let (_, report) = analyze_global(&disc, &s, a.gamma, a.norm, &opts)?;
            json!({ "report": report })
        }
        Scope::Local => {
            let (_, reports) = iterate_local(&disc, &s, a.gamma, a.norm, a.seed, a.iters, &opts)?;
            let history: Vec<_> = reports
                .iter()
                .map(|r| json!({ "eta_2": r.eta_2, "eta_f": r.eta_f, "max_residual": r.max_residual }))
                .collect();
            json!({ "report": reports.last(), "history": history })
        }
    };
    ctx.write_json(a.out.as_deref(), &result)
}

fn design(a: DesignArgs, timing: bool) -> CliResult {
    let mut ctx = Context::new("design", &a, timing)?;
    ctx.input(&a.mesh)?;
    ctx.seed(a.seed);
    let disc = discretize(&a.mesh)?;
    let opts = SolveOptions::default();
    if let Some(path) = &a.dump_qp {
        if a.scope != Scope::Global {
            return Err(Failure::new("E_ARGUMENT", "--dump-qp needs --scope global"));
        }
        write_text(Some(path), &global_design_problem(&disc, a.gamma).to_text())?;
    }
    let r = match a.scope {
        Scope::Global => design_global(&disc, a.gamma, a.norm, a.path, &opts)?,
        Scope::Local => design_local(&disc, a.gamma, a.norm, a.seed, &opts)?,
    };
    if let Some(path) = &a.out {
        write_operator(&r.stiffness, path)?;
    }
    if let Some(path) = &a.rates {
        write_rates(&emit_rates(&r, &disc.voxels)?, path)?;
    }
    if a.report.is_some() || (a.out.is_none() && a.rates.is_none()) {
        let result = json!({ "report": r.report, "path": r.path, "solves": r.solves });
        ctx.write_json(a.report.as_deref(), &result)?;
    }
    Ok(())
}

fn forward(a: ForwardArgs) -> CliResult {
    let disc = discretize(&a.mesh)?;
    let s = stiffness_or_fem(&disc, a.s.as_deref(), a.gamma)?;
    let s_tilde = read_stiffness(&disc, &a.stilde)?;
    if !(a.t_end > 0.0) {
        return Err(Failure::new("E_ARGUMENT", format!("--t-end must be positive, got {}", a.t_end)));
    }
    let times = if a.times.is_empty() {
        (0..=20).map(|k| a.t_end * 10f64.powf(-4.0 + 0.2 * k as f64)).collect()
    } else {
        a.times.clone()
    };
    let policy = match a.dt {
        Some(dt) => StepPolicy::Fixed { dt },
        None => StepPolicy::default(),
    };
    let u0 = pde::tanh_initial_condition(&disc.mesh);
    let err = pde::forward_error(&disc.generator(&s), &disc.generator(&s_tilde), &disc.voxels, &u0, &times, policy)?;
    let rows = times.iter().zip(&err).map(|(t, e)| vec![fmt17(*t), fmt17(*e)]);
    write_text(a.out.as_deref(), &csv("t,forward_error", rows))
}

fn exit(a: ExitArgs) -> CliResult {
    let disc = discretize(&a.mesh)?;
    let s = stiffness_or_fem(&disc, a.stiffness.as_deref(), a.gamma)?;
    let boundary: Vec<usize> = disc.mesh.boundary_nodes().iter().copied().collect();
    let tau = pde::exit_time(&disc.generator(&s), &disc.voxels, &boundary)?;
    let dim = disc.mesh.dim();
    let header = if dim == 2 { "node,x,y,exit_time" } else { "node,x,y,z,exit_time" };
    let rows = tau.iter().enumerate().map(|(i, t)| {
        let p = disc.mesh.node(i);
        let mut row = vec![i.to_string()];
        row.extend(p[..dim].iter().map(|&c| fmt17(c)));
        row.push(fmt17(*t));
        row
    });
    write_text(a.out.as_deref(), &csv(header, rows))?;
    if let (Some(width), Some(path)) = (a.shell_width, &a.shells_out) {
        let shells = pde::shell_average(&disc.mesh, &tau, width)?;
        let rows = shells.iter().map(|(r, v)| vec![fmt17(*r), v.map(fmt17).unwrap_or_default()]);
        write_text(Some(path), &csv("radius,mean_exit_time", rows))?;
    }
    Ok(())
}

fn hitting(a: HittingArgs, timing: bool) -> CliResult {
    let mut ctx = Context::new("solve hitting", &a, timing)?;
    ctx.input(&a.mesh)?;
    let disc = discretize(&a.mesh)?;
    let generator = match (&a.rates, &a.stiffness) {
        (Some(path), _) => {
            ctx.input(path)?;
            let rates = JumpRates::read_csv(path, Some(disc.mesh.num_nodes()))?;
            ssa::generator_from_rates(&rates, &disc.voxels)?
        }
        (None, path) => {
            if let Some(p) = path {
                ctx.input(p)?;
            }
            disc.generator(&stiffness_or_fem(&disc, path.as_deref(), a.gamma)?)
        }
    };
    let selection: SinkSelection = a.sink.parse()?;
    let report = pde::hitting_times(&generator, &disc.mesh, &disc.voxels, selection, a.k)?;
    ctx.write_json(a.out.as_deref(), &report)
}

fn read_counts(path: &Path) -> CliResult<Vec<u64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::new("E_IO", format!("io error on {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (k == 0 && line.parse::<u64>().is_err() && line.chars().any(char::is_alphabetic)) {
            continue;
        }
        let v = line
            .parse()
            .map_err(|_| Failure::new("E_PARSE", format!("{} line {}: expected a molecule count, got '{line}'", path.display(), k + 1)))?;
        out.push(v);
    }
    Ok(out)
}

fn ssa_run(a: SsaRunArgs, timing: bool) -> CliResult {
    let mut ctx = Context::new("ssa run", &a, timing)?;
    ctx.input(&a.rates)?;
    ctx.input(&a.init)?;
    ctx.seed(a.seed);
    let initial = read_counts(&a.init)?;
    let rates = JumpRates::read_csv(&a.rates, Some(initial.len()))?;
    let run = ssa::run(&rates, &initial, a.t_end, &a.snapshots, a.seed, a.stream)?;
    let header = std::iter::once("t".to_string())
        .chain((0..initial.len()).map(|k| format!("v{k}")))
        .collect::<Vec<_>>()
        .join(",");
    let rows = run.snapshots.iter().map(|s| {
        let mut row = vec![fmt17(s.time)];
        row.extend(s.counts.iter().map(u64::to_string));
        row
    });
    if a.out.is_some() || a.report.is_none() {
        write_text(a.out.as_deref(), &csv(&header, rows))?;
    }
    if let Some(path) = &a.report {
        ctx.write_json(Some(path), &run)?;
    }
    Ok(())
}

fn ssa_hit(a: SsaHitArgs, timing: bool) -> CliResult {
    let mut ctx = Context::new("ssa hit", &a, timing)?;
    ctx.input(&a.rates)?;
    ctx.input(&a.mesh)?;
    ctx.seed(a.seed);
    let disc = discretize(&a.mesh)?;
    let rates = JumpRates::read_csv(&a.rates, Some(disc.mesh.num_nodes()))?;
    let sink = match a.sink.parse::<SinkSelection>()? {
        SinkSelection::Center => disc.mesh.center_node(),
        SinkSelection::Node(i) => i,
        other => return Err(Failure::new("E_ARGUMENT", format!("ssa hit takes one sink, got '{other}'"))),
    };
    let stats = ssa::hitting_mc(&rates, &disc.voxels, sink, a.m, a.seed)?;
    let generator = ssa::generator_from_rates(&rates, &disc.voxels)?;
    let deterministic = pde::hitting_time(&generator, &disc.voxels, sink, a.k)?;
    let gap = (stats.mean - deterministic).abs() / deterministic;
    let result = json!({ "stats": stats, "deterministic": deterministic, "relative_gap": gap, "k": a.k });
    ctx.write_json(a.out.as_deref(), &result)
}

fn compare(a: CompareArgs, timing: bool) -> CliResult {
    let mut ctx = Context::new("compare", &a, timing)?;
    ctx.input(&a.mesh)?;
    ctx.seed(a.seed);
    let methods: Vec<MethodSpec> = if a.methods.is_empty() {
        MethodSpec::all_builtin()
    } else {
        a.methods.iter().map(|m| m.parse()).collect::<Result<_, _>>()?
    };
    for m in &methods {
        // A missing file becomes an error in its own row.
        if let MethodSpec::External(p) = m {
            if p.is_file() {
                ctx.input(p)?;
            }
        }
    }
    let disc = discretize(&a.mesh)?;
    let opts = CompareOptions {
        gamma: a.gamma,
        seed: a.seed,
        norm: a.norm,
        timing,
        ..CompareOptions::default()
    };
    let report = compare_methods(&disc, &methods, &opts);
    for row in report.rows.iter().filter(|r| r.error.is_some()) {
        log::warn!("{}: {}", row.method, row.error.as_deref().unwrap_or_default());
    }
    if let Some(path) = &a.forward_csv {
        write_text(Some(path), &report.forward_error_csv())?;
    }
    if let Some(path) = &a.json {
        ctx.write_json(Some(path), &report)?;
    }
    if a.csv.is_some() || a.json.is_none() {
        write_text(a.csv.as_deref(), &report.to_csv())?;
    }
    Ok(())
}

fn reproduce(a: ReproduceArgs, timing: bool) -> CliResult {
    if let Some(dir) = &a.write_fixtures {
        std::fs::create_dir_all(dir).map_err(|e| Failure::new("E_IO", format!("io error on {}: {e}", dir.display())))?;
        suite::write_fixtures(dir)?;
        log::info!("wrote fixtures to {}", dir.display());
        return Ok(());
    }
    let ctx = Context::new("reproduce", &a, timing)?;
    let s = suite::Suite::open(&a.fixtures)?;
    // Criteria run concurrently; lines are printed in id order.
    let criteria: Vec<_> = (1..=suite::CRITERIA).into_par_iter().map(|id| s.run(id)).collect();
    for c in &criteria {
        println!("{}", c.line());
    }
    let report = suite::SuiteReport { criteria };
    if let Some(path) = &a.out {
        ctx.write_json(Some(path), &report)?;
    }
    let failed: Vec<String> = report.criteria.iter().filter(|c| !c.passed).map(|c| c.id.to_string()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::new("E_CRITERIA", format!("criteria {} failed", failed.join(", "))))
    }
}
