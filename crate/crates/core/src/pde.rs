//! Deterministic solvers for the semi-discrete diffusion u_t = D u: time
//! integration, forward errors, exit times and first hitting times with a
//! point sink.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::{stiffness_from_generator, EdgeOperator};
use crate::linalg::{PivotPolicy, SkylineLdl, SymmetricBuilder, SymmetricMatrix};
use crate::mesh::{DualVoxels, Mesh};

/// Step selection for implicit Euler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepPolicy {
    Fixed { dt: f64 },
    /// Start with `t_end/initial_steps` and halve the step until two
    /// successive solutions at t_end differ by less than `tol` relative.
    Refine { initial_steps: usize, tol: f64, max_halvings: usize },
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy::Refine {
            initial_steps: 2000,
            tol: 1e-6,
            max_halvings: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// 0 followed by the requested output times.
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Largest step actually used.
    pub dt: f64,
    /// max over steps of |Σ|V|u − Σ|V|u₀| / Σ|V||u₀|.
    pub max_mass_drift: f64,
    /// Smallest nodal value seen at an output time.
    pub min_value: f64,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory has the initial state")
    }
}

/// S = A·D, checked for symmetry (all solvers here rely on it).
fn symmetric_stiffness(generator: &EdgeOperator, voxels: &DualVoxels) -> Result<EdgeOperator> {
    if generator.n() != voxels.volumes.len() {
        return Err(Error::Dimension {
            expected: voxels.volumes.len(),
            actual: generator.n(),
        });
    }
    let s = stiffness_from_generator(generator, voxels);
    let scale = s.max_abs().max(f64::MIN_POSITIVE);
    for e in 0..s.num_edges() {
        let diff = (s.upper(e) - s.lower(e)).abs();
        if diff > 1e-12 * scale {
            let (i, j) = s.pairs()[e];
            return Err(Error::NotSymmetric { row: i, col: j, diff });
        }
    }
    Ok(s)
}

/// c·(−S) + diag(add) restricted to `keep` (all nodes when `None`).
fn shifted_laplacian(s: &EdgeOperator, c: f64, add: &[f64], keep: Option<&[usize]>) -> SymmetricMatrix {
    let n = s.n();
    let index: Vec<Option<usize>> = match keep {
        None => (0..n).map(Some).collect(),
        Some(k) => {
            let mut idx = vec![None; n];
            for (p, &i) in k.iter().enumerate() {
                idx[i] = Some(p);
            }
            idx
        }
    };
    let m = keep.map_or(n, <[usize]>::len);
    let mut b = SymmetricBuilder::with_capacity(m, m + s.num_edges());
    for i in 0..n {
        if let Some(p) = index[i] {
            b.add(p, p, -c * s.diagonal()[i] + add[i]);
        }
    }
    for (e, &(i, j)) in s.pairs().iter().enumerate() {
        if let (Some(p), Some(q)) = (index[i], index[j]) {
            b.add(p, q, -c * 0.5 * (s.upper(e) + s.lower(e)));
        }
    }
    b.build()
}

/// Implicit Euler for u_t = D u, reporting the state at each requested time.
/// Each step solves (A − h S) u⁺ = A u, which conserves Σ|V_i| u_i exactly
/// up to round-off because S is symmetric with zero row sums.
pub fn integrate(generator: &EdgeOperator, voxels: &DualVoxels, u0: &[f64], times: &[f64], policy: StepPolicy) -> Result<Trajectory> {
    let s = symmetric_stiffness(generator, voxels)?;
    if u0.len() != s.n() {
        return Err(Error::Dimension {
            expected: s.n(),
            actual: u0.len(),
        });
    }
    if times.is_empty() || times[0] <= 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("output times must be positive and strictly increasing".into()));
    }
    let t_end = *times.last().expect("nonempty");
    match policy {
        StepPolicy::Fixed { dt } => {
            if !(dt > 0.0) {
                return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
            }
            euler_run(&s, voxels, u0, times, dt)
        }
        StepPolicy::Refine {
            initial_steps,
            tol,
            max_halvings,
        } => {
            let mut dt = t_end / initial_steps.max(1) as f64;
            let mut coarse = euler_run(&s, voxels, u0, times, dt)?;
            for _ in 0..max_halvings {
                dt /= 2.0;
                let fine = euler_run(&s, voxels, u0, times, dt)?;
                let scale = fine.last().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
                let diff = fine
                    .last()
                    .iter()
                    .zip(coarse.last())
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                coarse = fine;
                if diff <= tol * scale {
                    return Ok(coarse);
                }
            }
            log::warn!("step refinement did not reach tolerance {tol:e}; using dt = {dt:e}");
            Ok(coarse)
        }
    }
}

fn euler_run(s: &EdgeOperator, voxels: &DualVoxels, u0: &[f64], times: &[f64], dt: f64) -> Result<Trajectory> {
    let vol = &voxels.volumes;
    let mass0: f64 = vol.iter().zip(u0).map(|(v, u)| v * u).sum();
    let abs_mass0: f64 = vol.iter().zip(u0).map(|(v, u)| v * u.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    let umax = u0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut factors: HashMap<u64, SkylineLdl> = HashMap::new();
    let mut u = u0.to_vec();
    let mut out = Trajectory {
        times: vec![0.0],
        states: vec![u0.to_vec()],
        dt: 0.0,
        max_mass_drift: 0.0,
        min_value: u0.iter().copied().fold(f64::INFINITY, f64::min),
    };
    let mut t = 0.0;
    for &target in times {
        let span = target - t;
        let steps = (span / dt).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        out.dt = out.dt.max(h);
        if !factors.contains_key(&h.to_bits()) {
            let m = shifted_laplacian(s, h, vol, None);
            factors.insert(h.to_bits(), SkylineLdl::factor(&m, PivotPolicy::Positive { tol: 1e-14 })?);
        }
        let ldl = &factors[&h.to_bits()];
        for _ in 0..steps {
            let rhs: Vec<f64> = vol.iter().zip(&u).map(|(v, x)| v * x).collect();
            u = ldl.solve(&rhs);
            let mass: f64 = vol.iter().zip(&u).map(|(v, x)| v * x).sum();
            out.max_mass_drift = out.max_mass_drift.max((mass - mass0).abs() / abs_mass0);
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("solution at t = {target}")));
        }
        let lo = u.iter().copied().fold(f64::INFINITY, f64::min);
        if lo < -1e-10 * umax && lo < out.min_value {
            log::info!("maximum principle breach at t = {target}: min value {lo:e}");
        }
        out.min_value = out.min_value.min(lo);
        out.times.push(target);
        out.states.push(u.clone());
        t = target;
    }
    Ok(out)
}

/// ‖u‖ with the lumped mass matrix: sqrt(Σ |V_i| u_i²).
pub fn lumped_norm(voxels: &DualVoxels, u: &[f64]) -> f64 {
    voxels.volumes.iter().zip(u).map(|(v, x)| v * x * x).sum::<f64>().sqrt()
}

/// tanh(20x)tanh(20y)+1 in 2D, with a third tanh factor in 3D.
pub fn tanh_initial_condition(mesh: &Mesh) -> Vec<f64> {
    mesh.nodes()
        .iter()
        .map(|p| (0..mesh.dim()).map(|d| (20.0 * p[d]).tanh()).product::<f64>() + 1.0)
        .collect()
}

/// Relative lumped-mass error ‖u − ũ‖/‖u‖ at each requested time, with both
/// systems advanced by identical steps.
pub fn forward_error(
    d: &EdgeOperator,
    d_tilde: &EdgeOperator,
    voxels: &DualVoxels,
    u0: &[f64],
    times: &[f64],
    policy: StepPolicy,
) -> Result<Vec<f64>> {
    let reference = integrate(d, voxels, u0, times, policy)?;
    let fixed = StepPolicy::Fixed { dt: reference.dt };
    let repaired = integrate(d_tilde, voxels, u0, times, fixed)?;
    Ok(reference.states[1..]
        .iter()
        .zip(&repaired.states[1..])
        .map(|(u, v)| {
            let diff: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
            let base = lumped_norm(voxels, u);
            if base == 0.0 {
                lumped_norm(voxels, &diff)
            } else {
                lumped_norm(voxels, &diff) / base
            }
        })
        .collect())
}

/// Mean first exit time: D ε = −1 in the interior, ε = 0 on `boundary`.
pub fn exit_time(generator: &EdgeOperator, voxels: &DualVoxels, boundary: &[usize]) -> Result<Vec<f64>> {
    let s = symmetric_stiffness(generator, voxels)?;
    let n = s.n();
    if boundary.is_empty() {
        return Err(Error::Singular { pivot: 0, value: 0.0 });
    }
    let mut is_bnd = vec![false; n];
    for &b in boundary {
        if b >= n {
            return Err(Error::InvalidArgument(format!("boundary node {b} out of range")));
        }
        is_bnd[b] = true;
    }
    let interior: Vec<usize> = (0..n).filter(|&i| !is_bnd[i]).collect();
    let mut eps = vec![0.0; n];
    if interior.is_empty() {
        return Ok(eps);
    }
    // Multiplying by A turns D ε = −1 into (−S) ε = |V|.
    let m = shifted_laplacian(&s, 1.0, &vec![0.0; n], Some(&interior));
    let ldl = SkylineLdl::factor(&m, PivotPolicy::Positive { tol: 1e-13 })?;
    let rhs: Vec<f64> = interior.iter().map(|&i| voxels.volumes[i]).collect();
    for (p, v) in interior.iter().zip(ldl.solve(&rhs)) {
        eps[*p] = v;
    }
    Ok(eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SinkSelection {
    All,
    Boundary,
    Center,
    Node(usize),
}

impl FromStr for SinkSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(SinkSelection::All),
            "boundary" => Ok(SinkSelection::Boundary),
            "center" => Ok(SinkSelection::Center),
            _ => s
                .parse()
                .map(SinkSelection::Node)
                .map_err(|_| Error::InvalidArgument(format!("sink must be all, boundary, center or a node id, got '{s}'"))),
        }
    }
}

impl fmt::Display for SinkSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SinkSelection::All => f.write_str("all"),
            SinkSelection::Boundary => f.write_str("boundary"),
            SinkSelection::Center => f.write_str("center"),
            SinkSelection::Node(i) => write!(f, "{i}"),
        }
    }
}

/// Expected first hitting times for a uniformly distributed start and a sink
/// of strength K at each selected node, with the usual aggregates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HittingTimeReport {
    pub k: f64,
    pub sinks: Vec<usize>,
    pub times: Vec<f64>,
    /// Node nearest the volume centroid.
    pub center: usize,
    /// Mean over all nodes (present when every node was a sink).
    pub e_all: Option<f64>,
    /// Mean over boundary sinks.
    pub e_bnd: Option<f64>,
    /// Time for the centre sink.
    pub e_cdet: Option<f64>,
    /// Sample standard deviation over boundary sinks.
    pub e_std: Option<f64>,
}

/// Grounded Laplacian shared by all sinks.
pub struct HittingTimeSolver {
    ldl: Option<SkylineLdl>,
    volumes: Vec<f64>,
    total: f64,
    k: f64,
    /// F⁻¹ b for b = |V|/|Ω|.
    base: Vec<f64>,
}

impl HittingTimeSolver {
    pub fn new(generator: &EdgeOperator, voxels: &DualVoxels, k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidArgument(format!("sink strength must be positive, got {k}")));
        }
        let s = symmetric_stiffness(generator, voxels)?;
        let n = s.n();
        let volumes = voxels.volumes.clone();
        let total: f64 = volumes.iter().sum();
        if n == 1 {
            return Ok(Self {
                ldl: None,
                volumes,
                total,
                k,
                base: vec![0.0],
            });
        }
        // F = L + L_00 e_0 e_0ᵀ is non-singular on a connected mesh.
        let mut add = vec![0.0; n];
        add[0] = -s.diagonal()[0];
        let ldl = SkylineLdl::factor(&shifted_laplacian(&s, 1.0, &add, None), PivotPolicy::Positive { tol: 1e-13 })?;
        let b: Vec<f64> = volumes.iter().map(|v| v / total).collect();
        let base = ldl.solve(&b);
        Ok(Self {
            ldl: Some(ldl),
            volumes,
            total,
            k,
            base,
        })
    }

    /// E[τ_i] = Σ_k |V_k| w_k with w = (K e_i e_iᵀ − D)⁻¹ p₀, p₀ = 1/|Ω|.
    ///
    /// Summing the rows of (L + κ e_i e_iᵀ) w = |V|/|Ω| with κ = K|V_i| gives
    /// w_i = 1/κ, so w solves L w = b − e_i up to a constant fixed by w_i.
    pub fn time(&self, sink: usize) -> Result<f64> {
        if sink >= self.volumes.len() {
            return Err(Error::InvalidArgument(format!("sink node {sink} out of range")));
        }
        let kappa = self.k * self.volumes[sink];
        let Some(ldl) = &self.ldl else {
            return Ok(self.total / kappa);
        };
        let mut e = vec![0.0; self.volumes.len()];
        e[sink] = 1.0;
        let fe = ldl.solve(&e);
        let z: Vec<f64> = self.base.iter().zip(&fe).map(|(a, b)| a - b).collect();
        let shift = 1.0 / kappa - z[sink];
        Ok(self.volumes.iter().zip(&z).map(|(v, x)| v * x).sum::<f64>() + shift * self.total)
    }
}

pub fn hitting_time(generator: &EdgeOperator, voxels: &DualVoxels, sink: usize, k: f64) -> Result<f64> {
    HittingTimeSolver::new(generator, voxels, k)?.time(sink)
}

pub fn hitting_times(generator: &EdgeOperator, mesh: &Mesh, voxels: &DualVoxels, selection: SinkSelection, k: f64) -> Result<HittingTimeReport> {
    let solver = HittingTimeSolver::new(generator, voxels, k)?;
    let center = mesh.center_node();
    let sinks: Vec<usize> = match selection {
        SinkSelection::All => (0..mesh.num_nodes()).collect(),
        SinkSelection::Boundary => mesh.boundary_nodes().iter().copied().collect(),
        SinkSelection::Center => vec![center],
        SinkSelection::Node(i) => vec![i],
    };
    let times = sinks.par_iter().map(|&i| solver.time(i)).collect::<Result<Vec<f64>>>()?;
    let bnd: Vec<f64> = sinks
        .iter()
        .zip(&times)
        .filter(|(i, _)| mesh.is_boundary(**i))
        .map(|(_, t)| *t)
        .collect();
    let e_bnd = (!bnd.is_empty()).then(|| bnd.iter().sum::<f64>() / bnd.len() as f64);
    let e_std = (bnd.len() > 1).then(|| {
        let m = e_bnd.expect("nonempty");
        (bnd.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (bnd.len() - 1) as f64).sqrt()
    });
    Ok(HittingTimeReport {
        k,
        e_all: (selection == SinkSelection::All).then(|| times.iter().sum::<f64>() / times.len() as f64),
        e_cdet: sinks.iter().position(|&i| i == center).map(|p| times[p]),
        e_bnd,
        e_std,
        center,
        sinks,
        times,
    })
}

/// The same expectation by integrating the survival probability
/// S(t) = Σ_k |V_k| p_k(t) over time. p(t) is evaluated exactly through the
/// eigen-decomposition of the symmetrized sink operator and the integral is
/// taken by the trapezoidal rule in log t. Dense: meant for small meshes.
pub fn hitting_time_quadrature(generator: &EdgeOperator, voxels: &DualVoxels, sink: usize, k: f64) -> Result<f64> {
    let s = symmetric_stiffness(generator, voxels)?;
    let n = s.n();
    let v = &voxels.volumes;
    let total: f64 = v.iter().sum();
    // B = A^{-1/2} (S − K|V_i| e_i e_iᵀ) A^{-1/2}
    let mut b = s.to_dense();
    b[(sink, sink)] -= k * v[sink];
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] /= (v[i] * v[j]).sqrt();
        }
    }
    let b = 0.5 * (&b + b.transpose());
    let eig = nalgebra::SymmetricEigen::new(b);
    let c = nalgebra::DVector::from_iterator(n, v.iter().map(|x| x.sqrt()));
    let proj = eig.eigenvectors.transpose() * c;
    let weights: Vec<f64> = proj.iter().map(|x| x * x / total).collect();
    let rates: Vec<f64> = eig.eigenvalues.iter().map(|l| -l).collect();
    if rates.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::Singular { pivot: sink, value: rates.iter().copied().fold(f64::INFINITY, f64::min) });
    }
    let survival = |t: f64| weights.iter().zip(&rates).map(|(w, r)| w * (-r * t).exp()).sum::<f64>();
    let fast = rates.iter().copied().fold(0.0, f64::max);
    let slow = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let t0 = 1e-6 / fast;
    let t1 = 45.0 / slow;
    let per_decade = 400.0;
    let steps = ((t1 / t0).log10() * per_decade).ceil() as usize;
    let ds = (t1 / t0).ln() / steps as f64;
    // ∫₀^{t0} S ≈ S(0) t0 with S(0) = 1; beyond t1 the integrand is below e^{-45}.
    let mut integral = t0 * (1.0 - 0.5 * t0 * weights.iter().zip(&rates).map(|(w, r)| w * r).sum::<f64>());
    let f = |m: usize| {
        let t = t0 * (m as f64 * ds).exp();
        survival(t) * t
    };
    for m in 0..steps {
        integral += 0.5 * ds * (f(m) + f(m + 1));
    }
    Ok(integral)
}

/// Mean of `values` over radial shells of width `width` around the mesh
/// centroid; `None` for an empty shell.
pub fn shell_average(mesh: &Mesh, values: &[f64], width: f64) -> Result<Vec<(f64, Option<f64>)>> {
    if !(width > 0.0) {
        return Err(Error::InvalidArgument(format!("shell width must be positive, got {width}")));
    }
    if values.len() != mesh.num_nodes() {
        return Err(Error::Dimension {
            expected: mesh.num_nodes(),
            actual: values.len(),
        });
    }
    let c = mesh.centroid();
    let radius: Vec<f64> = mesh
        .nodes()
        .iter()
        .map(|p| ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2)).sqrt())
        .collect();
    let rmax = radius.iter().copied().fold(0.0, f64::max);
    let bins = ((rmax / width).floor() as usize) + 1;
    let mut sum = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    for (r, v) in radius.iter().zip(values) {
        let b = ((r / width).floor() as usize).min(bins - 1);
        sum[b] += v;
        count[b] += 1;
    }
    Ok((0..bins)
        .map(|b| ((b as f64 + 0.5) * width, (count[b] > 0).then(|| sum[b] / count[b] as f64)))
        .collect())
}
