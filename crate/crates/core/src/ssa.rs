//! Exact stochastic simulation of the jump process: each voxel carries an
//! exponential clock with rate λ_k y_k, the earliest one fires, and one
//! molecule hops to a neighbour drawn with probability λ_ji/λ_j.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::{EdgeOperator, JumpRates, OperatorRole};
use crate::mesh::DualVoxels;
use crate::pde::{integrate, StepPolicy};

/// Per-trajectory cap on the number of jumps.
pub const EVENT_CAP: u64 = 1_000_000_000;

/// Independent reproducible stream for trajectory `stream` under `seed`.
pub fn trajectory_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// −ln(1−U)/rate, or +∞ for a zero rate.
pub fn sample_exponential(rng: &mut impl Rng, rate: f64) -> f64 {
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

/// Neighbour of `from` drawn with probability λ_ji/λ_j.
fn sample_destination(rates: &JumpRates, from: usize, rng: &mut impl Rng) -> usize {
    let list = rates.outgoing(from);
    let target = rng.random::<f64>() * rates.total(from);
    let mut acc = 0.0;
    for &(i, r) in list {
        acc += r;
        if target < acc {
            return i;
        }
    }
    // Round-off left `target` at the very top: take the last positive rate.
    list.iter().rev().find(|(_, r)| *r > 0.0).map(|&(i, _)| i).expect("positive total rate")
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Clock(f64);

impl Eq for Clock {}

impl PartialOrd for Clock {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Clock {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SsaState {
    pub counts: Vec<u64>,
    pub time: f64,
    /// Pending event time of each voxel (+∞ when its rate is zero).
    pub next: Vec<f64>,
    pub seed: u64,
    pub stream: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub time: f64,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SsaRun {
    pub state: SsaState,
    pub snapshots: Vec<Snapshot>,
    pub events: u64,
    /// Time of the first jump, if any happened before t_end.
    pub first_event: Option<f64>,
}

/// Simulate from `initial` up to `t_end`, recording the state at each of the
/// (ascending) `snapshots`. Next event times live in a binary heap; entries
/// made stale by a clock reset are skipped when popped.
pub fn run(rates: &JumpRates, initial: &[u64], t_end: f64, snapshots: &[f64], seed: u64, stream: u64) -> Result<SsaRun> {
    let n = rates.num_voxels();
    if initial.len() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: initial.len(),
        });
    }
    if !(t_end >= 0.0) {
        return Err(Error::InvalidArgument(format!("t_end must be non-negative, got {t_end}")));
    }
    if snapshots.windows(2).any(|w| w[1] < w[0]) || snapshots.iter().any(|&t| !(0.0..=t_end).contains(&t)) {
        return Err(Error::InvalidArgument("snapshot times must be ascending within [0, t_end]".into()));
    }
    let mut rng = trajectory_rng(seed, stream);
    let mut counts = initial.to_vec();
    let mut next = vec![f64::INFINITY; n];
    let mut version = vec![0u64; n];
    let mut heap = BinaryHeap::new();
    for k in 0..n {
        next[k] = sample_exponential(&mut rng, rates.total(k) * counts[k] as f64);
        if next[k].is_finite() {
            heap.push(Reverse((Clock(next[k]), k, 0u64)));
        }
    }
    let mut out = Vec::with_capacity(snapshots.len());
    let mut pending = snapshots.iter().copied().peekable();
    let mut time = 0.0;
    let mut events = 0u64;
    let mut first_event = None;
    while let Some(Reverse((Clock(tj), j, v))) = heap.pop() {
        if v != version[j] {
            continue;
        }
        if tj > t_end {
            break;
        }
        while let Some(ts) = pending.next_if(|&ts| ts < tj) {
            out.push(Snapshot { time: ts, counts: counts.clone() });
        }
        time = tj;
        first_event.get_or_insert(tj);
        let i = sample_destination(rates, j, &mut rng);
        counts[j] -= 1;
        counts[i] += 1;
        events += 1;
        for k in [j, i] {
            version[k] += 1;
            next[k] = time + sample_exponential(&mut rng, rates.total(k) * counts[k] as f64);
            if next[k].is_finite() {
                heap.push(Reverse((Clock(next[k]), k, version[k])));
            }
        }
    }
    for ts in pending {
        out.push(Snapshot { time: ts, counts: counts.clone() });
    }
    Ok(SsaRun {
        state: SsaState {
            counts,
            time: time.max(t_end),
            next,
            seed,
            stream,
        },
        snapshots: out,
        events,
        first_event,
    })
}

/// First time a single molecule starting at `start` enters `sink`; `None`
/// when it is trapped or the event cap is reached.
pub fn simulate_hit(rates: &JumpRates, start: usize, sink: usize, rng: &mut impl Rng, cap: u64) -> Option<f64> {
    let mut at = start;
    let mut t = 0.0;
    let mut events = 0;
    while at != sink {
        if events >= cap {
            return None;
        }
        let dt = sample_exponential(rng, rates.total(at));
        if !dt.is_finite() {
            return None;
        }
        t += dt;
        at = sample_destination(rates, at, rng);
        events += 1;
    }
    Some(t)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub m: usize,
    pub sink: usize,
    pub mean: f64,
    pub std_dev: f64,
    /// Sample standard deviation over √(accepted samples).
    pub std_error: f64,
    /// Trajectories that hit the event cap or got trapped.
    pub excluded: usize,
    #[serde(skip)]
    pub samples: Vec<f64>,
}

impl EnsembleStats {
    pub fn from_samples(sink: usize, m: usize, samples: Vec<f64>) -> Self {
        let k = samples.len();
        let mean = if k == 0 { f64::NAN } else { samples.iter().sum::<f64>() / k as f64 };
        let std_dev = if k > 1 {
            (samples.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            m,
            sink,
            mean,
            std_dev,
            std_error: if k > 0 { std_dev / (k as f64).sqrt() } else { f64::NAN },
            excluded: m - k,
            samples,
        }
    }
}

/// Monte Carlo estimate of the mean first hitting time of `sink`, with the
/// start voxel drawn with probability |V_k|/|Ω|. Trajectory `m` uses stream
/// `m` of `seed`, so results do not depend on the thread count.
pub fn hitting_mc(rates: &JumpRates, voxels: &DualVoxels, sink: usize, m: usize, seed: u64) -> Result<EnsembleStats> {
    hitting_mc_capped(rates, voxels, sink, m, seed, EVENT_CAP)
}

pub fn hitting_mc_capped(rates: &JumpRates, voxels: &DualVoxels, sink: usize, m: usize, seed: u64, cap: u64) -> Result<EnsembleStats> {
    let n = rates.num_voxels();
    if voxels.volumes.len() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: voxels.volumes.len(),
        });
    }
    if sink >= n {
        return Err(Error::InvalidArgument(format!("sink node {sink} out of range")));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("at least one trajectory is required".into()));
    }
    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0;
    for v in &voxels.volumes {
        acc += v;
        cumulative.push(acc);
    }
    let total = acc;
    let results: Vec<Option<f64>> = (0..m as u64)
        .into_par_iter()
        .map(|id| {
            let mut rng = trajectory_rng(seed, id);
            let u = rng.random::<f64>() * total;
            let start = cumulative.partition_point(|&c| c <= u).min(n - 1);
            simulate_hit(rates, start, sink, &mut rng, cap)
        })
        .collect();
    let excluded = results.iter().filter(|r| r.is_none()).count();
    if excluded > 0 {
        log::warn!("{excluded} of {m} trajectories never reached the sink and were excluded");
    }
    Ok(EnsembleStats::from_samples(sink, m, results.into_iter().flatten().collect()))
}

/// D_ij = λ_ji |V_j| / |V_i|, the mean-field generator of the jump process.
pub fn generator_from_rates(rates: &JumpRates, voxels: &DualVoxels) -> Result<EdgeOperator> {
    let n = rates.num_voxels();
    let v = &voxels.volumes;
    if v.len() != n {
        return Err(Error::Dimension { expected: n, actual: v.len() });
    }
    let mut pairs = Vec::new();
    for j in 0..n {
        for &(i, _) in rates.outgoing(j) {
            pairs.push((i.min(j), i.max(j)));
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    let upper = pairs.iter().map(|&(i, j)| rates.rate(j, i) * v[j] / v[i]).collect();
    let lower = pairs.iter().map(|&(i, j)| rates.rate(i, j) * v[i] / v[j]).collect();
    let diagonal = (0..n).map(|i| -rates.total(i)).collect();
    Ok(EdgeOperator::from_parts(OperatorRole::Generator, pairs, upper, lower, diagonal))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupancyReport {
    pub times: Vec<f64>,
    pub trajectories: usize,
    pub molecules: u64,
    /// Ensemble mean concentration y_k/(|V_k|·scale) at each time.
    pub ssa_mean: Vec<Vec<f64>>,
    pub ode: Vec<Vec<f64>>,
    /// Largest |mean − ode|/standard error at each time.
    pub max_z: Vec<f64>,
}

impl OccupancyReport {
    pub fn worst_z(&self) -> f64 {
        self.max_z.iter().copied().fold(0.0, f64::max)
    }
}

/// Compare ensemble-mean concentrations with the deterministic solution of
/// the same generator. Initial counts are round(u0_k |V_k| scale).
pub fn occupancy_vs_ode(
    rates: &JumpRates,
    voxels: &DualVoxels,
    u0: &[f64],
    scale: f64,
    times: &[f64],
    m: usize,
    seed: u64,
) -> Result<OccupancyReport> {
    let n = rates.num_voxels();
    if u0.len() != n {
        return Err(Error::Dimension { expected: n, actual: u0.len() });
    }
    if u0.iter().any(|&u| !(u >= 0.0)) || !(scale > 0.0) || m < 2 {
        return Err(Error::InvalidArgument("need u0 ≥ 0, scale > 0 and at least two trajectories".into()));
    }
    let v = &voxels.volumes;
    let counts: Vec<u64> = (0..n).map(|k| (u0[k] * v[k] * scale).round() as u64).collect();
    let start: Vec<f64> = (0..n).map(|k| counts[k] as f64 / (v[k] * scale)).collect();
    let t_end = times.last().copied().unwrap_or(0.0);
    let runs = (0..m as u64)
        .into_par_iter()
        .map(|id| run(rates, &counts, t_end, times, seed, id))
        .collect::<Result<Vec<SsaRun>>>()?;
    let ode = if start.iter().all(|&u| u == 0.0) || times.is_empty() {
        vec![vec![0.0; n]; times.len()]
    } else {
        let d = generator_from_rates(rates, voxels)?;
        integrate(&d, voxels, &start, times, StepPolicy::default())?.states[1..].to_vec()
    };
    let mut ssa_mean = Vec::with_capacity(times.len());
    let mut max_z = Vec::with_capacity(times.len());
    for (s, ode_s) in ode.iter().enumerate() {
        let mut mean = vec![0.0; n];
        let mut z_max: f64 = 0.0;
        for k in 0..n {
            let c: Vec<f64> = runs.iter().map(|r| r.snapshots[s].counts[k] as f64 / (v[k] * scale)).collect();
            let mk = c.iter().sum::<f64>() / m as f64;
            let var = c.iter().map(|x| (x - mk).powi(2)).sum::<f64>() / (m - 1) as f64;
            let se = (var / m as f64).sqrt();
            let diff = (mk - ode_s[k]).abs();
            let z = if diff <= 1e-12 * ode_s[k].abs().max(1e-300) {
                0.0
            } else if se > 0.0 {
                diff / se
            } else {
                f64::INFINITY
            };
            z_max = z_max.max(z);
            mean[k] = mk;
        }
        ssa_mean.push(mean);
        max_z.push(z_max);
    }
    Ok(OccupancyReport {
        times: times.to_vec(),
        trajectories: m,
        molecules: counts.iter().sum(),
        ssa_mean,
        ode,
        max_z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_voxel(lambda: f64) -> (JumpRates, DualVoxels) {
        let rates = JumpRates::from_outgoing(vec![vec![(1, lambda)], vec![(0, lambda)]]).unwrap();
        (rates, DualVoxels { volumes: vec![1.0, 1.0] })
    }

    #[test]
    fn single_voxel_has_no_events() {
        let rates = JumpRates::from_outgoing(vec![vec![]]).unwrap();
        let r = run(&rates, &[5], 3.0, &[1.0, 3.0], 0, 0).unwrap();
        assert_eq!(r.events, 0);
        assert_eq!(r.state.counts, vec![5]);
        assert_eq!(r.snapshots.len(), 2);
        assert_eq!(r.state.time, 3.0);
    }

    #[test]
    fn molecules_are_conserved_and_runs_repeat() {
        let rates = JumpRates::from_outgoing(vec![vec![(1, 1.0), (2, 0.5)], vec![(0, 2.0)], vec![(0, 1.0), (1, 3.0)]]).unwrap();
        let a = run(&rates, &[10, 0, 4], 5.0, &[0.5, 1.0, 5.0], 42, 3).unwrap();
        let b = run(&rates, &[10, 0, 4], 5.0, &[0.5, 1.0, 5.0], 42, 3).unwrap();
        assert_eq!(a, b);
        for s in &a.snapshots {
            assert_eq!(s.counts.iter().sum::<u64>(), 14);
        }
        assert!(a.state.next.iter().all(|&t| t >= a.state.time || t.is_infinite() || t > 5.0));
        assert!(a.events > 0);
    }

    #[test]
    fn first_jump_is_exponential() {
        let lambda = 2.5;
        let (rates, _) = two_voxel(lambda);
        let m = 20_000;
        let times: Vec<f64> = (0..m)
            .map(|s| run(&rates, &[1, 0], 1e3, &[], 7, s).unwrap().first_event.unwrap())
            .collect();
        let stats = EnsembleStats::from_samples(0, m as usize, times);
        assert!((stats.mean - 1.0 / lambda).abs() < 3.0 * stats.std_error);
    }

    #[test]
    fn destinations_follow_rate_ratios() {
        let rates = JumpRates::from_outgoing(vec![vec![(1, 1.0), (2, 3.0)], vec![], vec![]]).unwrap();
        let mut rng = trajectory_rng(1, 0);
        let n = 40_000;
        let hits = (0..n).filter(|_| sample_destination(&rates, 0, &mut rng) == 2).count() as f64;
        let p = 0.75;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((hits - n as f64 * p).abs() < 3.0 * sd);
    }

    #[test]
    fn start_at_sink_is_zero() {
        let (rates, _) = two_voxel(1.0);
        let mut rng = trajectory_rng(0, 0);
        assert_eq!(simulate_hit(&rates, 1, 1, &mut rng, EVENT_CAP), Some(0.0));
    }

    #[test]
    fn trapped_molecule_is_excluded() {
        let rates = JumpRates::from_outgoing(vec![vec![], vec![(0, 1.0)]]).unwrap();
        let vox = DualVoxels { volumes: vec![1.0, 1.0] };
        let stats = hitting_mc(&rates, &vox, 1, 200, 0).unwrap();
        assert!(stats.excluded > 50 && stats.excluded < 150);
        assert!(stats.samples.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn hitting_mc_is_thread_independent() {
        let (rates, vox) = two_voxel(1.0);
        let a = hitting_mc(&rates, &vox, 0, 500, 9).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| hitting_mc(&rates, &vox, 0, 500, 9).unwrap());
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn generator_round_trip() {
        let (rates, vox) = two_voxel(1.5);
        let d = generator_from_rates(&rates, &vox).unwrap();
        assert_eq!(d.upper(0), 1.5);
        assert_eq!(d.diagonal(), &[-1.5, -1.5]);
    }

    #[test]
    fn zero_molecules_match_trivially() {
        let (rates, vox) = two_voxel(1.0);
        let r = occupancy_vs_ode(&rates, &vox, &[0.0, 0.0], 1e4, &[0.1, 0.5], 10, 0).unwrap();
        assert_eq!(r.worst_z(), 0.0);
        assert_eq!(r.molecules, 0);
    }
}
