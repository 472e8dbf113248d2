//! Distributional checks of the simulator at significance 1e-3.

use meso_core::fem::JumpRates;
use meso_core::ssa;

const SAMPLES: u64 = 4000;

fn rates() -> JumpRates {
    JumpRates::from_outgoing(vec![vec![(1, 1.0), (2, 3.0)], vec![(0, 0.5)], vec![(0, 2.0), (1, 0.25)]]).unwrap()
}

/// Kolmogorov–Smirnov distance between the sample and Exp(rate).
fn ks_exponential(mut xs: Vec<f64>, rate: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0f64, |d, (k, &x)| {
        let f = 1.0 - (-rate * x).exp();
        d.max((f - k as f64 / n).abs()).max(((k + 1) as f64 / n - f).abs())
    })
}

#[test]
fn first_event_time_is_exponential_in_the_total_propensity() {
    let r = rates();
    let initial = [5u64, 2, 3];
    let total: f64 = (0..3).map(|k| r.total(k) * initial[k] as f64).sum();
    let times: Vec<f64> = (0..SAMPLES)
        .map(|s| ssa::run(&r, &initial, 50.0, &[], 11, s).unwrap().first_event.unwrap())
        .collect();
    let d = ks_exponential(times, total);
    // c(α) = sqrt(−ln(α/2)/2) for α = 1e-3.
    let critical = (-(0.5e-3f64).ln() / 2.0).sqrt() / (SAMPLES as f64).sqrt();
    assert!(d < critical, "KS distance {d} ≥ {critical}");
}

#[test]
fn first_jump_destination_follows_the_rate_split() {
    let r = rates();
    let mut hits = [0u64; 3];
    for s in 0..SAMPLES {
        let tau = ssa::run(&r, &[1, 0, 0], 50.0, &[], 5, s).unwrap().first_event.unwrap();
        // Replaying the same stream up to the first jump leaves the molecule
        // where that jump took it.
        let after = ssa::run(&r, &[1, 0, 0], tau, &[], 5, s).unwrap();
        assert_eq!(after.events, 1);
        let at = after.state.counts.iter().position(|&c| c == 1).unwrap();
        hits[at] += 1;
    }
    assert_eq!(hits[0], 0);
    let n = SAMPLES as f64;
    let expected = [0.25 * n, 0.75 * n];
    let chi2: f64 = hits[1..].iter().zip(expected).map(|(&o, e)| (o as f64 - e).powi(2) / e).sum();
    // χ²₁ quantile at 1 − 1e-3.
    assert!(chi2 < 10.828, "chi-square {chi2}, counts {hits:?}");
}
