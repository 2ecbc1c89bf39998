mod common;

use common::{ks_two_sample, mean, std_err};
use g2sim_core::config::PcsftConfig;
use g2sim_core::pcsft::simulate_first_passage_stepwise;
use g2sim_core::{rng_stream, simulate_counts, simulate_first_passage, ExperimentConfig, Theory};

fn hit_times(e_d: f64, power: f64, dt: f64, t_max: f64, n: usize, stream: u64, stepwise: bool) -> Vec<f64> {
    let mut rng = rng_stream(7, stream);
    (0..n)
        .filter_map(|_| {
            let r = if stepwise {
                simulate_first_passage_stepwise(e_d, power, dt, t_max, &mut rng)
            } else {
                simulate_first_passage(e_d, power, dt, t_max, &mut rng)
            };
            r.unwrap().hit_time
        })
        .collect()
}

fn hit_fraction(e_d: f64, power: f64, dt: f64, window: f64, n: usize, stream: u64) -> f64 {
    hit_times(e_d, power, dt, window, n, stream, false).len() as f64 / n as f64
}

#[test]
fn long_horizon_almost_always_hits() {
    let n = 10_000;
    let f = hit_fraction(1.0, 1.0, 1e-3, 100.0, n, 0);
    assert!(f >= 1.0 - 1e-3, "{f}");
}

#[test]
fn block_skipping_matches_plain_stepping() {
    let a = hit_times(1.0, 1.0, 1e-3, 50.0, 10_000, 1, false);
    let b = hit_times(1.0, 1.0, 1e-3, 50.0, 10_000, 2, true);
    let (d, p) = ks_two_sample(&a, &b);
    assert!(p > 0.001, "KS D {d}, p {p}");
}

#[test]
fn hit_times_scale_with_threshold() {
    let small = hit_times(1.0, 1.0, 1e-4, 100.0, 20_000, 3, false);
    let large = hit_times(4.0, 1.0, 1e-4, 400.0, 20_000, 4, false);
    let ratio = mean(&large) / mean(&small);
    assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn joint_rescaling_leaves_law_unchanged() {
    let a = hit_times(1.0, 1.0, 1e-3, 50.0, 10_000, 5, false);
    let b = hit_times(3.0, 3.0, 1e-3, 50.0, 10_000, 6, false);
    let (d, p) = ks_two_sample(&a, &b);
    assert!(p > 0.001, "KS D {d}, p {p}");
}

#[test]
fn mean_hit_time_is_threshold_over_power() {
    let t = hit_times(1.0, 1.0, 1e-4, 100.0, 20_000, 8, false);
    let m = mean(&t);
    assert!((m - 1.0).abs() < 0.02 + 3.0 * std_err(&t), "{m}");
}

#[test]
fn doubling_power_raises_click_probability() {
    let n = 100_000;
    let p1 = hit_fraction(1.0, 1.0, 1e-3, 0.5, n, 9);
    let p2 = hit_fraction(1.0, 2.0, 1e-3, 0.5, n, 10);
    let sigma = ((p1 * (1.0 - p1) + p2 * (1.0 - p2)) / n as f64).sqrt();
    assert!(p2 - p1 > 5.0 * sigma, "{p1} -> {p2}");
}

#[test]
fn herald_click_rate_matches_standalone_passage() {
    let mut cfg = ExperimentConfig {
        theory: Theory::Pcsft,
        ..Default::default()
    };
    cfg.detectors.dark_rate = [0.0; 3];
    cfg.detectors.bin_width = 1e-8;
    cfg.optics.eta_h = 0.5;
    cfg.optics.attenuation = 0.0;
    let pulse = 1e-8;
    let power = 1.2e8;
    cfg.pcsft = Some(PcsftConfig::new(1.0, pulse, power));
    cfg.n_bins = 200_000;
    cfg.segment_bins = 10_000;
    let counts = simulate_counts(&cfg, 0).unwrap();
    let n = cfg.n_bins as f64;
    let from_run = counts.totals.n_h as f64 / n;
    let standalone = hit_fraction(1.0, power * 0.5, pulse / 1000.0, pulse, 200_000, 12);
    let sigma = ((from_run * (1.0 - from_run) + standalone * (1.0 - standalone)) / n).sqrt();
    assert!(
        (from_run - standalone).abs() < 3.0 * sigma,
        "{from_run} vs {standalone}"
    );
    assert_eq!(counts.totals.n_1 + counts.totals.n_2, 0);
}
