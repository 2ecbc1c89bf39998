//! Fixtures shared by the throughput benchmarks.

use g2sim_core::{rng_stream, ClickStreams, ExperimentConfig};
use rand::Rng;

/// Independent Bernoulli clicks with per-channel probabilities `p` (herald, D1, D2).
pub fn random_streams(n_bins: usize, p: [f64; 3], seed: u64) -> ClickStreams {
    let mut rng = rng_stream(seed, 0);
    let mut draw = |p: f64| (0..n_bins).map(|_| rng.random::<f64>() < p).collect::<Vec<bool>>();
    let (h, a, b) = (draw(p[0]), draw(p[1]), draw(p[2]));
    ClickStreams::from_bools(20.83e-9, &h, &a, &b).expect("equal lengths")
}

/// Desk-scale QM configuration: `mu = 0.1`, `eta_h = 0.5`, lossless signal arm.
pub fn desk_config(n_bins: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.source.pair_mean_per_bin = 0.1;
    cfg.optics.eta_h = 0.5;
    cfg.optics.eta_1 = 1.0;
    cfg.optics.eta_2 = 1.0;
    cfg.n_bins = n_bins;
    cfg.segment_bins = n_bins.min(cfg.segment_bins);
    cfg
}
