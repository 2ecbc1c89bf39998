mod common;

use common::chi2_sf;
use g2sim_core::{
    heralded_g2, pair_prob, qm_g2_predicted, rng_stream, simulate_counts, simulate_counts_until, simulate_run, Channel,
    ExperimentConfig, PairSampler,
};
use statrs::function::gamma::ln_gamma;

/// Negative-binomial pmf through log-gamma, independent of the library's recurrence.
fn nb_pmf(mu: f64, m: u32, n: u64) -> f64 {
    let (m, nf) = (f64::from(m), n as f64);
    let q = mu / (m + mu);
    (ln_gamma(nf + m) - ln_gamma(nf + 1.0) - ln_gamma(m) + nf * q.ln() + m * (1.0 - q).ln()).exp()
}

fn herald_click_probability(mu: f64, m: u32, eta_h: f64) -> f64 {
    1.0 - (0..200)
        .map(|n| pair_prob(mu, m, n) * (1.0 - eta_h).powi(n as i32))
        .sum::<f64>()
}

fn quiet(mu: f64, m: u32) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.source.pair_mean_per_bin = mu;
    cfg.source.mode_count = m;
    cfg.detectors.dark_rate = [0.0; 3];
    cfg
}

#[test]
fn pmf_matches_log_gamma_form() {
    for &(mu, m) in &[(0.01, 1u32), (0.1, 3), (0.5, 10), (2.0, 100)] {
        for n in 0..30 {
            let a = pair_prob(mu, m, n);
            let b = nb_pmf(mu, m, n);
            assert!((a - b).abs() <= 1e-10 * b + 1e-300, "mu {mu} M {m} n {n}: {a} vs {b}");
        }
    }
}

#[test]
fn pmf_sums_to_one() {
    let s: f64 = (0..=50).map(|n| pair_prob(0.1, 3, n)).sum();
    assert!((s - 1.0).abs() < 1e-12);
}

#[test]
fn sampler_histogram_fits_pmf() {
    let (mu, m) = (0.5, 3);
    let sampler = PairSampler::new(mu, m);
    let mut rng = rng_stream(11, 0);
    let draws = 1_000_000u64;
    let mut hist = [0u64; 8];
    for _ in 0..draws {
        let n = sampler.sample(&mut rng) as usize;
        hist[n.min(7)] += 1;
    }
    let mut stat = 0.0;
    for (k, &obs) in hist.iter().enumerate() {
        let p = if k < 7 {
            pair_prob(mu, m, k as u64)
        } else {
            1.0 - (0..7).map(|j| pair_prob(mu, m, j)).sum::<f64>()
        };
        let e = p * draws as f64;
        stat += (obs as f64 - e).powi(2) / e;
    }
    let p = chi2_sf(stat, 7.0);
    assert!(p > 0.001, "chi2 {stat}, p {p}");
}

#[test]
fn herald_rate_matches_exact_click_probability() {
    let mut cfg = quiet(0.05, 100);
    cfg.optics.eta_h = 0.26;
    cfg.n_bins = 10_000_000;
    let s = simulate_run(&cfg).unwrap();
    let p = herald_click_probability(0.05, 100, 0.26);
    let n = cfg.n_bins as f64;
    let observed = s.click_count(Channel::Herald) as f64 / n;
    let sigma = (p * (1.0 - p) / n).sqrt();
    assert!((observed - p).abs() < 3.0 * sigma, "{observed} vs {p} (sigma {sigma})");
}

#[test]
fn herald_probability_is_monotone() {
    let mut last = 0.0;
    for mu in [0.0, 0.01, 0.05, 0.1, 0.5] {
        let p = herald_click_probability(mu, 10, 0.3);
        assert!(p >= last);
        last = p;
    }
    let mut last = 0.0;
    for eta in [0.0, 0.1, 0.26, 0.5, 1.0] {
        let p = herald_click_probability(0.05, 10, eta);
        assert!(p >= last);
        last = p;
    }
    // Empirically, with clearly separated settings.
    let count = |mu: f64, eta: f64| {
        let mut cfg = quiet(mu, 10);
        cfg.optics.eta_h = eta;
        cfg.n_bins = 1_000_000;
        simulate_counts(&cfg, 0).unwrap().totals.n_h
    };
    assert!(count(0.02, 0.3) < count(0.05, 0.3));
    assert!(count(0.05, 0.2) < count(0.05, 0.5));
}

#[test]
fn vacuum_without_noise_counts_nothing() {
    let mut cfg = quiet(0.0, 100);
    cfg.n_bins = 1_000_000;
    let t = simulate_counts(&cfg, 0).unwrap().totals;
    assert_eq!((t.n_h, t.n_1, t.n_2, t.n_h12), (0, 0, 0, 0));
}

fn g2_at(alpha: f64, run: u32) -> g2sim_core::G2Estimate {
    let mut cfg = quiet(0.1, 100);
    cfg.optics.attenuation = alpha;
    cfg.optics.eta_h = 0.5;
    cfg.optics.eta_1 = 1.0;
    cfg.optics.eta_2 = 1.0;
    cfg.n_bins = 400_000_000;
    cfg.seed = 5;
    heralded_g2(&simulate_counts_until(&cfg, run, 3000).unwrap()).unwrap()
}

#[test]
fn heralded_g2_is_loss_invariant() {
    let a = g2_at(1.0, 0);
    let b = g2_at(0.1, 1);
    let combined = (a.sigma.powi(2) + b.sigma.powi(2)).sqrt();
    assert!(
        (a.value - b.value).abs() < 3.0 * combined,
        "{} vs {} (sigma {combined})",
        a.value,
        b.value
    );
}

#[test]
fn full_pipeline_matches_prediction() {
    let (mu, m, eta_h) = (0.05, 100, 0.5);
    let mut cfg = quiet(mu, m);
    cfg.optics.eta_h = eta_h;
    cfg.optics.eta_1 = 0.5;
    cfg.optics.eta_2 = 0.5;
    cfg.n_bins = 20_000_000;
    let g = heralded_g2(&simulate_counts(&cfg, 0).unwrap()).unwrap();
    let predicted = qm_g2_predicted(pair_prob(mu, m, 1), eta_h, g2sim_core::g_factor(m)).unwrap();
    assert!(
        (g.value - predicted).abs() < 3.0 * g.sigma,
        "{} +- {} vs {predicted}",
        g.value,
        g.sigma
    );
}
