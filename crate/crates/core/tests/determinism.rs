use g2sim_core::config::PcsftConfig;
use g2sim_core::{run_sweep, simulate_counts, simulate_run, ExperimentConfig, SweepPlan, Theory};

fn with_threads<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .unwrap()
        .install(f)
}

fn qm() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.source.pair_mean_per_bin = 0.05;
    cfg.n_bins = 2_000_000;
    cfg.segment_bins = 48_000;
    cfg.seed = 42;
    cfg
}

#[test]
fn streams_do_not_depend_on_worker_count() {
    let cfg = qm();
    let one = with_threads(1, || simulate_run(&cfg).unwrap());
    let four = with_threads(4, || simulate_run(&cfg).unwrap());
    assert_eq!(one, four);
    let mut a = Vec::new();
    let mut b = Vec::new();
    one.write_pstm(&mut a).unwrap();
    four.write_pstm(&mut b).unwrap();
    assert_eq!(a, b);
}

#[test]
fn pcsft_counts_do_not_depend_on_worker_count() {
    let mut cfg = qm();
    cfg.theory = Theory::Pcsft;
    cfg.pcsft = Some(PcsftConfig::new(1.0, cfg.detectors.bin_width, 7.2e7));
    cfg.n_bins = 20_000;
    cfg.segment_bins = 1_000;
    let one = with_threads(1, || simulate_counts(&cfg, 0).unwrap());
    let three = with_threads(3, || simulate_counts(&cfg, 0).unwrap());
    assert_eq!(one, three);
}

#[test]
fn sweep_reports_do_not_depend_on_worker_count() {
    let cfg = qm();
    let mut plan = SweepPlan::new(vec![1.0, 0.5, 0.25]);
    plan.target_triples = 50;
    let one = with_threads(1, || run_sweep(&cfg, &plan).unwrap().report);
    let four = with_threads(4, || run_sweep(&cfg, &plan).unwrap().report);
    assert_eq!(one, four);
}
