use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use g2sim_bench::{desk_config, random_streams};
use g2sim_core::config::PcsftConfig;
use g2sim_core::{accumulate, rng_stream, simulate_first_passage, simulate_segment, Theory};
use std::hint::black_box;

fn accumulate_bins(c: &mut Criterion) {
    let mut group = c.benchmark_group("accumulate");
    for density in [0.01, 0.5] {
        let n = 1 << 20;
        let s = random_streams(n, [density; 3], 1);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::from_parameter(density), &s, |b, s| {
            b.iter(|| accumulate(black_box(s), 48_000))
        });
    }
    group.finish();
}

fn first_passage(c: &mut Criterion) {
    let mut group = c.benchmark_group("first_passage");
    for dt in [1e-3, 1e-5] {
        let mut rng = rng_stream(2, 0);
        group.bench_with_input(BenchmarkId::from_parameter(dt), &dt, |b, &dt| {
            b.iter(|| simulate_first_passage(1.0, 1.0, dt, 100.0, &mut rng).unwrap())
        });
    }
    group.finish();
}

fn segments(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate_segment");
    let qm = desk_config(48_000);
    group.throughput(Throughput::Elements(qm.segment_bins));
    group.bench_function("qm", |b| b.iter(|| simulate_segment(black_box(&qm), 0, 0)));

    let mut pcsft = desk_config(1_000);
    pcsft.theory = Theory::Pcsft;
    pcsft.optics.eta_h = 1.0;
    pcsft.pcsft = Some(PcsftConfig::new(1.0, pcsft.detectors.bin_width, 7.2e7));
    group.throughput(Throughput::Elements(pcsft.segment_bins));
    group.bench_function("pcsft", |b| b.iter(|| simulate_segment(black_box(&pcsft), 0, 0)));
    group.finish();
}

criterion_group!(benches, accumulate_bins, first_passage, segments);
criterion_main!(benches);
