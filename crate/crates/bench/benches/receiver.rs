//! Receiver hot-path benchmarks. The headline number is the sliding
//! preamble correlation over a 10,000-sample window: sustaining 1 MSps
//! in real time means finishing each window in well under 10 ms, and the
//! hardware budget quoted for this design is 60 µs of correlation per
//! window instance.

use criterion::{black_box, criterion_group, criterion_main, Criterion, Throughput};
use underlay_bench::{noise_window, packet_window};
use underlay_core::{
    correlate_preamble, despread, detect_and_decode, hadamard_row, spread, DetectorConfig,
};

fn bench_correlate(c: &mut Criterion) {
    let preamble = hadamard_row(64, 1).unwrap();
    let window = noise_window(7);
    let mut group = c.benchmark_group("correlate_preamble");
    group.throughput(Throughput::Elements(window.len() as u64));
    group.bench_function("window_10k", |b| {
        b.iter(|| correlate_preamble(black_box(&window), &preamble, 1).unwrap())
    });
    group.finish();
}

fn bench_despread(c: &mut Criterion) {
    let code = hadamard_row(64, 5).unwrap();
    let bits: Vec<bool> = (0..152).map(|i| i % 3 == 0).collect();
    let chips: Vec<f64> = spread(&bits, &code).iter().map(|&v| v as f64).collect();
    let mut group = c.benchmark_group("despread");
    group.throughput(Throughput::Elements(chips.len() as u64));
    group.bench_function("frame_152_bits", |b| {
        b.iter(|| despread(black_box(&chips), &code).unwrap())
    });
    group.finish();
}

fn bench_detect(c: &mut Criterion) {
    let preamble = hadamard_row(64, 1).unwrap();
    let codes = vec![hadamard_row(64, 2).unwrap()];
    let det = DetectorConfig::new(preamble, codes, 10_000, 0.6).unwrap();
    let window = packet_window(42);
    let mut group = c.benchmark_group("detect_and_decode");
    group.throughput(Throughput::Elements(window.len() as u64));
    group.bench_function("one_packet_window", |b| {
        b.iter(|| detect_and_decode(black_box(&window), &det))
    });
    group.finish();
}

criterion_group!(benches, bench_correlate, bench_despread, bench_detect);
criterion_main!(benches);
