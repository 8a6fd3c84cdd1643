use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kdd_bench::{coil_model, random_pattern};
use kdd_core::{
    approx_best_candidate, compute_w, dd_direct, dd_fft, exact_best_candidate, threshold_w,
    DesignConfig, Keep,
};

fn weighting(c: &mut Criterion) {
    let mut group = c.benchmark_group("compute_w");
    group.sample_size(10);
    for n in [32, 64] {
        let sens = coil_model(n, 8);
        group.bench_with_input(BenchmarkId::from_parameter(n), &sens, |b, s| b.iter(|| compute_w(s)));
    }
    group.finish();
}

fn greedy(c: &mut Criterion) {
    let mut group = c.benchmark_group("greedy");
    group.sample_size(10);
    let w = compute_w(&coil_model(64, 8));
    let config = DesignConfig::new(1024);
    group.bench_function("exact", |b| b.iter(|| exact_best_candidate(&w, &config).unwrap()));
    for keep in [64, 1024] {
        let sparse = threshold_w(&w, Keep::Count(keep)).unwrap();
        group.bench_with_input(BenchmarkId::new("approx", keep), &sparse, |b, s| {
            b.iter(|| approx_best_candidate(s, &config).unwrap())
        });
    }
    group.finish();
}

fn distributions(c: &mut Criterion) {
    let mut group = c.benchmark_group("differential_distribution");
    let pattern = random_pattern(32, 256);
    group.bench_function("fft", |b| b.iter(|| dd_fft(&pattern)));
    group.bench_function("direct", |b| b.iter(|| dd_direct(&pattern)));
    group.finish();
}

criterion_group!(benches, weighting, greedy, distributions);
criterion_main!(benches);
