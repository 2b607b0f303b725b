use criterion::{criterion_group, criterion_main, Criterion};
use trustwatch_core::harness::run_batch_sequential;
use trustwatch_core::sim::ScenarioConfig;

fn configs() -> Vec<ScenarioConfig> {
    (1..=8)
        .map(|seed| ScenarioConfig {
            duration_s: 120,
            node_count: 30,
            malicious_count: 3,
            flow_count: 10,
            rng_seed: seed,
            ..ScenarioConfig::table1()
        })
        .collect()
}

fn batch(c: &mut Criterion) {
    let cfgs = configs();
    let mut g = c.benchmark_group("batch_of_8");
    g.sample_size(10);
    g.bench_function("sequential", |b| {
        b.iter(|| run_batch_sequential(&cfgs).unwrap())
    });
    #[cfg(feature = "parallel")]
    g.bench_function("parallel", |b| {
        b.iter(|| trustwatch_core::harness::run_batch_parallel(&cfgs).unwrap())
    });
    g.finish();
}

criterion_group!(benches, batch);
criterion_main!(benches);
