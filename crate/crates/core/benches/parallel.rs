//! Thread-scaling benchmarks for the two embarrassingly parallel hot
//! paths: the analytic envelope sweep and the simulation batch. Each is
//! measured on a single rayon thread and on the default pool, so the
//! speedup of the data-parallel core is visible directly:
//!
//!   cargo bench -p ratpc-core

use criterion::{criterion_group, criterion_main, Criterion};

use ratpc_core::algorithms::AlgorithmId;
use ratpc_core::analysis::{envelope_sweep, SweepGrid};
use ratpc_core::energy::builtin_profiles;
use ratpc_core::sim::{run_batch, ScenarioConfig};

fn single_thread_pool() -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()
}

fn bench_envelope(c: &mut Criterion) {
    let grid = SweepGrid::default_snr();
    let single = single_thread_pool();
    let mut group = c.benchmark_group("envelope_sweep");
    group.sample_size(20);
    group.bench_function("one_thread", |b| {
        b.iter(|| single.install(|| envelope_sweep(&grid)))
    });
    group.bench_function("all_threads", |b| b.iter(|| envelope_sweep(&grid)));
    group.finish();
}

fn bench_sim_batch(c: &mut Criterion) {
    let base = ScenarioConfig {
        start_distance_m: Some(12.0),
        end_distance_m: 4.0,
        speed_mps: 2.0,
        ..ScenarioConfig::new(AlgorithmId::Parf)
    };
    let seeds: Vec<u64> = (1..=4).collect();
    let profiles = builtin_profiles();
    let single = single_thread_pool();
    let mut group = c.benchmark_group("sim_batch");
    group.sample_size(10);
    group.bench_function("one_thread", |b| {
        b.iter(|| single.install(|| run_batch(&base, &AlgorithmId::ALL, &seeds, profiles).unwrap()))
    });
    group.bench_function("all_threads", |b| {
        b.iter(|| run_batch(&base, &AlgorithmId::ALL, &seeds, profiles).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_envelope, bench_sim_batch);
criterion_main!(benches);
