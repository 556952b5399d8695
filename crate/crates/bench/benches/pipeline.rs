use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use contagion_bench::{fixture, sir_params, trajectory};
use contagion_core::docvec::similarity_matrix;
use contagion_core::realization::{run_ensemble, RealizationConfig};
use contagion_core::sirmodel::{integrate, ForceMode, SirParams};

fn similarity(c: &mut Criterion) {
    let mut group = c.benchmark_group("similarity_matrix");
    for n in [100, 400] {
        let f = fixture(4, n / 4);
        group.bench_with_input(BenchmarkId::from_parameter(n), &f, |b, f| {
            b.iter(|| similarity_matrix(black_box(&f.docs), &f.articles).unwrap())
        });
    }
    group.finish();
}

fn sir(c: &mut Criterion) {
    let mut group = c.benchmark_group("integrate");
    group.sample_size(20);
    let f = fixture(4, 100);
    for (name, force) in [("dense", ForceMode::Dense), ("blocked", ForceMode::Blocked)] {
        let params = SirParams {
            force,
            ..sir_params(&f, 0.05, 10.0)
        };
        group.bench_function(name, |b| {
            b.iter(|| integrate(black_box(&params), &f.adjacency).unwrap())
        });
    }
    group.finish();
}

fn ensemble(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_ensemble");
    group.sample_size(10);
    let f = fixture(4, 50);
    let traj = trajectory(&f, 0.05, 30.0);
    let config = RealizationConfig::default();
    for runs in [100, 1000] {
        group.bench_with_input(BenchmarkId::from_parameter(runs), &runs, |b, &runs| {
            b.iter(|| run_ensemble(&traj, &config, runs, 1).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, similarity, sir, ensemble);
criterion_main!(benches);
