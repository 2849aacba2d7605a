use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pc_bench::{ksat_config, ksat_fixture, nk_config, nk_fixture};
use pc_core::mixture::solve_mixture;
use pc_core::updaters::{brouwer_sweep, solve, UpdateSchedule};
use pc_core::{Objective, ProductDistribution};
use std::hint::black_box;

fn sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("brouwer_sweep");
    for n in [50, 200] {
        let obj = ksat_fixture(n, 1);
        let q = ProductDistribution::uniform(obj.arities()).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| brouwer_sweep(&obj, black_box(&q), 0.1))
        });
    }
    group.finish();
}

fn ksat_solve(c: &mut Criterion) {
    let obj = ksat_fixture(50, 2);
    let config = ksat_config(1.5e-3, 5000);
    let schedule = UpdateSchedule::default();
    c.bench_function("ksat_product_n50", |b| {
        b.iter(|| solve(&obj, &config, &schedule).unwrap())
    });
}

fn mixture(c: &mut Criterion) {
    let mut group = c.benchmark_group("mixture");
    group.sample_size(10);
    let obj = nk_fixture(30, 2, 3);
    let config = nk_config(200);
    for m in [2, 5] {
        group.bench_with_input(BenchmarkId::new("nk30_200_inner", m), &m, |b, &m| {
            b.iter(|| solve_mixture(&obj, m, &config).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sweep, ksat_solve, mixture);
criterion_main!(benches);
