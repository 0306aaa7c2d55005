use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use mre_bench::fixture;
use mre_core::inverse::{build_gamma, pg_inner_solve, tv_prox, GammaOperator, TvProxOptions};
use mre_core::{ElasticityField, Regularizer, SolverConfig};

fn assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("assembly");
    for n in [8, 16, 32] {
        let (ph, m) = fixture(n, 0.05);
        group.bench_with_input(BenchmarkId::new("stiffness", n), &n, |b, _| {
            b.iter(|| ph.model.stiffness(&ph.e_true).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("d_operator", n), &n, |b, _| {
            b.iter(|| ph.model.d_operator(&m.u_meas).unwrap())
        });
    }
    group.finish();
}

fn covariance(c: &mut Criterion) {
    let mut group = c.benchmark_group("gamma");
    group.sample_size(20);
    for n in [8, 16] {
        let (ph, m) = fixture(n, 0.05);
        let problem = ph.problem(&m).unwrap();
        group.bench_with_input(BenchmarkId::new("build_and_factor", n), &n, |b, _| {
            b.iter(|| {
                build_gamma(
                    &ph.model,
                    &ph.e_true,
                    problem.observed(),
                    &m.covariance,
                    GammaOperator::Full,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn inner_solve(c: &mut Criterion) {
    let (ph, m) = fixture(16, 0.05);
    let problem = ph.problem(&m).unwrap();
    let e0 = ElasticityField::uniform(problem.unknowns(), 0.2);
    let gamma = build_gamma(
        &ph.model,
        &e0,
        problem.observed(),
        &m.covariance,
        GammaOperator::Full,
    )
    .unwrap();
    let config = SolverConfig {
        max_inner: 50,
        ..SolverConfig::default()
    };
    let mut group = c.benchmark_group("inner");
    group.sample_size(10);
    group.bench_function("pg_50_steps_16x16", |b| {
        b.iter(|| {
            pg_inner_solve(
                e0.as_slice(),
                &gamma,
                &problem,
                &ph.graph,
                Regularizer::Tv,
                &config,
            )
            .unwrap()
        })
    });
    group.bench_function("tv_prox_16x16", |b| {
        let x: Vec<f64> = (0..problem.unknowns())
            .map(|i| 0.2 + 0.1 * (i as f64).sin())
            .collect();
        b.iter(|| tv_prox(&x, 0.01, &ph.graph, &TvProxOptions::default()))
    });
    group.finish();
}

criterion_group!(benches, assembly, covariance, inner_solve);
criterion_main!(benches);
