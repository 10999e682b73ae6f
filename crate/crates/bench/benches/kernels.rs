use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use wfduality_core::bcre::RateTable;
use wfduality_core::model::{negative_binomial_pmf, TablePmf, TableRow};
use wfduality_core::thresholds::{alpha_star, beta_star};
use wfduality_core::{FiniteMeasure, LimitParams, SelectionKernel, Streams};

fn ac1() -> LimitParams {
    LimitParams::new(
        SelectionKernel::Geometric,
        FiniteMeasure::dirac(0.5, 0.5).unwrap(),
        0.1,
        FiniteMeasure::dirac(0.5, 1.0).unwrap(),
        1.0,
        0.0,
    )
    .unwrap()
}

fn pgf(c: &mut Criterion) {
    let table = SelectionKernel::Table(
        TablePmf::new(vec![
            TableRow { y: 0.5, pmf: vec![0.0, 0.5, 0.3, 0.2], infinite: 0.0 },
            TableRow { y: 1.0, pmf: vec![0.0, 0.2, 0.2, 0.1], infinite: 0.5 },
        ])
        .unwrap(),
    );
    let mut group = c.benchmark_group("pgf");
    for kernel in [SelectionKernel::Geometric, SelectionKernel::Binary, table] {
        group.bench_function(kernel.name(), |b| b.iter(|| kernel.pgf(black_box(0.3), black_box(0.7))));
    }
    group.finish();
}

fn sampling(c: &mut Criterion) {
    let mut rng = Streams::new(1).rng(0);
    let k = SelectionKernel::Geometric;
    c.bench_function("geometric_sample", |b| b.iter(|| k.sample(black_box(0.5), &mut rng)));
    c.bench_function("geometric_sample_at_least_two", |b| b.iter(|| k.sample_at_least_two(black_box(0.5), &mut rng)));
}

fn sums(c: &mut Criterion) {
    let mut group = c.benchmark_group("negative_binomial_pmf");
    for n in [10u64, 100, 1000] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| b.iter(|| negative_binomial_pmf(n, 0.5, 4096)));
    }
    group.finish();
}

fn rate_tables(c: &mut Criterion) {
    let params = ac1();
    let mut group = c.benchmark_group("rate_table_adaptive");
    for n in [2u64, 32, 256] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| RateTable::adaptive(&params, n, 1e-9).unwrap())
        });
    }
    group.finish();
}

fn thresholds(c: &mut Criterion) {
    use wfduality_core::model::DensityLaw;
    let density = FiniteMeasure::density(DensityLaw::Beta { a: 3.0, b: 1.0 }, 1.0, 256).unwrap();
    c.bench_function("beta_star_density_256", |b| b.iter(|| beta_star(black_box(&density)).unwrap()));
    c.bench_function("alpha_star_density_256", |b| {
        b.iter(|| alpha_star(&SelectionKernel::Binary, black_box(&density)).unwrap())
    });
}

criterion_group!(benches, pgf, sampling, sums, rate_tables, thresholds);
criterion_main!(benches);
