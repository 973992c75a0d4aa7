use criterion::{criterion_group, criterion_main, Criterion};
use ucbench_core::carleman::{CarlemanProbe, TestFamily};
use ucbench_core::continuation::{CauchyData, CauchyProblem};
use ucbench_core::{BaseWeight, CarlemanParams, CoefficientSet, GridField, MetricField, PolarGrid};

fn weight_field(c: &mut Criterion) {
    let grid = PolarGrid::new(1.0, 2.0, 65, 128).unwrap();
    let psi = BaseWeight::quadratic(1.0);
    c.bench_function("weight_sample_65x128", |b| b.iter(|| psi.sample(&grid)));
}

fn carleman_cell(c: &mut Criterion) {
    let grid = PolarGrid::new(1.0, 2.0, 33, 64).unwrap();
    let family = TestFamily::band_limited(&grid, 42, 20, 6, 6).unwrap();
    let probe = CarlemanProbe::new(
        &grid,
        &family,
        &MetricField::anisotropic(),
        &CoefficientSet::preset("complex-drift").unwrap(),
        &BaseWeight::quadratic(1.0),
    )
    .unwrap();
    let params = CarlemanParams::new(2.0, 16.0).unwrap();
    c.bench_function("carleman_cell_33x64_20_members", |b| b.iter(|| probe.cell(params).unwrap()));
}

fn cauchy_solve(c: &mut Criterion) {
    let grid = PolarGrid::new(1.0, 2.0, 17, 32).unwrap();
    let g = MetricField::identity();
    let u = GridField::from_real_fn(&grid, "u", |x| x[0] * x[0] - x[1] * x[1]);
    let data = CauchyData::from_field(&grid, &u, &g, 1e-3, 42).unwrap();
    let mut group = c.benchmark_group("cauchy_17x32");
    group.sample_size(10);
    group.bench_function("assemble", |b| b.iter(|| CauchyProblem::new(&grid, &g, &CoefficientSet::zero()).unwrap()));
    let problem = CauchyProblem::new(&grid, &g, &CoefficientSet::zero()).unwrap();
    group.bench_function("solve", |b| b.iter(|| problem.solve(&data, 1e-6).unwrap()));
    group.finish();
}

criterion_group!(benches, weight_field, carleman_cell, cauchy_solve);
criterion_main!(benches);
