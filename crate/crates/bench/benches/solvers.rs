use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use spikeopt::{
    assemble_nlp, feasible_range, find_limit_cycle, lgl_grid, solve_bounded, solve_direct,
    solve_extremal, ConductanceModel, NlpOptions, PhaseModel, PrcTable,
};

fn extremal(c: &mut Criterion) {
    let sin = PhaseModel::sinusoidal(1.0, 1.0).unwrap();
    let sniper = PhaseModel::sniper(1.0, 1.0).unwrap();
    let mut group = c.benchmark_group("extremal");
    for t in [4.0, 9.0] {
        group.bench_with_input(BenchmarkId::new("sinusoidal", t), &t, |b, &t| {
            b.iter(|| solve_extremal(&sin, black_box(t), true).unwrap())
        });
    }
    group.bench_function("sniper/8", |b| b.iter(|| solve_extremal(&sniper, black_box(8.0), true).unwrap()));
    group.finish();
}

fn bounded(c: &mut Criterion) {
    let sniper = PhaseModel::sniper(1.0, 1.0).unwrap();
    let mut group = c.benchmark_group("bounded");
    group.bench_function("range/sniper", |b| {
        b.iter(|| feasible_range(&sniper, black_box(0.4), true).unwrap())
    });
    for t in [5.2, 6.0, 8.2] {
        group.bench_with_input(BenchmarkId::new("sniper", t), &t, |b, &t| {
            b.iter(|| solve_bounded(&sniper, black_box(t), 0.4, true).unwrap())
        });
    }
    group.finish();
}

fn collocation(c: &mut Criterion) {
    let sin = PhaseModel::sinusoidal(1.0, 1.0).unwrap();
    let mut group = c.benchmark_group("collocation");
    group.sample_size(10).measurement_time(Duration::from_secs(20));
    for n in [50, 150] {
        group.bench_with_input(BenchmarkId::new("lgl_grid", n), &n, |b, &n| b.iter(|| lgl_grid(black_box(n)).unwrap()));
    }
    for n in [40, 80] {
        let grid = lgl_grid(n).unwrap();
        let problem = assemble_nlp(&sin, 4.7, 0.6, true, &grid).unwrap();
        group.bench_with_input(BenchmarkId::new("sinusoidal_bounded", n), &problem, |b, p| {
            b.iter(|| solve_direct(p, None, &NlpOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn conductance(c: &mut Criterion) {
    let ml = ConductanceModel::morris_lecar();
    let hh = ConductanceModel::hodgkin_huxley();
    let mut group = c.benchmark_group("conductance");
    group.sample_size(10).measurement_time(Duration::from_secs(20));
    group.bench_function("limit_cycle/ml", |b| b.iter(|| find_limit_cycle(black_box(&ml)).unwrap()));
    let cycle = find_limit_cycle(&hh).unwrap();
    group.bench_function("prc/hh_256", |b| {
        b.iter(|| spikeopt::compute_prc(&hh, black_box(&cycle), 256).unwrap())
    });
    let table: PrcTable = spikeopt::compute_prc(&hh, &cycle, 1024).unwrap();
    let model = PhaseModel::tabulated(&table).unwrap();
    group.bench_function("bounded/hh_16", |b| {
        b.iter(|| solve_bounded(&model, black_box(16.0), 1.0, true).unwrap())
    });
    group.finish();
}

criterion_group!(benches, extremal, bounded, collocation, conductance);
criterion_main!(benches);
