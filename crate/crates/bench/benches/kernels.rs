use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use helm_absorb_bench::{banded, desk_problem};
use helm_absorb_core::helmholtz::{assemble, solve_direct, CondensedOperator, HelmholtzSolver};
use helm_absorb_core::material::{enforce_minlen, project_hard, project_sigmoid};
use helm_absorb_core::{EnergyWeights, MasterPartition, MaterialDistribution};

fn solver(c: &mut Criterion) {
    let mut g = c.benchmark_group("solver");
    g.sample_size(10);
    let (mesh, data) = desk_problem(500.0);
    g.bench_function("assemble", |b| b.iter(|| assemble(black_box(&data), &mesh).unwrap()));
    g.bench_function("factorize_and_solve", |b| {
        b.iter(|| solve_direct(black_box(&data), &mesh).unwrap())
    });
    g.bench_function("direct_adjoint_pair", |b| {
        b.iter(|| {
            let s = HelmholtzSolver::new(&mesh, data.clone()).unwrap();
            let u = s.direct().unwrap();
            s.adjoint(&u, &EnergyWeights::default()).unwrap()
        })
    });
    g.finish();
}

fn condensed(c: &mut Criterion) {
    let mut g = c.benchmark_group("condensed");
    g.sample_size(10);
    let (mesh, data) = desk_problem(500.0);
    let op = CondensedOperator::build(&mesh, &data, EnergyWeights::default()).unwrap();
    let chi = banded(mesh.robin_count());
    g.bench_function("energy", |b| b.iter(|| op.evaluate(black_box(&chi), false).unwrap()));
    g.bench_function("energy_and_gradient", |b| {
        b.iter(|| op.evaluate(black_box(&chi), true).unwrap())
    });
    g.bench_function("build", |b| {
        b.iter(|| CondensedOperator::build(&mesh, black_box(&data), EnergyWeights::default()).unwrap())
    });
    g.finish();
}

fn projections(c: &mut Criterion) {
    let mut g = c.benchmark_group("projections");
    for m in [100usize, 400] {
        let part = MasterPartition::uniform(m, 1.0).unwrap();
        let raw: Vec<f64> = (0..m).map(|k| (k as f64 * 0.37).sin()).collect();
        g.bench_with_input(BenchmarkId::new("sigmoid", m), &raw, |b, raw| {
            b.iter(|| project_sigmoid(raw, &part, 0.5).unwrap())
        });
        let relaxed = project_sigmoid(&raw, &part, 0.5).unwrap();
        g.bench_with_input(BenchmarkId::new("hard", m), &relaxed, |b, r| {
            b.iter(|| project_hard(r, 0.5).unwrap())
        });
        let hard = MaterialDistribution::new(
            (0..m).map(|k| if k % 3 == 0 { 0.0 } else { 1.0 }).collect(),
            part.clone(),
            2.0 / 3.0,
        )
        .unwrap();
        g.bench_with_input(BenchmarkId::new("enforce_minlen", m), &hard, |b, h| {
            b.iter(|| enforce_minlen(h, relaxed.values(), 0.1).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, solver, condensed, projections);
criterion_main!(benches);
