use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use percond_core::transmission::TransmissionSolver;
use percond_core::*;

fn solver(n: usize) -> TransmissionSolver {
    let data = ProblemData::homogeneous(2.0, 1.0, RhoLaw::Power { c: 1.0, a: 1.0 }).unwrap();
    TransmissionSolver::new(make_ellipse(1.0, 1.0, n).unwrap(), GreensEvaluator::new(PeriodicCell::unit()), data)
        .unwrap()
}

fn ewald(c: &mut Criterion) {
    let ev = GreensEvaluator::new(PeriodicCell::new(1.0, 1.5).unwrap());
    c.bench_function("eval_sqn", |b| b.iter(|| ev.eval_sqn(black_box([0.31, 0.47])).unwrap()));
    c.bench_function("grad_sqn", |b| b.iter(|| ev.grad_sqn(black_box([0.31, 0.47])).unwrap()));
    c.bench_function("eval_rqn", |b| b.iter(|| ev.eval_rqn(black_box([0.031, 0.047])).unwrap()));
}

fn assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("assemble_m");
    group.sample_size(10);
    for n in [64, 128, 256] {
        let s = solver(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &s, |b, s| {
            b.iter(|| s.assemble_m(black_box(0.1), 1.0, 0).unwrap())
        });
    }
    group.finish();
}

fn limiting(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_limiting");
    group.sample_size(10);
    for n in [64, 128, 256] {
        let s = solver(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &s, |b, s| b.iter(|| s.solve_limiting(0).unwrap()));
    }
    group.finish();
}

fn effective(c: &mut Criterion) {
    let mut group = c.benchmark_group("lambda_eff");
    group.sample_size(10);
    let s = solver(128);
    group.bench_function("N=128", |b| b.iter(|| lambda_eff(&s, [0.5, 0.5], black_box(0.1)).unwrap()));
    group.finish();
}

criterion_group!(benches, ewald, assembly, limiting, effective);
criterion_main!(benches);
