use std::hint::black_box;

use aladin_bench::{chain_qp, saddle_matrix};
use aladin_core::ldlt::{LdltFactorization, Ordering};
use aladin_core::solver::{init, iterate, solve, SolverConfig};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

fn spmv(c: &mut Criterion) {
    let qp = chain_qp(50, 100).unwrap();
    let x = vec![1.0; qp.ny()];
    let l = vec![1.0; qp.nz()];
    let mut out = vec![0.0; qp.nz()];
    let mut out_t = vec![0.0; qp.ny()];
    c.bench_function("spmv E chain 50x100", |b| b.iter(|| qp.e().mul_vec_into(black_box(&x), &mut out)));
    c.bench_function("spmv Et chain 50x100", |b| b.iter(|| qp.e().mul_t_vec_into(black_box(&l), &mut out_t)));
}

fn ldlt(c: &mut Criterion) {
    let qp = chain_qp(10, 40).unwrap();
    let (m, signs) = saddle_matrix(&qp, 1e-8, 1e-2).unwrap();
    let f = LdltFactorization::with_signs(&m, Ordering::Amd, &signs).unwrap();
    let rhs = vec![1.0; m.nrows()];
    c.bench_function("ldlt analyze+factor amd", |b| {
        b.iter(|| LdltFactorization::with_signs(black_box(&m), Ordering::Amd, &signs).unwrap())
    });
    c.bench_function("ldlt refactor", |b| b.iter(|| f.refactor(black_box(&m)).unwrap()));
    c.bench_function("ldlt solve", |b| b.iter(|| f.solve(black_box(&rhs)).unwrap()));
}

fn solver(c: &mut Criterion) {
    let qp = chain_qp(10, 40).unwrap();
    let cfg = SolverConfig { tol: 1e-6, ..SolverConfig::default() };
    c.bench_function("one iteration chain 10x40", |b| {
        b.iter_batched(
            || init(&qp, &cfg, None).unwrap(),
            |mut s| iterate(&mut s, &qp, &cfg),
            BatchSize::LargeInput,
        )
    });
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    group.bench_function("chain 10x40", |b| b.iter(|| solve(black_box(&qp), &cfg, None).unwrap()));
    group.finish();
}

criterion_group!(benches, spmv, ldlt, solver);
criterion_main!(benches);
