use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use cvcal_bench::psd_problems;
use cvcal_core::lcp::DEFAULT_TOL;
use cvcal_core::market::{assemble_base, solve_system};
use cvcal_core::{fixtures, solve_mlcp};

fn small_lcps(c: &mut Criterion) {
    let mut group = c.benchmark_group("lemke_psd");
    for d in [2, 4, 6, 12] {
        let problems = psd_problems(d as u64, d, 32);
        group.bench_with_input(BenchmarkId::from_parameter(d), &problems, |b, problems| {
            b.iter(|| {
                for p in problems {
                    black_box(solve_mlcp(p, DEFAULT_TOL).unwrap());
                }
            })
        });
    }
    group.finish();
}

fn market_systems(c: &mut Criterion) {
    let mut group = c.benchmark_group("base_equilibrium");
    group.sample_size(10);
    let inst = fixtures::grid10(0);
    let sys = assemble_base(&inst.network, &inst.anchors, &inst.theta).unwrap();
    group.bench_function("grid10", |b| {
        b.iter(|| black_box(solve_system(&inst.network, &sys, DEFAULT_TOL).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, small_lcps, market_systems);
criterion_main!(benches);
