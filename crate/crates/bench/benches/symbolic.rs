use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use wasmct_bench::{add_chain, product_query};
use wasmct_core::solver::solve_builtin;
use wasmct_core::symexpr::{simplify, ExprCache, ExprPool};

fn simplifier(c: &mut Criterion) {
    let mut g = c.benchmark_group("simplify");
    for depth in [16, 256] {
        g.bench_function(format!("add chain {depth}"), |b| {
            b.iter_batched(
                || {
                    let mut pool = ExprPool::new();
                    let e = add_chain(&mut pool, depth);
                    (pool, e)
                },
                |(mut pool, e)| simplify(&mut pool, &mut ExprCache::new(), e),
                BatchSize::SmallInput,
            )
        });
    }
    g.finish();
}

fn bitblast(c: &mut Criterion) {
    let mut g = c.benchmark_group("bitblast");
    g.sample_size(10);
    for width in [8, 16] {
        let q = product_query(width);
        g.bench_function(format!("product {width}"), |b| b.iter(|| solve_builtin(&q)));
    }
    g.finish();
}

criterion_group!(benches, simplifier, bitblast);
criterion_main!(benches);
