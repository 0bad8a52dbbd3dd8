use criterion::{criterion_group, criterion_main, Criterion};
use wasmct_bench::{load, run};

fn corpus(c: &mut Criterion) {
    let mut g = c.benchmark_group("explore");
    g.sample_size(10);
    for (file, inv) in [
        ("ct_select_mask.wat", false),
        ("naive_select.wat", false),
        ("ct_sort4_network.wat", false),
        ("leaky_memcmp.wat", false),
        ("lucky13.wat", true),
        ("lucky13_o0.wat", true),
    ] {
        let ast = load(file);
        let name = if inv { format!("{file}+inv") } else { file.to_string() };
        g.bench_function(name, |b| b.iter(|| run(&ast, inv)));
    }
    g.finish();
}

fn parse(c: &mut Criterion) {
    let src = std::fs::read_to_string(wasmct_bench::corpus_path("lucky13_o0.wat")).unwrap();
    c.bench_function("parse lucky13_o0", |b| b.iter(|| wasmct_core::wat::parse_module(&src).unwrap()));
}

criterion_group!(benches, corpus, parse);
criterion_main!(benches);
