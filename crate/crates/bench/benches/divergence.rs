use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use trace_contam_bench::{edited, symbols};
use trace_contam_core::divergence::edit_cost;
use trace_contam_core::edit_distance;

fn alignment(c: &mut Criterion) {
    let mut g = c.benchmark_group("edit_distance");
    for n in [16, 64, 256, 1024] {
        let a = symbols(n, 12, 1);
        let b = edited(&a, 8, 2);
        g.throughput(Throughput::Elements((a.len() * b.len()) as u64));
        g.bench_with_input(BenchmarkId::new("alignment", n), &(&a, &b), |bench, (a, b)| {
            bench.iter(|| edit_distance(a, b).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("cost_only", n), &(&a, &b), |bench, (a, b)| {
            bench.iter(|| edit_cost(a, b))
        });
    }
    g.finish();
}

criterion_group!(benches, alignment);
criterion_main!(benches);
