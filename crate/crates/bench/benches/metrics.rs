use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mcdsvdd::auroc;
use mcdsvdd::eval::welch_p_value;
use mcdsvdd_bench::scored_set;

fn bench_auroc(c: &mut Criterion) {
    let mut group = c.benchmark_group("auroc");
    for n in [500, 10_000, 100_000] {
        let (scores, labels) = scored_set(n, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| auroc(&scores, &labels).unwrap())
        });
    }
    group.finish();
}

fn bench_welch(c: &mut Criterion) {
    let a = [0.686, 0.71, 0.65, 0.73, 0.66];
    let b = [0.736, 0.75, 0.72, 0.76, 0.71];
    c.bench_function("welch_p_value", |bench| bench.iter(|| welch_p_value(&a, &b).unwrap()));
}

criterion_group!(benches, bench_auroc, bench_welch);
criterion_main!(benches);
