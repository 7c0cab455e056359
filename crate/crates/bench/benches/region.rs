use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use intersect_core::attainable::{max_norm_by_ascent, max_norm_by_vertices};
use intersect_core::{attainable_region, sweep, TraitSchema};

fn q5(c: &mut Criterion) {
    let mut group = c.benchmark_group("q5");
    for (v1, v2) in [(2, 6), (3, 6), (4, 4)] {
        group.bench_function(BenchmarkId::new("vertices", format!("{v1}x{v2}")), |b| {
            b.iter(|| max_norm_by_vertices(black_box(v1), black_box(v2)).unwrap())
        });
    }
    group.bench_function(BenchmarkId::new("ascent", "5x6"), |b| b.iter(|| max_norm_by_ascent(5, 6, 50, 0)));
    group.bench_function("attainable_region/3x6", |b| b.iter(|| attainable_region(black_box(3), black_box(6)).unwrap()));
    group.finish();
}

fn boundary_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    for cards in [[2, 6], [3, 6]] {
        let schema = TraitSchema::from_cardinalities(&cards).unwrap();
        group.bench_function(BenchmarkId::from_parameter(format!("{}x{}/grid21", cards[0], cards[1])), |b| {
            b.iter(|| sweep(&schema, 21, 10, 0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, q5, boundary_sweep);
criterion_main!(benches);
