use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use intersect_core::io::{generate_fixture, MarginalProfile};
use intersect_core::stats::{composition_test, dominance_test, EnsembleConfig, PerformancePoint};
use intersect_core::{metrics_for_roster, TraitSchema};

fn roster_metrics(c: &mut Criterion) {
    let mut group = c.benchmark_group("metrics_for_roster");
    for cards in [vec![2, 6], vec![3, 4, 5], vec![2, 5, 6, 8]] {
        let schema = TraitSchema::from_cardinalities(&cards).unwrap();
        let roster = generate_fixture(&schema, 200, 10, &MarginalProfile::uniform(&schema), 1).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(format!("{cards:?}")), &roster, |b, r| {
            b.iter(|| metrics_for_roster(black_box(r), None).unwrap())
        });
    }
    group.finish();
}

fn randomization_tests(c: &mut Criterion) {
    let schema = TraitSchema::from_cardinalities(&[2, 3, 4]).unwrap();
    let roster = generate_fixture(&schema, 40, 8, &MarginalProfile::uniform(&schema), 2).unwrap();
    let pool = roster.unique_individuals();
    let cfg = EnsembleConfig { n_ensembles: 200, teams_per_ensemble: 40, team_size: 8, seed: 3 };
    c.bench_function("composition_test/200x40x8", |b| b.iter(|| composition_test(&roster, &pool, &cfg, 0.1).unwrap()));

    let points: Vec<PerformancePoint> = metrics_for_roster(&roster, None)
        .unwrap()
        .into_iter()
        .enumerate()
        .map(|(i, m)| PerformancePoint { id: m.group_id, d: m.d, s: m.s, performance: (i as f64 * 0.37).sin() })
        .collect();
    c.bench_function("dominance_test/40x1000", |b| b.iter(|| dominance_test(&points, 1000, 4, false).unwrap()));
}

criterion_group!(benches, roster_metrics, randomization_tests);
criterion_main!(benches);
