//! Criterion benchmarks for intersect-core; see `benches/`.
