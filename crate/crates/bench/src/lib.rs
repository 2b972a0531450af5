//! Criterion benchmarks for the recovery pipeline; see `benches/`.
