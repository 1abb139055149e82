//! Criterion benchmarks for the procsight pipeline; see `benches/`.
