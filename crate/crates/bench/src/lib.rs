//! Criterion benchmarks for the steady-state pipeline; see `benches/`.
