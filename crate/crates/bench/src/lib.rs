//! Criterion benchmarks for the synthesis engine live in `benches/`.
