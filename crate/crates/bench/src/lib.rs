//! Criterion benchmarks for `rbal`; see `benches/`.
