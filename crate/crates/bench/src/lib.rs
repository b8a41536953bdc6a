//! Criterion benchmarks for the `sbm` crate; see `benches/`.
