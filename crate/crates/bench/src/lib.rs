//! Criterion benchmarks for opscale-core; see `benches/`.
