//! Criterion benchmarks for the groupnav kernels live in `benches/`.
