//! Criterion benchmarks for graphflow kernels live under `benches/`.
