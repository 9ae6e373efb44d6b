//! Criterion benchmarks for the allocator live under `benches/`.
