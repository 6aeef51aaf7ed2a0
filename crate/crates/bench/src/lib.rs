//! Criterion benchmarks for `fairreg`; see `benches/solvers.rs`.
