//! Benchmark-only crate; see `benches/simulate.rs`.
