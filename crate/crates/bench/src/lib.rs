//! Benchmark-only crate; see `benches/control_loop.rs`.
