//! Benchmarks live in `benches/kernels.rs`; run them with `cargo bench -p hermann-bench`.
