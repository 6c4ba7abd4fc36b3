//! Benchmarks live in `benches/`; run them with `cargo bench -p huddle-bench`.
