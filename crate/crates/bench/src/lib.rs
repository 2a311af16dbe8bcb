//! Criterion benchmarks for the pipeline stages; see `benches/pipeline.rs`.
//! Run with `cargo bench -p multipose-bench`.
