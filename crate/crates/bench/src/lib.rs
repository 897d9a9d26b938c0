//! Benchmarks live in `benches/`; run them with `cargo bench -p emcomm-bench`.

pub use emcomm::{Error, Result, Tensor};
