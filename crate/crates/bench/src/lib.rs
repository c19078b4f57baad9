//! Criterion benchmarks for the hot paths: convolutions, the denoiser
//! forward/backward pass, sampling and DTW. Run with `cargo bench -p facediff-bench`.
