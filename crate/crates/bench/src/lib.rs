//! Benchmarks for the convolution kernels, the wavelet transform and full
//! network passes. Run with `cargo bench -p sigclass-bench`.
