//! Unequal-error-protection channel codes learned as structured
//! superposition autoencoders, plus the finite-blocklength bounds they are
//! benchmarked against.
//!
//! The crate has five parts:
//!
//! - [`nn`] — a minimal dense-network engine (layers, softmax, cross-entropy,
//!   exact backprop, Adam), generic over `f32`/`f64`.
//! - [`channel`] — AWGN simulation with explicit SNR-to-noise-variance
//!   accounting and reproducible, splittable RNG streams.
//! - [`codec`] — the structured encoder/decoder: per-subblock autoencoders
//!   whose codewords are superposed and decoded in two SIC-style stages, a
//!   weighted compound loss steering the reliability trade-off, the training
//!   loop, and a small monolithic baseline for short messages.
//! - [`bounds`] — closed-form converse and achievable error-probability
//!   regions at finite blocklength, with the underlying Gaussian special
//!   functions.
//! - [`eval`] — seeded Monte Carlo estimation of per-class block error
//!   probabilities with Wilson confidence intervals and a lambda sweep.
//!
//! The `uepae` binary exposes `bounds`, `train`, `eval`, and `sweep`
//! subcommands; the `examples/` directory has one runnable example per major
//! capability. See the README for the file formats.

pub mod bounds;
pub mod channel;
pub mod cli;
pub mod codec;
pub mod eval;
pub mod nn;

mod error;

pub use error::{Error, Result};

/// Caps the rayon worker pool from the `UEPAE_THREADS` environment variable.
///
/// No-op if the variable is unset, unparsable, or a global pool already
/// exists. Call once at process start.
pub fn configure_threads_from_env() {
    if let Ok(v) = std::env::var("UEPAE_THREADS") {
        if let Ok(threads) = v.trim().parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}
