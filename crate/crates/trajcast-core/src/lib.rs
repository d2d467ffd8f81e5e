//! Nowcasting of same-timestamp laboratory event groups within a single
//! hospital visit, built around a time-aware transformer encoder.
//!
//! The crate is self-contained and desk-scale: a small dense-tensor type
//! with reverse-mode automatic differentiation, a visit-trajectory data
//! model, timestamp embeddings with decay and periodic components, a
//! transformer whose attention logits pass through a learned denoising
//! gate, a multi-label prediction head, an Adam training loop, and the
//! evaluation metric suite. Everything is `f64` and deterministic given a
//! seed.
//!
//! The crate is `no_std`-compatible (requires `alloc`); the `std` feature
//! (default) is only forwarded convenience, file formats and the CLI live
//! in the companion crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod ablation;
pub mod data;
pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod head;
pub mod metrics;
pub mod model;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod transformer;

pub use error::Error;
pub use tensor::{Tape, Tensor, Var};
