//! Core algorithms for vector scene sketches.
//!
//! Everything here is pure computation over in-memory values and builds
//! without `std` (only `alloc` is required). File formats, configuration
//! and the command-line surface live in the companion `scenesketch` crate.
//!
//! Module map:
//!
//! - [`sketch`]: the vector sketch data model, the stroke-5 codec,
//!   normalization and descriptive statistics.
//! - [`geometry`]: RDP simplification, stroke lengths, rasterization.
//! - [`tensor`]: dense `f64` tensors, a reverse-mode tape, optimizers and
//!   gradient checking.
//! - [`nn`]: linear and LSTM layers built on the tape.
//! - [`encoder`]: the convolutional raster encoder with global max pooling.
//! - [`hdecoder`]: the two-level (stroke / point) LSTM decoder, its
//!   teacher-forced loss, sampling and the pretext training loop.
//! - [`retrieval`]: triplet training, ranking, R@K and the per-user split.
//! - [`analysis`]: coarse-to-fine curves and stroke masking.
//! - [`synth`]: deterministic synthetic sketch/photo pairs.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod encoder;
pub mod geometry;
pub mod hdecoder;
mod math;
pub mod nn;
pub mod retrieval;
pub mod rng;
pub mod sketch;
pub mod synth;
pub mod tensor;

pub use geometry::RasterSketch;
pub use rng::Rng;
pub use sketch::{PenState, Point5, Stroke, Stroke5Sequence, VectorSketch};
pub use tensor::{ParamStore, Tape, Tensor, TensorError, Var};
