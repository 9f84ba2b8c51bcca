//! Multi-exit dropout Bayesian neural networks.
//!
//! The crate turns a plain feed-forward network into a multi-exit network
//! whose exits carry Monte-Carlo dropout or Masksembles layers, runs it with
//! trunk caching, scores it, explores algorithm/hardware design points and
//! emits an accelerator plan:
//!
//! * [`netspec`] — network descriptions and structural transforms
//! * [`tensor`] — `f32` runtime, fake quantization, toy trainer
//! * [`dropout`] — MCD and Masksembles layer semantics
//! * [`inference`] — cached multi-exit Monte-Carlo execution
//! * [`metrics`] — accuracy, ECE, predictive entropy, FLOP model
//! * [`mapping`] — spatial/temporal engine mapping and cost model
//! * [`explorer`] — grid search, constraints and ranking
//! * [`emitter`] — accelerator plan documents and reports

pub mod data;
pub mod dropout;
pub mod emitter;
mod error;
pub mod explorer;
pub mod inference;
pub mod mapping;
pub mod metrics;
pub mod netspec;
pub mod tensor;

pub use error::{Error, Result};
