//! Deterministic `f32` tensor runtime: layer forward passes, fake
//! quantization, weight storage and a small SGD trainer for dense networks.

mod forward;
pub mod kernels;
mod quant;
#[allow(clippy::module_inception)]
mod tensor;
mod train;
mod weights;

pub use forward::{forward, forward_chain};
pub use quant::{quantize, QFormat, RoundingMode, SUPPORTED_BITWIDTHS};
pub use tensor::Tensor;
pub use train::{train_toy, Objective, TrainParams};
pub use weights::WeightStore;
pub(crate) use weights::learnable_layers;
