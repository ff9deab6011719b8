//! Minimal CNN engine: NHWC tensors, the layer kinds used by the model zoo,
//! softmax cross-entropy, plain SGD and binary checkpoints.
//!
//! Kernels are generic over [`Scalar`] so the same code runs in `f64` for
//! gradient checks and `f32` in production.

mod checkpoint;
mod graph;
pub mod kernels;
mod layer;
mod loss;
mod ops;
mod sgd;
mod tensor;

use std::fmt::Debug;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_with, save_checkpoint,
    save_checkpoint_with, CheckpointHeader, TensorEntry, FORMAT_VERSION, MAGIC,
};
pub use graph::{ModelGraph, ParamSlot};
pub use kernels::Shape;
pub use layer::{LayerSpec, Padding};
pub use loss::softmax_cross_entropy;
pub use ops::{
    conv2d_forward, depthwise_conv2d_forward, inverted_residual_forward, layer_backward,
    layer_forward, layer_output_shape, layer_param_count,
};
pub use sgd::{sgd_step, Sgd, SgdConfig};
pub use tensor::{images_to_batch, Tensor};

/// Floating-point element type of tensors and parameters.
pub trait Scalar:
    num_traits::Float + num_traits::NumAssign + Send + Sync + Debug + Default + 'static
{
    fn of(v: f64) -> Self;
}

impl Scalar for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
}
