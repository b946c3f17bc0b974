//! Differentiable layer operations. Each forward call returns its output and
//! a [`LayerCache`]; the matching backward call consumes that cache.

mod activation;
mod concat;
mod conv;
mod dilate;
mod loss;

pub use activation::{relu, relu_backward};
pub use concat::{concat_channels, split_channels_backward};
pub use conv::{
    conv2d, conv2d_backward, conv_transpose2d, conv_transpose2d_backward,
    conv_transpose_output_dims, ConvGrads, ConvSpec,
};
pub use dilate::dilate_kernel;
pub use loss::mse_loss;

use crate::tensor::{Dims, Tensor};

/// State saved by a forward operation for its backward pass.
#[derive(Clone, Debug)]
pub struct LayerCache<T> {
    kind: CacheKind<T>,
}

#[derive(Clone, Debug)]
enum CacheKind<T> {
    Conv {
        input: Tensor<T>,
        weights: Tensor<T>,
        spec: ConvSpec,
        output_dims: Dims,
    },
    ConvTranspose {
        input: Tensor<T>,
        weights: Tensor<T>,
        stride: usize,
        has_bias: bool,
        output_dims: Dims,
    },
    Relu {
        active: Vec<bool>,
        dims: Dims,
    },
    Concat {
        channels: Vec<usize>,
        output_dims: Dims,
    },
}

impl<T> LayerCache<T> {
    fn new(kind: CacheKind<T>) -> Self {
        LayerCache { kind }
    }

    fn kind_name(&self) -> &'static str {
        match self.kind {
            CacheKind::Conv { .. } => "conv2d",
            CacheKind::ConvTranspose { .. } => "conv_transpose2d",
            CacheKind::Relu { .. } => "relu",
            CacheKind::Concat { .. } => "concat_channels",
        }
    }

    /// Dims of the forward output this cache belongs to.
    pub fn output_dims(&self) -> Dims {
        match &self.kind {
            CacheKind::Conv { output_dims, .. }
            | CacheKind::ConvTranspose { output_dims, .. }
            | CacheKind::Concat { output_dims, .. } => *output_dims,
            CacheKind::Relu { dims, .. } => *dims,
        }
    }
}
