//! Forward and backward kernels for every layer the networks use.
//!
//! Each kernel is a pure function of its inputs; [`crate::tape`] strings
//! them together for reverse-mode differentiation.

mod conv;
mod dense;
mod loss;
mod norm;
mod pool;

pub use conv::{conv1d, conv1d_backward, conv2d, conv2d_backward, ConvGrads};
pub use dense::{
    add, concat_channels, concat_channels_backward, linear, linear_backward, relu, relu_backward,
};
pub use loss::{softmax, softmax_cross_entropy, softmax_cross_entropy_backward};
pub use norm::{batchnorm, batchnorm_backward, BnSaved, Mode, RunningStats, BN_EPS, BN_MOMENTUM};
pub use pool::{global_avg_pool, global_avg_pool_backward, maxpool1d, maxpool1d_backward};
