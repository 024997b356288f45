//! Forward and backward implementations of every layer primitive.
//!
//! All ops are pure functions over immutable inputs (dropout takes its
//! randomness as an explicit [`crate::RngState`]), so they are safe to call
//! from multiple threads and bit-deterministic given the same inputs.

mod activations;
mod batchnorm;
mod conv;
mod dense;
mod dropout;
mod gradcheck;
mod pool;

pub use activations::{relu, relu_backward, softmax};
pub use batchnorm::{batchnorm, batchnorm_backward, BatchNormCache, BnMode, RunningStats};
pub use conv::{conv2d, conv2d_backward, conv_output_geometry, Padding};
pub(crate) use conv::{conv_forward_batch, conv_input_grads_batch, conv_param_grads_batch};
pub use dense::{dense, dense_backward};
pub(crate) use dense::dense_sample_into;
pub use dropout::{dropout, dropout_backward, DropMode, DropoutMask};
pub use gradcheck::{finite_diff_check, l2_penalty, GradCheckReport};
pub use pool::{
    global_average_pool, global_average_pool_backward, maxpool2d, maxpool2d_backward, PoolIndices,
};
pub(crate) use pool::{gap_sample_into, maxpool_sample_into};
