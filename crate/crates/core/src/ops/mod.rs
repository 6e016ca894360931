//! Forward and backward kernels for the layer types of the grouped network.
//!
//! Forward functions are pure. The `*_cached` variants additionally fill a
//! per-call context that the matching backward function consumes.

mod activation;
mod conv;
mod linear;
mod lrn;
mod pool;
mod sgd;

pub use activation::{cross_entropy_loss, relu_backward, relu_forward, relu_forward_inplace, softmax, LOG_EPS};
pub use conv::{conv2d_backward, conv2d_forward, conv2d_forward_cached, ConvCtx, ConvGrads, ConvSpec};
pub(crate) use linear::linear_prefix;
pub use linear::{fc_backward, fc_forward, FcGrads};
pub use lrn::{lrn_backward, lrn_forward, lrn_forward_cached, LrnCtx, LrnSpec};
pub use pool::{maxpool_backward, maxpool_forward, maxpool_forward_cached, PoolCtx, PoolSpec};
pub use sgd::{sgd_step, GradBuffer};
