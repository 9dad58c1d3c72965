//! Layer primitives with hand-written forward and backward passes.

pub mod activation;
pub mod conv;
pub mod dense;
pub mod gemm;
pub mod loss;
pub mod lrn;
pub mod pool;

pub use activation::{dropout, dropout_backward, relu, relu_backward, DropoutMask, Mode};
pub use conv::{conv2d, conv2d_backward, conv2d_backward_accumulate, ConvGeometry, ConvGrads};
pub use dense::{dense, dense_backward, dense_backward_accumulate, DenseGrads};
pub use loss::{softmax, softmax_cross_entropy, SoftmaxLoss};
pub use lrn::{lrn, lrn_backward, LrnSpec};
pub use pool::{maxpool, maxpool_backward, maxpool_with_argmax, pool_extent, PoolOutput};
