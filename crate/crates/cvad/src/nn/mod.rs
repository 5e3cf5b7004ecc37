//! Layer kernels, parameter containers and the optimizer.
//!
//! Every kernel is a pure function of its explicit inputs and exposes a
//! matching backward pass; gradients are validated against central finite
//! differences at 64-bit precision in the test suites.

mod activation;
mod adam;
mod batchnorm;
mod conv;
mod gemm;
mod init;
mod linear;
mod params;
mod pool;

pub use activation::{leaky_relu, leaky_relu_backward, sigmoid, sigmoid_scalar, LEAKY_SLOPE};
pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use batchnorm::{
    batch_norm_backward, batch_norm_eval, batch_norm_train, BnCache, BnGrads, Mode, BN_EPS,
    BN_MOMENTUM,
};
pub use conv::{
    conv_down_backward, conv_down_forward, conv_up_backward, conv_up_forward, ConvGrads, ConvSpec,
};
pub use init::{conv_fan_in, conv_transposed_fan_in, he_normal};
pub use linear::{linear_backward, linear_forward, LinearGrads};
pub use params::ParamSet;
pub use pool::{avg_pool2, avg_pool2_backward};
