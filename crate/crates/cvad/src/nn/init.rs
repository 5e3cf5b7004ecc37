//! Weight initialization: zero-mean normal with std sqrt(2 / fan_in) for
//! conv/linear weights, zero biases, identity batch-norm affines.

use crate::rng::Rng;
use crate::tensor::{Element, Tensor};

pub fn he_normal<T: Element>(rng: &mut Rng, shape: &[usize], fan_in: usize) -> Tensor<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = T::from_f64(rng.normal() * std);
    }
    t
}

/// fan_in of a forward conv: Cin * k * k taps feed one output unit.
pub fn conv_fan_in(in_channels: usize, kernel: usize) -> usize {
    in_channels * kernel * kernel
}

/// fan_in of a stride-2 transposed conv: each output unit receives
/// k*k / stride^2 taps per input channel.
pub fn conv_transposed_fan_in(in_channels: usize, kernel: usize, stride: usize) -> usize {
    in_channels * (kernel * kernel) / (stride * stride)
}
