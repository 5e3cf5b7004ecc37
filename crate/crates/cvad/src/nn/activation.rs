//! Elementwise activations.

use rayon::prelude::*;

use crate::tensor::{Element, Tensor};

const PAR_CHUNK: usize = 1 << 14;

pub const LEAKY_SLOPE: f64 = 0.2;

/// x if x >= 0 else slope * x.
pub fn leaky_relu<T: Element>(x: &Tensor<T>, slope: f64) -> Tensor<T> {
    let s = T::from_f64(slope);
    let mut y = Tensor::zeros(x.shape());
    y.data_mut()
        .par_chunks_mut(PAR_CHUNK)
        .zip(x.data().par_chunks(PAR_CHUNK))
        .for_each(|(dst, src)| {
            for (d, &v) in dst.iter_mut().zip(src) {
                *d = if v >= T::ZERO { v } else { s * v };
            }
        });
    y
}

/// Chain-rule factor of [`leaky_relu`] given the forward input.
pub fn leaky_relu_backward<T: Element>(
    x: &Tensor<T>,
    slope: f64,
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    assert_eq!(
        x.shape(),
        grad_out.shape(),
        "leaky_relu_backward shape mismatch"
    );
    let s = T::from_f64(slope);
    let mut dx = Tensor::zeros(x.shape());
    dx.data_mut()
        .par_chunks_mut(PAR_CHUNK)
        .zip(
            x.data()
                .par_chunks(PAR_CHUNK)
                .zip(grad_out.data().par_chunks(PAR_CHUNK)),
        )
        .for_each(|(dst, (xs, gs))| {
            for ((d, &xv), &gv) in dst.iter_mut().zip(xs).zip(gs) {
                *d = if xv >= T::ZERO { gv } else { s * gv };
            }
        });
    dx
}

/// Numerically stable logistic function, clamped into the open interval (0, 1).
pub fn sigmoid_scalar<T: Element>(x: T) -> T {
    let y = if x >= T::ZERO {
        T::ONE / (T::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::ONE + e)
    };
    y.maximum(T::tiny()).minimum(T::below_one())
}

pub fn sigmoid<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}
