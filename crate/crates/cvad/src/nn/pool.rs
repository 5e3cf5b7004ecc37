//! 2x2 stride-2 average pooling, used to reconcile the encoder/decoder
//! feature taps before they are concatenated.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// (N, C, H, W) -> (N, C, H/2, W/2), mean over each 2x2 block.
pub fn avg_pool2<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.dims4("avg_pool2")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::dim(
            "avg_pool2",
            format!("spatial axes must be even, got {h}x{w}"),
        ));
    }
    let (ho, wo) = (h / 2, w / 2);
    let quarter = T::from_f64(0.25);
    let mut y = Tensor::zeros(&[n, c, ho, wo]);
    for plane in 0..n * c {
        let src = &x.data()[plane * h * w..(plane + 1) * h * w];
        let dst = &mut y.data_mut()[plane * ho * wo..(plane + 1) * ho * wo];
        for oh in 0..ho {
            let top = &src[(2 * oh) * w..(2 * oh + 1) * w];
            let bot = &src[(2 * oh + 1) * w..(2 * oh + 2) * w];
            for ow in 0..wo {
                dst[oh * wo + ow] =
                    (top[2 * ow] + top[2 * ow + 1] + bot[2 * ow] + bot[2 * ow + 1]) * quarter;
            }
        }
    }
    Ok(y)
}

/// Distribute each output gradient equally over its 2x2 source block.
pub fn avg_pool2_backward<T: Element>(input_shape: &[usize], grad_out: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (input_shape[2], input_shape[3]);
    let [n, c, ho, wo] = grad_out.dims4("avg_pool2_backward").expect("rank-4 grad");
    assert_eq!(ho, h / 2, "avg_pool2_backward height mismatch");
    let quarter = T::from_f64(0.25);
    let mut dx = Tensor::zeros(&[n, c, h, w]);
    for plane in 0..n * c {
        let src = &grad_out.data()[plane * ho * wo..(plane + 1) * ho * wo];
        let dst = &mut dx.data_mut()[plane * h * w..(plane + 1) * h * w];
        for oh in 0..ho {
            for ow in 0..wo {
                let g = src[oh * wo + ow] * quarter;
                dst[(2 * oh) * w + 2 * ow] = g;
                dst[(2 * oh) * w + 2 * ow + 1] = g;
                dst[(2 * oh + 1) * w + 2 * ow] = g;
                dst[(2 * oh + 1) * w + 2 * ow + 1] = g;
            }
        }
    }
    dx
}
