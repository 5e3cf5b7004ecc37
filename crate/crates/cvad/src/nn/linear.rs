//! Fully connected layer, row-vector convention: y = x . W + b with
//! x (N x Din), W (Din x Dout), b (Dout).

use super::gemm::{gemm_nn, gemm_nt, gemm_tn};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

pub fn linear_forward<T: Element>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let [n, din] = x.dims2("linear")?;
    let [wd, dout] = weight.dims2("linear")?;
    if wd != din {
        return Err(Error::dim(
            "linear",
            format!("input width {din} vs weight rows {wd}"),
        ));
    }
    if bias.shape() != [dout] {
        return Err(Error::dim(
            "linear",
            format!("bias shape {:?}, expected [{dout}]", bias.shape()),
        ));
    }
    let mut y = Tensor::zeros(&[n, dout]);
    gemm_nn(n, din, dout, x.data(), weight.data(), y.data_mut());
    for row in y.data_mut().chunks_mut(dout) {
        for (v, &b) in row.iter_mut().zip(bias.data()) {
            *v += b;
        }
    }
    Ok(y)
}

pub struct LinearGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn linear_backward<T: Element>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<LinearGrads<T>> {
    let [n, din] = x.dims2("linear_backward")?;
    let [_, dout] = weight.dims2("linear_backward")?;
    let [gn, gd] = grad_out.dims2("linear_backward")?;
    if gn != n || gd != dout {
        return Err(Error::dim(
            "linear_backward",
            format!("grad shape {:?} vs output ({n}, {dout})", grad_out.shape()),
        ));
    }
    // dW = x^T . dy, dx = dy . W^T, db = column sums of dy
    let mut dw = Tensor::zeros(&[din, dout]);
    gemm_tn(din, n, dout, x.data(), grad_out.data(), dw.data_mut());
    let mut dx = Tensor::zeros(&[n, din]);
    gemm_nt(n, dout, din, grad_out.data(), weight.data(), dx.data_mut());
    let mut db = Tensor::zeros(&[dout]);
    for row in grad_out.data().chunks(dout) {
        for (b, &g) in db.data_mut().iter_mut().zip(row) {
            *b += g;
        }
    }
    Ok(LinearGrads {
        input: dx,
        weight: dw,
        bias: db,
    })
}
