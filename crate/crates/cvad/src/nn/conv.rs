//! Strided convolution and transposed convolution with the fixed
//! kernel-4 / stride-2 / padding-1 geometry used by every network here.
//!
//! Both directions are built from one im2col/col2im pair, which makes the
//! transposed convolution the exact adjoint of the forward convolution for a
//! shared weight tensor (`<conv_down(x), y> == <x, conv_up(y)>`).
//!
//! Two data layouts are used depending on stage geometry: wide spatial maps
//! keep patches as matrix columns (contiguous writes along the image), while
//! deep stages with only a handful of output positions store patches as rows
//! so the long channel-tap dimension is the vectorized inner loop.

use rayon::prelude::*;

use super::gemm::{gemm_nn, gemm_nt, gemm_tn};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Geometry and channel contract of one (possibly transposed) conv layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub transposed: bool,
}

impl ConvSpec {
    pub fn down(in_channels: usize, out_channels: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel: 4,
            stride: 2,
            padding: 1,
            transposed: false,
        }
    }

    pub fn up(in_channels: usize, out_channels: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel: 4,
            stride: 2,
            padding: 1,
            transposed: true,
        }
    }

    fn validate(&self, op: &'static str) -> Result<()> {
        if self.kernel != 4 || self.stride != 2 || self.padding != 1 {
            return Err(Error::dim(
                op,
                format!(
                    "unsupported geometry kernel={} stride={} padding={} (only 4/2/1)",
                    self.kernel, self.stride, self.padding
                ),
            ));
        }
        Ok(())
    }

    /// Expected weight shape: (Cout, Cin, k, k) forward, (Cin, Cout, k, k) transposed.
    pub fn weight_shape(&self) -> [usize; 4] {
        if self.transposed {
            [
                self.in_channels,
                self.out_channels,
                self.kernel,
                self.kernel,
            ]
        } else {
            [
                self.out_channels,
                self.in_channels,
                self.kernel,
                self.kernel,
            ]
        }
    }
}

/// Gradients of a conv layer with respect to its input, weights and bias.
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

// Fixed number of accumulation chunks in backward passes. Gradient partials
// are reduced in chunk order, so results do not depend on thread count.
const ACCUM_CHUNKS: usize = 8;

// Patch-major layout pays off once there are few output positions relative to
// the contraction length.
const PATCH_MAJOR_LIMIT: usize = 64;

fn check_weight<T: Element>(
    op: &'static str,
    spec: &ConvSpec,
    w: &Tensor<T>,
    b: &Tensor<T>,
) -> Result<()> {
    let expect = spec.weight_shape();
    if w.shape() != expect {
        return Err(Error::dim(
            op,
            format!("weight shape {:?}, spec requires {:?}", w.shape(), expect),
        ));
    }
    if b.shape() != [spec.out_channels] {
        return Err(Error::dim(
            op,
            format!(
                "bias shape {:?}, expected [{}]",
                b.shape(),
                spec.out_channels
            ),
        ));
    }
    Ok(())
}

struct Geometry {
    ci: usize,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
}

impl Geometry {
    fn ck(&self) -> usize {
        self.ci * self.kernel * self.kernel
    }

    fn patch(&self) -> usize {
        self.ho * self.wo
    }

    fn patch_major(&self) -> bool {
        self.patch() <= PATCH_MAJOR_LIMIT && self.patch() < self.ck()
    }
}

/// Gather input patches as a (Cin*k*k, Ho*Wo) column matrix.
fn im2col<T: Element>(x: &[T], g: &Geometry, col: &mut [T]) {
    let patch = g.patch();
    debug_assert_eq!(col.len(), g.ck() * patch);
    for c in 0..g.ci {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row =
                    &mut col[(c * g.kernel * g.kernel + ki * g.kernel + kj) * patch..][..patch];
                for oh in 0..g.ho {
                    let ih = (oh * g.stride + ki) as isize - g.padding as isize;
                    let dst = &mut row[oh * g.wo..(oh + 1) * g.wo];
                    if ih < 0 || ih >= g.h as isize {
                        for d in dst.iter_mut() {
                            *d = T::ZERO;
                        }
                        continue;
                    }
                    let src = &plane[ih as usize * g.w..(ih as usize + 1) * g.w];
                    for (ow, d) in dst.iter_mut().enumerate() {
                        let iw = (ow * g.stride + kj) as isize - g.padding as isize;
                        *d = if iw < 0 || iw >= g.w as isize {
                            T::ZERO
                        } else {
                            src[iw as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`].
fn col2im<T: Element>(col: &[T], g: &Geometry, x: &mut [T]) {
    let patch = g.patch();
    debug_assert_eq!(col.len(), g.ck() * patch);
    for c in 0..g.ci {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = &col[(c * g.kernel * g.kernel + ki * g.kernel + kj) * patch..][..patch];
                for oh in 0..g.ho {
                    let ih = (oh * g.stride + ki) as isize - g.padding as isize;
                    if ih < 0 || ih >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[ih as usize * g.w..(ih as usize + 1) * g.w];
                    let src = &row[oh * g.wo..(oh + 1) * g.wo];
                    for (ow, &s) in src.iter().enumerate() {
                        let iw = (ow * g.stride + kj) as isize - g.padding as isize;
                        if iw >= 0 && iw < g.w as isize {
                            dst[iw as usize] += s;
                        }
                    }
                }
            }
        }
    }
}

/// Patch-major gather: (Ho*Wo, Cin*k*k), taps contiguous per output position.
fn im2col_t<T: Element>(x: &[T], g: &Geometry, col: &mut [T]) {
    let ck = g.ck();
    debug_assert_eq!(col.len(), ck * g.patch());
    for oh in 0..g.ho {
        for ow in 0..g.wo {
            let row = &mut col[(oh * g.wo + ow) * ck..(oh * g.wo + ow + 1) * ck];
            let mut idx = 0;
            for c in 0..g.ci {
                let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
                for ki in 0..g.kernel {
                    let ih = (oh * g.stride + ki) as isize - g.padding as isize;
                    if ih < 0 || ih >= g.h as isize {
                        for d in &mut row[idx..idx + g.kernel] {
                            *d = T::ZERO;
                        }
                        idx += g.kernel;
                        continue;
                    }
                    let src = &plane[ih as usize * g.w..(ih as usize + 1) * g.w];
                    for kj in 0..g.kernel {
                        let iw = (ow * g.stride + kj) as isize - g.padding as isize;
                        row[idx] = if iw < 0 || iw >= g.w as isize {
                            T::ZERO
                        } else {
                            src[iw as usize]
                        };
                        idx += 1;
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col_t`].
fn col2im_t<T: Element>(col: &[T], g: &Geometry, x: &mut [T]) {
    let ck = g.ck();
    debug_assert_eq!(col.len(), ck * g.patch());
    for oh in 0..g.ho {
        for ow in 0..g.wo {
            let row = &col[(oh * g.wo + ow) * ck..(oh * g.wo + ow + 1) * ck];
            let mut idx = 0;
            for c in 0..g.ci {
                let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
                for ki in 0..g.kernel {
                    let ih = (oh * g.stride + ki) as isize - g.padding as isize;
                    if ih < 0 || ih >= g.h as isize {
                        idx += g.kernel;
                        continue;
                    }
                    let dst = &mut plane[ih as usize * g.w..(ih as usize + 1) * g.w];
                    for kj in 0..g.kernel {
                        let iw = (ow * g.stride + kj) as isize - g.padding as isize;
                        if iw >= 0 && iw < g.w as isize {
                            dst[iw as usize] += row[idx];
                        }
                        idx += 1;
                    }
                }
            }
        }
    }
}

/// Downsampling convolution: (N, Cin, H, W) -> (N, Cout, H/2, W/2).
pub fn conv_down_forward<T: Element>(
    x: &Tensor<T>,
    spec: &ConvSpec,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    spec.validate("conv_down")?;
    if spec.transposed {
        return Err(Error::dim(
            "conv_down",
            "spec marked transposed".to_string(),
        ));
    }
    check_weight("conv_down", spec, weight, bias)?;
    let [n, ci, h, w] = x.dims4("conv_down")?;
    if ci != spec.in_channels {
        return Err(Error::dim(
            "conv_down",
            format!(
                "input channel axis is {ci}, spec requires {}",
                spec.in_channels
            ),
        ));
    }
    if h < 4 || w < 4 || h % 2 != 0 || w % 2 != 0 {
        return Err(Error::dim(
            "conv_down",
            format!("spatial axes must be even and >= 4, got {h}x{w}"),
        ));
    }
    let g = Geometry {
        ci,
        h,
        w,
        ho: (h + 2 * spec.padding - spec.kernel) / spec.stride + 1,
        wo: (w + 2 * spec.padding - spec.kernel) / spec.stride + 1,
        kernel: spec.kernel,
        stride: spec.stride,
        padding: spec.padding,
    };
    let co = spec.out_channels;
    let (ck, patch) = (g.ck(), g.patch());

    let mut out = Tensor::zeros(&[n, co, g.ho, g.wo]);
    let xin = x.data();
    out.data_mut()
        .par_chunks_mut(co * patch)
        .enumerate()
        .for_each(|(i, yslice)| {
            let mut col = vec![T::ZERO; ck * patch];
            let xi = &xin[i * ci * h * w..(i + 1) * ci * h * w];
            if g.patch_major() {
                im2col_t(xi, &g, &mut col);
                gemm_nt(co, ck, patch, weight.data(), &col, yslice);
            } else {
                im2col(xi, &g, &mut col);
                gemm_nn(co, ck, patch, weight.data(), &col, yslice);
            }
            for c in 0..co {
                let bv = bias.data()[c];
                for v in yslice[c * patch..(c + 1) * patch].iter_mut() {
                    *v += bv;
                }
            }
        });
    Ok(out)
}

pub fn conv_down_backward<T: Element>(
    x: &Tensor<T>,
    spec: &ConvSpec,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    spec.validate("conv_down_backward")?;
    let [n, ci, h, w] = x.dims4("conv_down_backward")?;
    let [gn, gco, ho, wo] = grad_out.dims4("conv_down_backward")?;
    let co = spec.out_channels;
    if gn != n || gco != co || ho != h / 2 || wo != w / 2 {
        return Err(Error::dim(
            "conv_down_backward",
            format!(
                "grad shape {:?} inconsistent with input {:?}",
                grad_out.shape(),
                x.shape()
            ),
        ));
    }
    let g = Geometry {
        ci,
        h,
        w,
        ho,
        wo,
        kernel: spec.kernel,
        stride: spec.stride,
        padding: spec.padding,
    };
    let (ck, patch) = (g.ck(), g.patch());

    let mut dx = Tensor::zeros(&[n, ci, h, w]);
    let xin = x.data();
    let dy = grad_out.data();

    let chunks = ACCUM_CHUNKS.min(n);
    let per = n.div_ceil(chunks);
    let partials: Vec<(Vec<T>, Vec<T>)> = dx
        .data_mut()
        .par_chunks_mut(per * ci * h * w)
        .enumerate()
        .map(|(chunk, dxslice)| {
            let mut dw = vec![T::ZERO; co * ck];
            let mut db = vec![T::ZERO; co];
            let mut col = vec![T::ZERO; ck * patch];
            let mut dcol = vec![T::ZERO; ck * patch];
            let lo = chunk * per;
            let hi = ((chunk + 1) * per).min(n);
            for i in lo..hi {
                let dyi = &dy[i * co * patch..(i + 1) * co * patch];
                let xi = &xin[i * ci * h * w..(i + 1) * ci * h * w];
                for v in dcol.iter_mut() {
                    *v = T::ZERO;
                }
                let local = (i - lo) * ci * h * w;
                if g.patch_major() {
                    im2col_t(xi, &g, &mut col);
                    // dW += dy_i . col ; dcol^T = dy_i^T . W
                    gemm_nn(co, patch, ck, dyi, &col, &mut dw);
                    gemm_tn(patch, co, ck, dyi, weight.data(), &mut dcol);
                    col2im_t(&dcol, &g, &mut dxslice[local..local + ci * h * w]);
                } else {
                    im2col(xi, &g, &mut col);
                    // dW += dy_i . col^T ; dcol = W^T . dy_i
                    gemm_nt(co, patch, ck, dyi, &col, &mut dw);
                    gemm_tn(ck, co, patch, weight.data(), dyi, &mut dcol);
                    col2im(&dcol, &g, &mut dxslice[local..local + ci * h * w]);
                }
                for c in 0..co {
                    let mut acc = T::ZERO;
                    for &v in &dyi[c * patch..(c + 1) * patch] {
                        acc += v;
                    }
                    db[c] += acc;
                }
            }
            (dw, db)
        })
        .collect();

    let mut dw = Tensor::zeros(weight.shape());
    let mut db = Tensor::zeros(&[co]);
    for (pw, pb) in &partials {
        for (a, &b) in dw.data_mut().iter_mut().zip(pw.iter()) {
            *a += b;
        }
        for (a, &b) in db.data_mut().iter_mut().zip(pb.iter()) {
            *a += b;
        }
    }
    Ok(ConvGrads {
        input: dx,
        weight: dw,
        bias: db,
    })
}

/// Transposed convolution: (N, Cin, H, W) -> (N, Cout, 2H, 2W).
///
/// Weight layout is (Cin, Cout, k, k); with a shared weight tensor this is the
/// exact adjoint of [`conv_down_forward`].
pub fn conv_up_forward<T: Element>(
    x: &Tensor<T>,
    spec: &ConvSpec,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    spec.validate("conv_up")?;
    if !spec.transposed {
        return Err(Error::dim(
            "conv_up",
            "spec not marked transposed".to_string(),
        ));
    }
    check_weight("conv_up", spec, weight, bias)?;
    let [n, ci, h, w] = x.dims4("conv_up")?;
    if ci != spec.in_channels {
        return Err(Error::dim(
            "conv_up",
            format!(
                "input channel axis is {ci}, spec requires {}",
                spec.in_channels
            ),
        ));
    }
    let co = spec.out_channels;
    let hu = (h - 1) * spec.stride + spec.kernel - 2 * spec.padding;
    let wu = (w - 1) * spec.stride + spec.kernel - 2 * spec.padding;
    // Geometry of the adjoint downsampling conv (its "input" is our output).
    let g = Geometry {
        ci: co,
        h: hu,
        w: wu,
        ho: h,
        wo: w,
        kernel: spec.kernel,
        stride: spec.stride,
        padding: spec.padding,
    };
    let (ck, patch) = (g.ck(), g.patch());

    let mut out = Tensor::zeros(&[n, co, hu, wu]);
    let xin = x.data();
    out.data_mut()
        .par_chunks_mut(co * hu * wu)
        .enumerate()
        .for_each(|(i, yslice)| {
            let mut dcol = vec![T::ZERO; ck * patch];
            let xi = &xin[i * ci * patch..(i + 1) * ci * patch];
            if g.patch_major() {
                // dcol^T = x_i^T . W
                gemm_tn(patch, ci, ck, xi, weight.data(), &mut dcol);
                col2im_t(&dcol, &g, yslice);
            } else {
                // dcol = W^T . x_i
                gemm_tn(ck, ci, patch, weight.data(), xi, &mut dcol);
                col2im(&dcol, &g, yslice);
            }
            for c in 0..co {
                let bv = bias.data()[c];
                for v in yslice[c * hu * wu..(c + 1) * hu * wu].iter_mut() {
                    *v += bv;
                }
            }
        });
    Ok(out)
}

pub fn conv_up_backward<T: Element>(
    x: &Tensor<T>,
    spec: &ConvSpec,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    spec.validate("conv_up_backward")?;
    let [n, ci, h, w] = x.dims4("conv_up_backward")?;
    let [gn, gco, hu, wu] = grad_out.dims4("conv_up_backward")?;
    let co = spec.out_channels;
    if gn != n || gco != co || hu != 2 * h || wu != 2 * w {
        return Err(Error::dim(
            "conv_up_backward",
            format!(
                "grad shape {:?} inconsistent with input {:?}",
                grad_out.shape(),
                x.shape()
            ),
        ));
    }
    let g = Geometry {
        ci: co,
        h: hu,
        w: wu,
        ho: h,
        wo: w,
        kernel: spec.kernel,
        stride: spec.stride,
        padding: spec.padding,
    };
    let (ck, patch) = (g.ck(), g.patch());

    let mut dx = Tensor::zeros(&[n, ci, h, w]);
    let xin = x.data();
    let dy = grad_out.data();

    let chunks = ACCUM_CHUNKS.min(n);
    let per = n.div_ceil(chunks);
    let partials: Vec<(Vec<T>, Vec<T>)> = dx
        .data_mut()
        .par_chunks_mut(per * ci * patch)
        .enumerate()
        .map(|(chunk, dxslice)| {
            let mut dw = vec![T::ZERO; ci * ck];
            let mut db = vec![T::ZERO; co];
            let mut col = vec![T::ZERO; ck * patch];
            let lo = chunk * per;
            let hi = ((chunk + 1) * per).min(n);
            for i in lo..hi {
                let dyi = &dy[i * co * hu * wu..(i + 1) * co * hu * wu];
                let xi = &xin[i * ci * patch..(i + 1) * ci * patch];
                let local = (i - lo) * ci * patch;
                let dxi = &mut dxslice[local..local + ci * patch];
                if g.patch_major() {
                    im2col_t(dyi, &g, &mut col);
                    // dx_i = W . col^T ; dW += x_i . col
                    gemm_nt(ci, ck, patch, weight.data(), &col, dxi);
                    gemm_nn(ci, patch, ck, xi, &col, &mut dw);
                } else {
                    im2col(dyi, &g, &mut col);
                    // dx_i = W . col ; dW += x_i . col^T
                    gemm_nn(ci, ck, patch, weight.data(), &col, dxi);
                    gemm_nt(ci, patch, ck, xi, &col, &mut dw);
                }
                for c in 0..co {
                    let mut acc = T::ZERO;
                    for &v in &dyi[c * hu * wu..(c + 1) * hu * wu] {
                        acc += v;
                    }
                    db[c] += acc;
                }
            }
            (dw, db)
        })
        .collect();

    let mut dw = Tensor::zeros(weight.shape());
    let mut db = Tensor::zeros(&[co]);
    for (pw, pb) in &partials {
        for (a, &b) in dw.data_mut().iter_mut().zip(pw.iter()) {
            *a += b;
        }
        for (a, &b) in db.data_mut().iter_mut().zip(pb.iter()) {
            *a += b;
        }
    }
    Ok(ConvGrads {
        input: dx,
        weight: dw,
        bias: db,
    })
}
