//! Per-channel batch normalization over NCHW activations.
//!
//! Running statistics are explicit inputs/outputs owned by the caller's
//! parameter set, so eval mode is a pure function of (input, stats).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Saved forward state needed by [`batch_norm_backward`].
#[derive(Debug)]
pub struct BnCache<T: Element> {
    input: Tensor<T>,
    mean: Vec<T>,
    inv_std: Vec<T>,
}

fn check_channel_params<T: Element>(
    op: &'static str,
    c: usize,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
) -> Result<()> {
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::dim(
            op,
            format!(
                "gamma {:?} / beta {:?} must both be [{c}] (channel axis)",
                gamma.shape(),
                beta.shape()
            ),
        ));
    }
    Ok(())
}

/// Train-mode forward: normalizes with batch statistics, updates running
/// stats in place, and returns the cache for the backward pass.
pub fn batch_norm_train<T: Element>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &mut Tensor<T>,
    running_var: &mut Tensor<T>,
) -> Result<(Tensor<T>, BnCache<T>)> {
    let [n, c, h, w] = x.dims4("batch_norm")?;
    check_channel_params("batch_norm", c, gamma, beta)?;
    if n < 2 {
        return Err(Error::Input(format!(
            "batch_norm: train mode needs batch size >= 2, got degenerate batch of {n}"
        )));
    }
    let m = n * h * w;
    let minv = T::from_f64(1.0 / m as f64);
    let plane = h * w;

    let mut mean = vec![T::ZERO; c];
    mean.par_iter_mut().enumerate().for_each(|(ch, m)| {
        let mut acc = T::ZERO;
        for i in 0..n {
            let src = &x.data()[(i * c + ch) * plane..(i * c + ch + 1) * plane];
            for &v in src {
                acc += v;
            }
        }
        *m = acc * minv;
    });
    let mut var = vec![T::ZERO; c];
    var.par_iter_mut().enumerate().for_each(|(ch, out)| {
        let mu = mean[ch];
        let mut acc = T::ZERO;
        for i in 0..n {
            let src = &x.data()[(i * c + ch) * plane..(i * c + ch + 1) * plane];
            for &v in src {
                let d = v - mu;
                acc += d * d;
            }
        }
        *out = acc * minv;
    });

    let eps = T::from_f64(BN_EPS);
    let inv_std: Vec<T> = var.iter().map(|&v| T::ONE / (v + eps).sqrt()).collect();

    let mut y = Tensor::zeros(x.shape());
    y.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(p, dst)| {
            let ch = p % c;
            let src = &x.data()[p * plane..(p + 1) * plane];
            let (mu, is, g, b) = (mean[ch], inv_std[ch], gamma.data()[ch], beta.data()[ch]);
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = g * (s - mu) * is + b;
            }
        });

    // Running stats: unbiased variance, momentum as in common practice.
    let mom = T::from_f64(BN_MOMENTUM);
    let keep = T::ONE - mom;
    let unbias = T::from_f64(m as f64 / (m as f64 - 1.0));
    for ch in 0..c {
        running_mean.data_mut()[ch] = keep * running_mean.data()[ch] + mom * mean[ch];
        running_var.data_mut()[ch] = keep * running_var.data()[ch] + mom * (var[ch] * unbias);
    }

    let cache = BnCache {
        input: x.clone(),
        mean,
        inv_std,
    };
    Ok((y, cache))
}

/// Eval-mode forward: pure function of the input and the running statistics.
pub fn batch_norm_eval<T: Element>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.dims4("batch_norm")?;
    check_channel_params("batch_norm", c, gamma, beta)?;
    let plane = h * w;
    let eps = T::from_f64(BN_EPS);
    let mut y = Tensor::zeros(x.shape());
    let _ = n;
    y.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(p, dst)| {
            let ch = p % c;
            let src = &x.data()[p * plane..(p + 1) * plane];
            let mu = running_mean.data()[ch];
            let is = T::ONE / (running_var.data()[ch] + eps).sqrt();
            let (g, b) = (gamma.data()[ch], beta.data()[ch]);
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = g * (s - mu) * is + b;
            }
        });
    Ok(y)
}

pub struct BnGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

/// Backward through train-mode normalization, including the batch-statistics
/// paths.
pub fn batch_norm_backward<T: Element>(
    cache: &BnCache<T>,
    gamma: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<BnGrads<T>> {
    let [n, c, h, w] = cache.input.dims4("batch_norm_backward")?;
    if grad_out.shape() != cache.input.shape() {
        return Err(Error::dim(
            "batch_norm_backward",
            format!(
                "grad shape {:?} vs input {:?}",
                grad_out.shape(),
                cache.input.shape()
            ),
        ));
    }
    let plane = h * w;
    let m = n * h * w;
    let minv = T::from_f64(1.0 / m as f64);
    let two = T::from_f64(2.0);
    let half = T::from_f64(0.5);

    let mut dgamma = Tensor::zeros(&[c]);
    let mut dbeta = Tensor::zeros(&[c]);
    let mut dvar = vec![T::ZERO; c];
    let mut dmean = vec![T::ZERO; c];

    let stats: Vec<[T; 5]> = (0..c)
        .into_par_iter()
        .map(|ch| {
            let mu = cache.mean[ch];
            let is = cache.inv_std[ch];
            let g = gamma.data()[ch];
            let mut acc = [T::ZERO; 5];
            for i in 0..n {
                let xs = &cache.input.data()[(i * c + ch) * plane..(i * c + ch + 1) * plane];
                let gs = &grad_out.data()[(i * c + ch) * plane..(i * c + ch + 1) * plane];
                for (&xv, &gv) in xs.iter().zip(gs) {
                    let xc = xv - mu;
                    let dxhat = gv * g;
                    acc[0] += gv;
                    acc[1] += gv * xc * is;
                    acc[2] += dxhat * xc;
                    acc[3] += dxhat;
                    acc[4] += xc;
                }
            }
            acc
        })
        .collect();
    for ch in 0..c {
        let is = cache.inv_std[ch];
        dbeta.data_mut()[ch] = stats[ch][0];
        dgamma.data_mut()[ch] = stats[ch][1];
        dvar[ch] = stats[ch][2] * (-half) * is * is * is;
        dmean[ch] = stats[ch][3] * (-is) + dvar[ch] * (-two) * stats[ch][4] * minv;
    }

    let mut dx = Tensor::zeros(cache.input.shape());
    dx.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(p, ds)| {
            let ch = p % c;
            let xs = &cache.input.data()[p * plane..(p + 1) * plane];
            let gs = &grad_out.data()[p * plane..(p + 1) * plane];
            let mu = cache.mean[ch];
            let is = cache.inv_std[ch];
            let g = gamma.data()[ch];
            let dv = dvar[ch];
            let dm = dmean[ch];
            for ((d, &xv), &gv) in ds.iter_mut().zip(xs).zip(gs) {
                let xc = xv - mu;
                *d = gv * g * is + dv * two * xc * minv + dm * minv;
            }
        });
    Ok(BnGrads {
        input: dx,
        gamma: dgamma,
        beta: dbeta,
    })
}
