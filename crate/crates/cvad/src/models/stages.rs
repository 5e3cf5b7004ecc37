//! Shared building blocks: conv stage (conv + batch norm + leaky ReLU),
//! transposed conv stage, and linear heads, all addressed through named
//! parameters with a common prefix.

use crate::error::Result;
use crate::nn::{
    batch_norm_backward, batch_norm_eval, batch_norm_train, conv_down_backward, conv_down_forward,
    conv_fan_in, conv_transposed_fan_in, conv_up_backward, conv_up_forward, he_normal, leaky_relu,
    leaky_relu_backward, linear_backward, linear_forward, BnCache, ConvSpec, ParamSet, LEAKY_SLOPE,
};
use crate::rng::Rng;
use crate::tensor::{Element, Tensor};

pub(super) struct DownCache<T: Element> {
    pub input: Tensor<T>,
    pub bn: BnCache<T>,
    pub bn_out: Tensor<T>,
}

pub(super) struct UpCache<T: Element> {
    pub input: Tensor<T>,
    pub bn: Option<BnCache<T>>,
    pub bn_out: Option<Tensor<T>>,
}

pub(super) fn down_names(prefix: &str, out: &mut Vec<String>) {
    for suffix in [
        "conv.weight",
        "conv.bias",
        "bn.gamma",
        "bn.beta",
        "bn.rmean",
        "bn.rvar",
    ] {
        out.push(format!("{prefix}.{suffix}"));
    }
}

pub(super) fn up_names(prefix: &str, with_bn: bool, out: &mut Vec<String>) {
    out.push(format!("{prefix}.deconv.weight"));
    out.push(format!("{prefix}.deconv.bias"));
    if with_bn {
        for suffix in ["bn.gamma", "bn.beta", "bn.rmean", "bn.rvar"] {
            out.push(format!("{prefix}.{suffix}"));
        }
    }
}

pub(super) fn linear_names(prefix: &str, out: &mut Vec<String>) {
    out.push(format!("{prefix}.weight"));
    out.push(format!("{prefix}.bias"));
}

/// Batch-norm running statistics are state, not optimized parameters.
pub fn is_trainable(name: &str) -> bool {
    !name.ends_with(".bn.rmean") && !name.ends_with(".bn.rvar")
}

pub(super) fn init_down<T: Element>(
    params: &mut ParamSet<T>,
    rng: &mut Rng,
    prefix: &str,
    spec: ConvSpec,
) {
    let fan_in = conv_fan_in(spec.in_channels, spec.kernel);
    params.insert(
        format!("{prefix}.conv.weight"),
        he_normal(rng, &spec.weight_shape(), fan_in),
    );
    params.insert(
        format!("{prefix}.conv.bias"),
        Tensor::zeros(&[spec.out_channels]),
    );
    init_bn(params, prefix, spec.out_channels);
}

pub(super) fn init_up<T: Element>(
    params: &mut ParamSet<T>,
    rng: &mut Rng,
    prefix: &str,
    spec: ConvSpec,
    with_bn: bool,
) {
    let fan_in = conv_transposed_fan_in(spec.in_channels, spec.kernel, spec.stride);
    params.insert(
        format!("{prefix}.deconv.weight"),
        he_normal(rng, &spec.weight_shape(), fan_in),
    );
    params.insert(
        format!("{prefix}.deconv.bias"),
        Tensor::zeros(&[spec.out_channels]),
    );
    if with_bn {
        init_bn(params, prefix, spec.out_channels);
    }
}

fn init_bn<T: Element>(params: &mut ParamSet<T>, prefix: &str, channels: usize) {
    params.insert(
        format!("{prefix}.bn.gamma"),
        Tensor::filled(&[channels], T::ONE),
    );
    params.insert(format!("{prefix}.bn.beta"), Tensor::zeros(&[channels]));
    params.insert(format!("{prefix}.bn.rmean"), Tensor::zeros(&[channels]));
    params.insert(
        format!("{prefix}.bn.rvar"),
        Tensor::filled(&[channels], T::ONE),
    );
}

pub(super) fn init_linear<T: Element>(
    params: &mut ParamSet<T>,
    rng: &mut Rng,
    prefix: &str,
    din: usize,
    dout: usize,
) {
    params.insert(
        format!("{prefix}.weight"),
        he_normal(rng, &[din, dout], din),
    );
    params.insert(format!("{prefix}.bias"), Tensor::zeros(&[dout]));
}

pub(super) fn down_eval<T: Element>(
    params: &ParamSet<T>,
    prefix: &str,
    spec: ConvSpec,
    x: &Tensor<T>,
) -> Result<Tensor<T>> {
    let y = conv_down_forward(
        x,
        &spec,
        params.get(&format!("{prefix}.conv.weight"))?,
        params.get(&format!("{prefix}.conv.bias"))?,
    )?;
    let y = batch_norm_eval(
        &y,
        params.get(&format!("{prefix}.bn.gamma"))?,
        params.get(&format!("{prefix}.bn.beta"))?,
        params.get(&format!("{prefix}.bn.rmean"))?,
        params.get(&format!("{prefix}.bn.rvar"))?,
    )?;
    Ok(leaky_relu(&y, LEAKY_SLOPE))
}

pub(super) fn down_train<T: Element>(
    params: &mut ParamSet<T>,
    prefix: &str,
    spec: ConvSpec,
    x: Tensor<T>,
) -> Result<(Tensor<T>, DownCache<T>)> {
    let y = conv_down_forward(
        &x,
        &spec,
        params.get(&format!("{prefix}.conv.weight"))?,
        params.get(&format!("{prefix}.conv.bias"))?,
    )?;
    let gamma = params.get(&format!("{prefix}.bn.gamma"))?.clone();
    let beta = params.get(&format!("{prefix}.bn.beta"))?.clone();
    let mut rmean = params.get(&format!("{prefix}.bn.rmean"))?.clone();
    let mut rvar = params.get(&format!("{prefix}.bn.rvar"))?.clone();
    let (bn_out, bn) = batch_norm_train(&y, &gamma, &beta, &mut rmean, &mut rvar)?;
    *params.get_mut(&format!("{prefix}.bn.rmean"))? = rmean;
    *params.get_mut(&format!("{prefix}.bn.rvar"))? = rvar;
    let out = leaky_relu(&bn_out, LEAKY_SLOPE);
    Ok((
        out,
        DownCache {
            input: x,
            bn,
            bn_out,
        },
    ))
}

pub(super) fn down_backward<T: Element>(
    params: &ParamSet<T>,
    prefix: &str,
    spec: ConvSpec,
    cache: &DownCache<T>,
    grad_out: &Tensor<T>,
    grads: &mut ParamSet<T>,
) -> Result<Tensor<T>> {
    let d_bn_out = leaky_relu_backward(&cache.bn_out, LEAKY_SLOPE, grad_out);
    let bn_grads = batch_norm_backward(
        &cache.bn,
        params.get(&format!("{prefix}.bn.gamma"))?,
        &d_bn_out,
    )?;
    grads.accumulate(&format!("{prefix}.bn.gamma"), bn_grads.gamma);
    grads.accumulate(&format!("{prefix}.bn.beta"), bn_grads.beta);
    let cg = conv_down_backward(
        &cache.input,
        &spec,
        params.get(&format!("{prefix}.conv.weight"))?,
        &bn_grads.input,
    )?;
    grads.accumulate(&format!("{prefix}.conv.weight"), cg.weight);
    grads.accumulate(&format!("{prefix}.conv.bias"), cg.bias);
    Ok(cg.input)
}

pub(super) fn up_eval<T: Element>(
    params: &ParamSet<T>,
    prefix: &str,
    spec: ConvSpec,
    x: &Tensor<T>,
    with_bn: bool,
) -> Result<Tensor<T>> {
    let y = conv_up_forward(
        x,
        &spec,
        params.get(&format!("{prefix}.deconv.weight"))?,
        params.get(&format!("{prefix}.deconv.bias"))?,
    )?;
    if !with_bn {
        return Ok(y);
    }
    let y = batch_norm_eval(
        &y,
        params.get(&format!("{prefix}.bn.gamma"))?,
        params.get(&format!("{prefix}.bn.beta"))?,
        params.get(&format!("{prefix}.bn.rmean"))?,
        params.get(&format!("{prefix}.bn.rvar"))?,
    )?;
    Ok(leaky_relu(&y, LEAKY_SLOPE))
}

pub(super) fn up_train<T: Element>(
    params: &mut ParamSet<T>,
    prefix: &str,
    spec: ConvSpec,
    x: Tensor<T>,
    with_bn: bool,
) -> Result<(Tensor<T>, UpCache<T>)> {
    let y = conv_up_forward(
        &x,
        &spec,
        params.get(&format!("{prefix}.deconv.weight"))?,
        params.get(&format!("{prefix}.deconv.bias"))?,
    )?;
    if !with_bn {
        return Ok((
            y,
            UpCache {
                input: x,
                bn: None,
                bn_out: None,
            },
        ));
    }
    let gamma = params.get(&format!("{prefix}.bn.gamma"))?.clone();
    let beta = params.get(&format!("{prefix}.bn.beta"))?.clone();
    let mut rmean = params.get(&format!("{prefix}.bn.rmean"))?.clone();
    let mut rvar = params.get(&format!("{prefix}.bn.rvar"))?.clone();
    let (bn_out, bn) = batch_norm_train(&y, &gamma, &beta, &mut rmean, &mut rvar)?;
    *params.get_mut(&format!("{prefix}.bn.rmean"))? = rmean;
    *params.get_mut(&format!("{prefix}.bn.rvar"))? = rvar;
    let out = leaky_relu(&bn_out, LEAKY_SLOPE);
    Ok((
        out,
        UpCache {
            input: x,
            bn: Some(bn),
            bn_out: Some(bn_out),
        },
    ))
}

pub(super) fn up_backward<T: Element>(
    params: &ParamSet<T>,
    prefix: &str,
    spec: ConvSpec,
    cache: &UpCache<T>,
    grad_out: &Tensor<T>,
    grads: &mut ParamSet<T>,
) -> Result<Tensor<T>> {
    let d_deconv_out = match (&cache.bn, &cache.bn_out) {
        (Some(bn), Some(bn_out)) => {
            let d_bn_out = leaky_relu_backward(bn_out, LEAKY_SLOPE, grad_out);
            let bn_grads =
                batch_norm_backward(bn, params.get(&format!("{prefix}.bn.gamma"))?, &d_bn_out)?;
            grads.accumulate(&format!("{prefix}.bn.gamma"), bn_grads.gamma);
            grads.accumulate(&format!("{prefix}.bn.beta"), bn_grads.beta);
            bn_grads.input
        }
        _ => grad_out.clone(),
    };
    let cg = conv_up_backward(
        &cache.input,
        &spec,
        params.get(&format!("{prefix}.deconv.weight"))?,
        &d_deconv_out,
    )?;
    grads.accumulate(&format!("{prefix}.deconv.weight"), cg.weight);
    grads.accumulate(&format!("{prefix}.deconv.bias"), cg.bias);
    Ok(cg.input)
}

pub(super) fn linear_fwd<T: Element>(
    params: &ParamSet<T>,
    prefix: &str,
    x: &Tensor<T>,
) -> Result<Tensor<T>> {
    linear_forward(
        x,
        params.get(&format!("{prefix}.weight"))?,
        params.get(&format!("{prefix}.bias"))?,
    )
}

pub(super) fn linear_bwd<T: Element>(
    params: &ParamSet<T>,
    prefix: &str,
    input: &Tensor<T>,
    grad_out: &Tensor<T>,
    grads: &mut ParamSet<T>,
) -> Result<Tensor<T>> {
    let lg = linear_backward(input, params.get(&format!("{prefix}.weight"))?, grad_out)?;
    grads.accumulate(&format!("{prefix}.weight"), lg.weight);
    grads.accumulate(&format!("{prefix}.bias"), lg.bias);
    Ok(lg.input)
}
