//! Per-sample training objectives.
//!
//! Both VAE branches contribute a reconstruction term (pixelwise Bernoulli
//! cross entropy on logits) and a closed-form Gaussian KL term; the combined
//! objective weights the two branches. Per-sample values are preserved because
//! the anomaly score is built from them at inference time.

use crate::error::{Error, Result};
use crate::models::GeneratorOutput;
use crate::tensor::{Element, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub alpha1: f64,
    pub alpha2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha1: 1.0,
            alpha2: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(alpha1: f64, alpha2: f64) -> Result<Self> {
        if !alpha1.is_finite() || !alpha2.is_finite() || alpha1 < 0.0 || alpha2 < 0.0 {
            return Err(Error::Input(format!(
                "loss weights must be finite and >= 0, got ({alpha1}, {alpha2})"
            )));
        }
        Ok(LossWeights { alpha1, alpha2 })
    }
}

/// Per-sample loss components, in nats.
#[derive(Clone, Debug)]
pub struct PerSampleLoss<T = f32> {
    pub recon1: Vec<T>,
    pub kl1: Vec<T>,
    pub recon2: Vec<T>,
    pub kl2: Vec<T>,
    pub total: Vec<T>,
}

impl<T: Element> PerSampleLoss<T> {
    pub fn mean_total(&self) -> f64 {
        self.total.iter().map(|v| v.to_f64()).sum::<f64>() / self.total.len() as f64
    }
}

/// Per-sample KL(q(z|x) || N(0, I)) for a diagonal Gaussian posterior:
/// 0.5 * sum_d (mu^2 + exp(logvar) - 1 - logvar).
pub fn kl_divergence<T: Element>(mu: &Tensor<T>, logvar: &Tensor<T>) -> Result<Vec<T>> {
    let [n, d] = mu.dims2("kl_divergence")?;
    if logvar.shape() != mu.shape() {
        return Err(Error::dim(
            "kl_divergence",
            format!("mu {:?} vs logvar {:?}", mu.shape(), logvar.shape()),
        ));
    }
    let half = T::from_f64(0.5);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = T::ZERO;
        for j in 0..d {
            let m = mu.data()[i * d + j];
            let lv = logvar.data()[i * d + j];
            acc += m * m + lv.exp() - T::ONE - lv;
        }
        out.push(half * acc);
    }
    Ok(out)
}

/// Stable elementwise cross entropy between sigmoid(logit) and a soft target
/// in [0, 1]: max(l, 0) - l*t + ln(1 + exp(-|l|)).
pub fn bce_with_logits_scalar<T: Element>(logit: T, target: T) -> T {
    logit.maximum(T::ZERO) - logit * target + (T::ONE + (-logit.abs()).exp()).ln()
}

/// Per-sample reconstruction negative log-likelihood: sum over all non-batch
/// axes of the stable cross entropy between sigmoid(logits) and the target.
pub fn reconstruction_nll<T: Element>(logits: &Tensor<T>, target: &Tensor<T>) -> Result<Vec<T>> {
    if logits.shape() != target.shape() {
        return Err(Error::dim(
            "reconstruction_nll",
            format!("logits {:?} vs target {:?}", logits.shape(), target.shape()),
        ));
    }
    if target
        .data()
        .iter()
        .any(|&t| t < T::ZERO || t > T::ONE || !t.is_finite())
    {
        return Err(Error::Input(
            "reconstruction target outside [0, 1]".to_string(),
        ));
    }
    let n = logits.shape()[0];
    let per = logits.len() / n;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let ls = &logits.data()[i * per..(i + 1) * per];
        let ts = &target.data()[i * per..(i + 1) * per];
        let mut acc = T::ZERO;
        for (&l, &t) in ls.iter().zip(ts) {
            acc += bce_with_logits_scalar(l, t);
        }
        out.push(acc);
    }
    Ok(out)
}

/// Combined per-sample generator objective over both branches.
///
/// With the branch disabled the second term is identically zero and the result
/// is the plain VAE objective scaled by `alpha1`.
pub fn generator_loss<T: Element>(
    out: &GeneratorOutput<T>,
    x: &Tensor<T>,
    weights: &LossWeights,
) -> Result<PerSampleLoss<T>> {
    let n = x.shape()[0];
    let recon1 = reconstruction_nll(&out.x1_logits, x)?;
    let kl1 = kl_divergence(&out.latent1.mu, &out.latent1.logvar)?;
    let (recon2, kl2) = match &out.latent2 {
        Some(latent2) => {
            let x2 = out
                .x2_logits
                .as_ref()
                .ok_or_else(|| Error::State("branch latent present without x2 logits".into()))?;
            (
                reconstruction_nll(x2, x)?,
                kl_divergence(&latent2.mu, &latent2.logvar)?,
            )
        }
        None => (vec![T::ZERO; n], vec![T::ZERO; n]),
    };
    let a1 = T::from_f64(weights.alpha1);
    let a2 = T::from_f64(weights.alpha2);
    let total: Vec<T> = (0..n)
        .map(|i| a1 * (recon1[i] + kl1[i]) + a2 * (recon2[i] + kl2[i]))
        .collect();
    Ok(PerSampleLoss {
        recon1,
        kl1,
        recon2,
        kl2,
        total,
    })
}

/// Mean binary cross entropy of discriminator probabilities under the
/// convention real -> target 0, reconstruction/fake -> target 1.
pub fn discriminator_loss<T: Element>(p_real: &[T], p_fake: &[T]) -> Result<T> {
    let check = |p: &[T], side: &str| -> Result<()> {
        if p.iter()
            .any(|&v| v <= T::ZERO || v >= T::ONE || !v.is_finite())
        {
            return Err(Error::Input(format!(
                "discriminator_loss: {side} probability outside (0, 1)"
            )));
        }
        Ok(())
    };
    check(p_real, "real")?;
    check(p_fake, "fake")?;
    let total = p_real.len() + p_fake.len();
    if total == 0 {
        return Err(Error::Input("discriminator_loss: empty inputs".to_string()));
    }
    let mut acc = T::ZERO;
    for &p in p_real {
        acc += -(T::ONE - p).ln(); // target 0
    }
    for &p in p_fake {
        acc += -p.ln(); // target 1
    }
    Ok(acc / T::from_f64(total as f64))
}

/// Upstream gradients of `mean(total)` over the batch, ready to feed the
/// generator backward pass.
pub fn generator_loss_grads<T: Element>(
    out: &GeneratorOutput<T>,
    x: &Tensor<T>,
    weights: &LossWeights,
) -> Result<crate::models::GeneratorLossGrads<T>> {
    let n = x.shape()[0];
    let scale1 = vec![T::from_f64(weights.alpha1 / n as f64); n];
    let d_x1_logits = bce_logits_grad(&out.x1_logits, x, &scale1);
    let (d_mu1, d_logvar1) = kl_grads(&out.latent1.mu, &out.latent1.logvar, &scale1);
    let (d_x2_logits, d_mu2, d_logvar2) = match (&out.latent2, &out.x2_logits) {
        (Some(latent2), Some(x2)) => {
            let scale2 = vec![T::from_f64(weights.alpha2 / n as f64); n];
            let d_x2 = bce_logits_grad(x2, x, &scale2);
            let (dm, dl) = kl_grads(&latent2.mu, &latent2.logvar, &scale2);
            (Some(d_x2), Some(dm), Some(dl))
        }
        _ => (None, None, None),
    };
    Ok(crate::models::GeneratorLossGrads {
        d_x1_logits,
        d_mu1,
        d_logvar1,
        d_x2_logits,
        d_mu2,
        d_logvar2,
    })
}

// ---- gradients ----------------------------------------------------------

/// d/dlogit of bce_with_logits: sigmoid(logit) - target, scaled per sample.
pub fn bce_logits_grad<T: Element>(
    logits: &Tensor<T>,
    target: &Tensor<T>,
    sample_scale: &[T],
) -> Tensor<T> {
    let n = logits.shape()[0];
    let per = logits.len() / n;
    let mut grad = Tensor::zeros(logits.shape());
    for (i, &s) in sample_scale.iter().enumerate().take(n) {
        let ls = &logits.data()[i * per..(i + 1) * per];
        let ts = &target.data()[i * per..(i + 1) * per];
        let gs = &mut grad.data_mut()[i * per..(i + 1) * per];
        for ((g, &l), &t) in gs.iter_mut().zip(ls).zip(ts) {
            *g = (crate::nn::sigmoid_scalar(l) - t) * s;
        }
    }
    grad
}

/// Gradients of per-sample KL with respect to mu and logvar, scaled per sample.
pub fn kl_grads<T: Element>(
    mu: &Tensor<T>,
    logvar: &Tensor<T>,
    sample_scale: &[T],
) -> (Tensor<T>, Tensor<T>) {
    let [n, d] = mu.dims2("kl_grads").expect("rank-2 latent stats");
    let half = T::from_f64(0.5);
    let mut dmu = Tensor::zeros(mu.shape());
    let mut dlv = Tensor::zeros(logvar.shape());
    for (i, &s) in sample_scale.iter().enumerate().take(n) {
        for j in 0..d {
            let idx = i * d + j;
            dmu.data_mut()[idx] = mu.data()[idx] * s;
            dlv.data_mut()[idx] = half * (logvar.data()[idx].exp() - T::ONE) * s;
        }
    }
    (dmu, dlv)
}
