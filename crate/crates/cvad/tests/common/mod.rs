//! Shared verification helpers for the integration and acceptance suites:
//! 64-bit finite-difference checks of every kernel and of the full generator,
//! plus the O(n^2) metric oracles.

#![allow(dead_code)]

use cvad::check::{central_difference, max_relative_error, numerical_gradient, relative_error};
use cvad::losses::{
    bce_logits_grad, generator_loss, generator_loss_grads, kl_divergence, kl_grads,
    reconstruction_nll, LossWeights,
};
use cvad::models::{ArchConfig, Generator};
use cvad::nn::{
    batch_norm_backward, batch_norm_train, conv_down_backward, conv_down_forward, conv_up_backward,
    conv_up_forward, leaky_relu, leaky_relu_backward, linear_backward, linear_forward, ConvSpec,
    ParamSet, LEAKY_SLOPE,
};
use cvad::rng::Rng;
use cvad::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;
pub const FD_FLOOR: f64 = 1e-6;

// Floor for the end-to-end check. Biases feeding train-mode batch norm have
// exactly zero gradient (the normalization cancels per-channel shifts), and
// central differences can only resolve zero down to |f| * eps / h, about 1e-8
// for this objective. Real gradients here are orders of magnitude above the
// floor, so genuine errors still fail the 1e-4 relative bound.
pub const E2E_FLOOR: f64 = 1e-3;

pub fn tiny_arch() -> ArchConfig {
    ArchConfig {
        image_size: 32,
        in_channels: 1,
        base_channels: 4,
        depth: 4,
        latent_dim: 8,
        branch_enabled: true,
        branch_channels: 8,
    }
}

fn randn(rng: &mut Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.normal() * scale;
    }
    t
}

/// Random values bounded away from zero, for kernels with a kink at 0.
fn randn_off_zero(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        let z = rng.normal();
        *v = z + if z >= 0.0 { 0.05 } else { -0.05 };
    }
    t
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// One kernel check result: (name, max relative error).
pub type CheckResult = (&'static str, f64);

fn check_conv_down(rng: &mut Rng) -> Vec<CheckResult> {
    let spec = ConvSpec::down(3, 4);
    let x = randn(rng, &[2, 3, 8, 8], 1.0);
    let w = randn(rng, &spec.weight_shape(), 0.5);
    let b = randn(rng, &[4], 0.2);
    // Scalar objective: projection of the output onto a fixed random tensor.
    let proj = randn(rng, &[2, 4, 4, 4], 1.0);
    let grads = conv_down_backward(&x, &spec, &w, &proj).unwrap();

    let fx = |t: &Tensor<f64>| dot(&conv_down_forward(t, &spec, &w, &b).unwrap(), &proj);
    let fw = |t: &Tensor<f64>| dot(&conv_down_forward(&x, &spec, t, &b).unwrap(), &proj);
    let fb = |t: &Tensor<f64>| dot(&conv_down_forward(&x, &spec, &w, t).unwrap(), &proj);
    vec![
        (
            "conv_down/input",
            max_relative_error(&grads.input, &numerical_gradient(&x, FD_STEP, fx), FD_FLOOR),
        ),
        (
            "conv_down/weight",
            max_relative_error(
                &grads.weight,
                &numerical_gradient(&w, FD_STEP, fw),
                FD_FLOOR,
            ),
        ),
        (
            "conv_down/bias",
            max_relative_error(&grads.bias, &numerical_gradient(&b, FD_STEP, fb), FD_FLOOR),
        ),
    ]
}

fn check_conv_up(rng: &mut Rng) -> Vec<CheckResult> {
    let spec = ConvSpec::up(3, 2);
    let x = randn(rng, &[2, 3, 4, 4], 1.0);
    let w = randn(rng, &spec.weight_shape(), 0.5);
    let b = randn(rng, &[2], 0.2);
    let proj = randn(rng, &[2, 2, 8, 8], 1.0);
    let grads = conv_up_backward(&x, &spec, &w, &proj).unwrap();

    let fx = |t: &Tensor<f64>| dot(&conv_up_forward(t, &spec, &w, &b).unwrap(), &proj);
    let fw = |t: &Tensor<f64>| dot(&conv_up_forward(&x, &spec, t, &b).unwrap(), &proj);
    let fb = |t: &Tensor<f64>| dot(&conv_up_forward(&x, &spec, &w, t).unwrap(), &proj);
    vec![
        (
            "conv_up/input",
            max_relative_error(&grads.input, &numerical_gradient(&x, FD_STEP, fx), FD_FLOOR),
        ),
        (
            "conv_up/weight",
            max_relative_error(
                &grads.weight,
                &numerical_gradient(&w, FD_STEP, fw),
                FD_FLOOR,
            ),
        ),
        (
            "conv_up/bias",
            max_relative_error(&grads.bias, &numerical_gradient(&b, FD_STEP, fb), FD_FLOOR),
        ),
    ]
}

fn check_linear(rng: &mut Rng) -> Vec<CheckResult> {
    let x = randn(rng, &[3, 5], 1.0);
    let w = randn(rng, &[5, 4], 0.7);
    let b = randn(rng, &[4], 0.3);
    let proj = randn(rng, &[3, 4], 1.0);
    let grads = linear_backward(&x, &w, &proj).unwrap();

    let fx = |t: &Tensor<f64>| dot(&linear_forward(t, &w, &b).unwrap(), &proj);
    let fw = |t: &Tensor<f64>| dot(&linear_forward(&x, t, &b).unwrap(), &proj);
    let fb = |t: &Tensor<f64>| dot(&linear_forward(&x, &w, t).unwrap(), &proj);
    vec![
        (
            "linear/input",
            max_relative_error(&grads.input, &numerical_gradient(&x, FD_STEP, fx), FD_FLOOR),
        ),
        (
            "linear/weight",
            max_relative_error(
                &grads.weight,
                &numerical_gradient(&w, FD_STEP, fw),
                FD_FLOOR,
            ),
        ),
        (
            "linear/bias",
            max_relative_error(&grads.bias, &numerical_gradient(&b, FD_STEP, fb), FD_FLOOR),
        ),
    ]
}

fn check_batch_norm(rng: &mut Rng) -> Vec<CheckResult> {
    let x = randn(rng, &[4, 3, 5, 5], 1.5);
    let gamma = randn(rng, &[3], 0.5).map(|v| v + 1.0);
    let beta = randn(rng, &[3], 0.3);
    let proj = randn(rng, &[4, 3, 5, 5], 1.0);

    let run = |x: &Tensor<f64>, g: &Tensor<f64>, b: &Tensor<f64>| {
        let mut rm = Tensor::zeros(&[3]);
        let mut rv = Tensor::filled(&[3], 1.0);
        batch_norm_train(x, g, b, &mut rm, &mut rv).unwrap().0
    };
    let (_, cache) = {
        let mut rm = Tensor::zeros(&[3]);
        let mut rv = Tensor::filled(&[3], 1.0);
        batch_norm_train(&x, &gamma, &beta, &mut rm, &mut rv).unwrap()
    };
    let grads = batch_norm_backward(&cache, &gamma, &proj).unwrap();

    let fx = |t: &Tensor<f64>| dot(&run(t, &gamma, &beta), &proj);
    let fg = |t: &Tensor<f64>| dot(&run(&x, t, &beta), &proj);
    let fb = |t: &Tensor<f64>| dot(&run(&x, &gamma, t), &proj);
    vec![
        (
            "batch_norm/input",
            max_relative_error(&grads.input, &numerical_gradient(&x, FD_STEP, fx), FD_FLOOR),
        ),
        (
            "batch_norm/gamma",
            max_relative_error(
                &grads.gamma,
                &numerical_gradient(&gamma, FD_STEP, fg),
                FD_FLOOR,
            ),
        ),
        (
            "batch_norm/beta",
            max_relative_error(
                &grads.beta,
                &numerical_gradient(&beta, FD_STEP, fb),
                FD_FLOOR,
            ),
        ),
    ]
}

fn check_leaky_relu(rng: &mut Rng) -> Vec<CheckResult> {
    let x = randn_off_zero(rng, &[2, 3, 4, 4]);
    let proj = randn(rng, &[2, 3, 4, 4], 1.0);
    let dx = leaky_relu_backward(&x, LEAKY_SLOPE, &proj);
    let f = |t: &Tensor<f64>| dot(&leaky_relu(t, LEAKY_SLOPE), &proj);
    vec![(
        "leaky_relu/input",
        max_relative_error(&dx, &numerical_gradient(&x, FD_STEP, f), FD_FLOOR),
    )]
}

fn check_losses(rng: &mut Rng) -> Vec<CheckResult> {
    // reconstruction NLL wrt logits
    let logits = randn(rng, &[2, 1, 4, 4], 2.0);
    let mut target = Tensor::zeros(&[2, 1, 4, 4]);
    for v in target.data_mut() {
        *v = rng.uniform();
    }
    let scale = vec![1.0f64; 2];
    let analytic = bce_logits_grad(&logits, &target, &scale);
    let f = |t: &Tensor<f64>| reconstruction_nll(t, &target).unwrap().iter().sum::<f64>();
    let recon_err = max_relative_error(
        &analytic,
        &numerical_gradient(&logits, FD_STEP, f),
        FD_FLOOR,
    );

    // KL wrt mu and logvar
    let mu = randn(rng, &[3, 5], 1.0);
    let logvar = randn(rng, &[3, 5], 0.8);
    let scale = vec![1.0f64; 3];
    let (dmu, dlv) = kl_grads(&mu, &logvar, &scale);
    let fmu = |t: &Tensor<f64>| kl_divergence(t, &logvar).unwrap().iter().sum::<f64>();
    let flv = |t: &Tensor<f64>| kl_divergence(&mu, t).unwrap().iter().sum::<f64>();
    let kl_mu_err = max_relative_error(&dmu, &numerical_gradient(&mu, FD_STEP, fmu), FD_FLOOR);
    let kl_lv_err = max_relative_error(&dlv, &numerical_gradient(&logvar, FD_STEP, flv), FD_FLOOR);

    vec![
        ("loss/reconstruction_nll", recon_err),
        ("loss/kl_mu", kl_mu_err),
        ("loss/kl_logvar", kl_lv_err),
    ]
}

/// Gradient checks for every layer kernel and both loss functions.
pub fn kernel_checks() -> Vec<CheckResult> {
    let mut rng = Rng::new(0x5eed);
    let mut out = Vec::new();
    out.extend(check_conv_down(&mut rng));
    out.extend(check_conv_up(&mut rng));
    out.extend(check_linear(&mut rng));
    out.extend(check_batch_norm(&mut rng));
    out.extend(check_leaky_relu(&mut rng));
    out.extend(check_losses(&mut rng));
    out
}

/// End-to-end check: analytic gradient of the mean generator loss against
/// central differences, sampling `per_tensor` elements of every trainable
/// parameter of the tiny configuration. Returns the max relative error.
pub fn end_to_end_generator_check(per_tensor: usize) -> f64 {
    let cfg = tiny_arch();
    let mut rng = Rng::new(0xe2e);
    let gen64: Generator<f64> = Generator::init(cfg.clone(), &mut rng).unwrap();
    let base = gen64.params.clone();

    let n = 2;
    let mut x = Tensor::<f64>::zeros(&[n, 1, cfg.image_size, cfg.image_size]);
    for v in x.data_mut() {
        *v = rng.uniform();
    }
    let (eps1, eps2) = gen64.draw_eps(n, &mut rng);
    let weights = LossWeights::default();

    let eval = |params: &ParamSet<f64>| -> f64 {
        let mut g = Generator {
            cfg: cfg.clone(),
            params: params.clone(),
        };
        let (out, _) = g.forward_train(&x, &eps1, eps2.as_ref()).unwrap();
        generator_loss(&out, &x, &weights).unwrap().mean_total()
    };

    // Analytic gradients once.
    let grads = {
        let mut g = Generator {
            cfg: cfg.clone(),
            params: base.clone(),
        };
        let (out, tape) = g.forward_train(&x, &eps1, eps2.as_ref()).unwrap();
        let upstream = generator_loss_grads(&out, &x, &weights).unwrap();
        g.backward(&tape, &upstream).unwrap()
    };

    let mut worst: f64 = 0.0;
    let mut pick_rng = Rng::new(0x9a3);
    for name in Generator::<f64>::trainable_names(&cfg) {
        let analytic = grads.get(&name).unwrap();
        let tensor = base.get(&name).unwrap();
        let len = tensor.len();
        for _ in 0..per_tensor.min(len) {
            let idx = pick_rng.below(len as u64) as usize;
            let numeric = central_difference(tensor, idx, FD_STEP, |t| {
                let mut params = base.clone();
                *params.get_mut(&name).unwrap() = t.clone();
                eval(&params)
            });
            let err = relative_error(analytic.data()[idx], numeric, E2E_FLOOR);
            worst = worst.max(err);
        }
    }
    worst
}

// ---- metric oracles -------------------------------------------------------

/// O(n^2) pairwise Mann-Whitney AUROC with half credit for ties.
pub fn mann_whitney_auroc(scores: &[f64], labels: &[u8]) -> f64 {
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 1)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 0)
        .map(|(&s, _)| s)
        .collect();
    let mut credit = 0.0;
    for &p in &pos {
        for &q in &neg {
            credit += if p > q {
                1.0
            } else if p == q {
                0.5
            } else {
                0.0
            };
        }
    }
    credit / (pos.len() as f64 * neg.len() as f64)
}

/// Exhaustive G-Mean scan over every candidate threshold (all scores plus
/// the two infinities); returns the best (gmean, fpr, tpr).
pub fn exhaustive_gmean(scores: &[f64], labels: &[u8]) -> (f64, f64, f64) {
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    let mut candidates: Vec<f64> = scores.to_vec();
    candidates.push(f64::NEG_INFINITY);
    candidates.push(f64::INFINITY);
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for &thr in &candidates {
        let mut tp = 0.0;
        let mut fp = 0.0;
        for (&s, &l) in scores.iter().zip(labels) {
            if s >= thr {
                if l == 1 {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        let (tpr, fpr) = (tp / pos, fp / neg);
        let g = (tpr * (1.0 - fpr)).sqrt();
        if g > best.0 {
            best = (g, fpr, tpr);
        }
    }
    best
}

/// Random labeled score set; `quantize` forces ties.
pub fn random_labeled_set(rng: &mut Rng, max_n: usize, quantize: bool) -> (Vec<f64>, Vec<u8>) {
    let n = 2 + rng.below(max_n as u64 - 2) as usize;
    loop {
        let mut scores = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let mut s = rng.uniform();
            if quantize {
                s = (s * 8.0).round() / 8.0;
            }
            scores.push(s);
            labels.push(rng.below(2) as u8);
        }
        if labels.contains(&0) && labels.contains(&1) {
            return (scores, labels);
        }
    }
}
