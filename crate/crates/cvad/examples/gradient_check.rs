//! Finite-difference verification of the layer kernels at 64-bit precision.
//!
//! ```bash
//! cargo run --release -p cvad --example gradient_check
//! ```

use cvad::check::{max_relative_error, numerical_gradient, DEFAULT_FLOOR, DEFAULT_STEP};
use cvad::losses::{bce_logits_grad, kl_divergence, kl_grads, reconstruction_nll};
use cvad::nn::{
    batch_norm_backward, batch_norm_train, conv_down_backward, conv_down_forward, linear_backward,
    linear_forward, ConvSpec,
};
use cvad::rng::Rng;
use cvad::tensor::Tensor;

fn randn(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.normal();
    }
    t
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn report(name: &str, err: f64) {
    let verdict = if err <= 1e-5 { "ok" } else { "FAIL" };
    println!("{name:<28} max rel err {err:9.3e}   {verdict}");
}

fn main() {
    let mut rng = Rng::new(123);

    // conv_down, objective = <out, proj>
    let spec = ConvSpec::down(2, 3);
    let x = randn(&mut rng, &[2, 2, 8, 8]);
    let w = randn(&mut rng, &spec.weight_shape());
    let b = randn(&mut rng, &[3]);
    let proj = randn(&mut rng, &[2, 3, 4, 4]);
    let grads = conv_down_backward(&x, &spec, &w, &proj).unwrap();
    let num = numerical_gradient(&w, DEFAULT_STEP, |t| {
        dot(&conv_down_forward(&x, &spec, t, &b).unwrap(), &proj)
    });
    report(
        "conv_down / weight",
        max_relative_error(&grads.weight, &num, DEFAULT_FLOOR),
    );
    let num = numerical_gradient(&x, DEFAULT_STEP, |t| {
        dot(&conv_down_forward(t, &spec, &w, &b).unwrap(), &proj)
    });
    report(
        "conv_down / input",
        max_relative_error(&grads.input, &num, DEFAULT_FLOOR),
    );

    // linear
    let x = randn(&mut rng, &[3, 6]);
    let w = randn(&mut rng, &[6, 4]);
    let b = randn(&mut rng, &[4]);
    let proj = randn(&mut rng, &[3, 4]);
    let grads = linear_backward(&x, &w, &proj).unwrap();
    let num = numerical_gradient(&w, DEFAULT_STEP, |t| {
        dot(&linear_forward(&x, t, &b).unwrap(), &proj)
    });
    report(
        "linear / weight",
        max_relative_error(&grads.weight, &num, DEFAULT_FLOOR),
    );

    // batch norm (train mode)
    let x = randn(&mut rng, &[4, 2, 5, 5]);
    let gamma = randn(&mut rng, &[2]).map(|v| v * 0.2 + 1.0);
    let beta = randn(&mut rng, &[2]);
    let proj = randn(&mut rng, &[4, 2, 5, 5]);
    let run = |x: &Tensor<f64>, g: &Tensor<f64>, b: &Tensor<f64>| {
        let mut rm = Tensor::zeros(&[2]);
        let mut rv = Tensor::filled(&[2], 1.0);
        batch_norm_train(x, g, b, &mut rm, &mut rv).unwrap().0
    };
    let (_, cache) = {
        let mut rm = Tensor::zeros(&[2]);
        let mut rv = Tensor::filled(&[2], 1.0);
        batch_norm_train(&x, &gamma, &beta, &mut rm, &mut rv).unwrap()
    };
    let grads = batch_norm_backward(&cache, &gamma, &proj).unwrap();
    let num = numerical_gradient(&x, DEFAULT_STEP, |t| dot(&run(t, &gamma, &beta), &proj));
    report(
        "batch_norm / input",
        max_relative_error(&grads.input, &num, DEFAULT_FLOOR),
    );

    // reconstruction NLL wrt logits
    let logits = randn(&mut rng, &[2, 1, 4, 4]);
    let mut target = Tensor::zeros(&[2, 1, 4, 4]);
    for v in target.data_mut() {
        *v = rng.uniform();
    }
    let analytic = bce_logits_grad(&logits, &target, &[1.0, 1.0]);
    let num = numerical_gradient(&logits, DEFAULT_STEP, |t| {
        reconstruction_nll(t, &target).unwrap().iter().sum()
    });
    report(
        "reconstruction / logits",
        max_relative_error(&analytic, &num, DEFAULT_FLOOR),
    );

    // KL wrt mu
    let mu = randn(&mut rng, &[2, 6]);
    let logvar = randn(&mut rng, &[2, 6]);
    let (dmu, _) = kl_grads(&mu, &logvar, &[1.0, 1.0]);
    let num = numerical_gradient(&mu, DEFAULT_STEP, |t| {
        kl_divergence(t, &logvar).unwrap().iter().sum()
    });
    report("kl / mu", max_relative_error(&dmu, &num, DEFAULT_FLOOR));

    println!("\nThe full per-parameter sweep (including the end-to-end cascade check)");
    println!("runs in the test suite: cargo test -p cvad --test gradients");
}
