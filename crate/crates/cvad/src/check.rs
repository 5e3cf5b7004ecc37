//! Finite-difference utilities for gradient verification.
//!
//! These helpers only evaluate a user-supplied scalar function at perturbed
//! inputs; they share no code with the analytic backward passes they are used
//! to check. Intended for 64-bit verification runs in the test suites.

use crate::tensor::Tensor;

/// Central-difference derivative of `f` with respect to element `idx` of `x`.
pub fn central_difference<F>(x: &Tensor<f64>, idx: usize, step: f64, mut f: F) -> f64
where
    F: FnMut(&Tensor<f64>) -> f64,
{
    let mut xp = x.clone();
    xp.data_mut()[idx] += step;
    let fp = f(&xp);
    let mut xm = x.clone();
    xm.data_mut()[idx] -= step;
    let fm = f(&xm);
    (fp - fm) / (2.0 * step)
}

/// Full numerical gradient of `f` at `x`.
pub fn numerical_gradient<F>(x: &Tensor<f64>, step: f64, mut f: F) -> Tensor<f64>
where
    F: FnMut(&Tensor<f64>) -> f64,
{
    let mut grad = Tensor::zeros(x.shape());
    for idx in 0..x.len() {
        grad.data_mut()[idx] = central_difference(x, idx, step, &mut f);
    }
    grad
}

/// Relative error with an absolute floor, so near-zero gradients do not
/// inflate the ratio.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / floor.max(a.abs()).max(b.abs())
}

/// Maximum relative error between an analytic gradient and a numerical one.
pub fn max_relative_error(analytic: &Tensor<f64>, numeric: &Tensor<f64>, floor: f64) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape(), "gradient shape mismatch");
    analytic
        .data()
        .iter()
        .zip(numeric.data().iter())
        .map(|(&a, &n)| relative_error(a, n, floor))
        .fold(0.0, f64::max)
}

/// Default step for 64-bit central differences.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Default floor under which gradient entries are compared absolutely.
pub const DEFAULT_FLOOR: f64 = 1e-6;
