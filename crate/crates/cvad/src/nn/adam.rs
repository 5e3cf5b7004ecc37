//! Adam with bias correction.

use std::collections::BTreeMap;

use super::params::ParamSet;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct AdamState<T: Element = f32> {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first: BTreeMap<String, Tensor<T>>,
    second: BTreeMap<String, Tensor<T>>,
}

impl<T: Element> AdamState<T> {
    pub fn new(lr: f64) -> Self {
        AdamState {
            step: 0,
            lr,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPS,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }
}

/// One Adam update over every gradient in `grads`. Parameters without a
/// gradient (e.g. batch-norm running statistics) are left untouched.
pub fn adam_step<T: Element>(
    params: &mut ParamSet<T>,
    grads: &ParamSet<T>,
    state: &mut AdamState<T>,
) -> Result<()> {
    for (name, grad) in grads.iter() {
        if !grad.all_finite() {
            return Err(Error::Optimizer {
                param: name.to_string(),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = T::from_f64(1.0 / (1.0 - state.beta1.powi(t)));
    let bc2 = T::from_f64(1.0 / (1.0 - state.beta2.powi(t)));
    let b1 = T::from_f64(state.beta1);
    let b2 = T::from_f64(state.beta2);
    let one_m_b1 = T::ONE - b1;
    let one_m_b2 = T::ONE - b2;
    let lr = T::from_f64(state.lr);
    let eps = T::from_f64(state.epsilon);

    for (name, grad) in grads.iter() {
        let param = params.get_mut(name)?;
        if param.shape() != grad.shape() {
            return Err(Error::dim(
                "adam_step",
                format!(
                    "grad {:?} vs param {:?} for `{name}`",
                    grad.shape(),
                    param.shape()
                ),
            ));
        }
        let m = state
            .first
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(grad.shape()));
        let v = state
            .second
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(grad.shape()));
        for ((p, &g), (m, v)) in param
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
        {
            *m = b1 * *m + one_m_b1 * g;
            *v = b2 * *v + one_m_b2 * g * g;
            let m_hat = *m * bc1;
            let v_hat = *v * bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_setup(theta: f32) -> (ParamSet<f32>, AdamState<f32>) {
        let mut p = ParamSet::new();
        p.insert("theta", Tensor::scalar(theta));
        (p, AdamState::new(0.001))
    }

    #[test]
    fn first_step_matches_closed_form() {
        // theta=1, g=1: m_hat=1, v_hat=1, update = lr / (1 + eps) ~ lr.
        let (mut p, mut st) = scalar_setup(1.0);
        let mut g = ParamSet::new();
        g.insert("theta", Tensor::scalar(1.0f32));
        adam_step(&mut p, &g, &mut st).unwrap();
        let theta = p.get("theta").unwrap().data()[0];
        assert!((theta - 0.999).abs() < 1e-6, "theta {theta}");
        assert_eq!(st.step, 1);
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let (mut p, mut st) = scalar_setup(0.75);
        let mut g = ParamSet::new();
        g.insert("theta", Tensor::scalar(0.0f32));
        for _ in 0..10 {
            adam_step(&mut p, &g, &mut st).unwrap();
        }
        assert_eq!(p.get("theta").unwrap().data()[0], 0.75);
    }

    #[test]
    fn deterministic_across_runs() {
        let run = || {
            let (mut p, mut st) = scalar_setup(0.5);
            for k in 0..25 {
                let mut g = ParamSet::new();
                g.insert("theta", Tensor::scalar((k as f32 * 0.37).sin()));
                adam_step(&mut p, &g, &mut st).unwrap();
            }
            p.get("theta").unwrap().data()[0].to_bits()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let (mut p, mut st) = scalar_setup(1.0);
        let mut g = ParamSet::new();
        g.insert("theta", Tensor::scalar(f32::NAN));
        let err = adam_step(&mut p, &g, &mut st).unwrap_err();
        assert!(err.to_string().contains("theta"));
    }
}
