//! Binary real-vs-reconstruction discriminator: the encoder conv stack plus a
//! single-logit head. Output convention: sigmoid(logit) = P(fake/OOD), so real
//! images train toward 0 and reconstructions toward 1.

use super::stages::{
    down_backward, down_eval, down_names, down_train, init_down, init_linear, is_trainable,
    linear_bwd, linear_fwd, linear_names, DownCache,
};
use super::ArchConfig;
use crate::error::{Error, Result};
use crate::nn::{sigmoid, ConvSpec, ParamSet};
use crate::rng::Rng;
use crate::tensor::{Element, Tensor};

pub struct Discriminator<T: Element = f32> {
    pub cfg: ArchConfig,
    pub params: ParamSet<T>,
}

/// Forward activations recorded by the train-mode logits pass.
pub struct DiscTape<T: Element = f32> {
    stages: Vec<DownCache<T>>,
    flat: Tensor<T>,
}

impl<T: Element> Discriminator<T> {
    pub fn init(cfg: ArchConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamSet::new();
        let ch = cfg.enc_channels();
        for i in 0..cfg.depth {
            init_down(
                &mut params,
                rng,
                &format!("disc.conv{i}"),
                ConvSpec::down(ch[i], ch[i + 1]),
            );
        }
        init_linear(&mut params, rng, "disc.head", cfg.bottleneck_features(), 1);
        Ok(Discriminator { cfg, params })
    }

    pub fn from_params(cfg: ArchConfig, params: ParamSet<T>) -> Result<Self> {
        cfg.validate()?;
        let names = Self::param_names(&cfg);
        params.check_directory(names.iter().map(|s| s.as_str()))?;
        Ok(Discriminator { cfg, params })
    }

    pub fn param_names(cfg: &ArchConfig) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..cfg.depth {
            down_names(&format!("disc.conv{i}"), &mut names);
        }
        linear_names("disc.head", &mut names);
        names
    }

    pub fn trainable_names(cfg: &ArchConfig) -> Vec<String> {
        Self::param_names(cfg)
            .into_iter()
            .filter(|n| is_trainable(n))
            .collect()
    }

    fn spec(&self, i: usize) -> ConvSpec {
        let ch = self.cfg.enc_channels();
        ConvSpec::down(ch[i], ch[i + 1])
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let [_, c, h, w] = x.dims4("discriminator_forward")?;
        let s = self.cfg.image_size;
        if c != self.cfg.in_channels || h != s || w != s {
            return Err(Error::dim(
                "discriminator_forward",
                format!(
                    "input {:?} does not match configured {}x{s}x{s}",
                    x.shape(),
                    self.cfg.in_channels
                ),
            ));
        }
        Ok(())
    }

    /// Eval-mode logit (running batch-norm statistics; pure function).
    pub fn logits_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let n = x.shape()[0];
        let mut h = x.clone();
        for i in 0..self.cfg.depth {
            h = down_eval(&self.params, &format!("disc.conv{i}"), self.spec(i), &h)?;
        }
        let flat = h.reshape(&[n, self.cfg.bottleneck_features()])?;
        linear_fwd(&self.params, "disc.head", &flat)
    }

    /// Per-sample P(fake/OOD) in eval mode, shape (N, 1).
    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(sigmoid(&self.logits_eval(x)?))
    }

    /// Train-mode logits with taped activations (batch statistics).
    pub fn logits_train(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, DiscTape<T>)> {
        self.check_input(x)?;
        let n = x.shape()[0];
        let mut stages = Vec::with_capacity(self.cfg.depth);
        let mut h = x.clone();
        for i in 0..self.cfg.depth {
            let spec = self.spec(i);
            let (out, cache) = down_train(&mut self.params, &format!("disc.conv{i}"), spec, h)?;
            stages.push(cache);
            h = out;
        }
        let flat = h.reshape(&[n, self.cfg.bottleneck_features()])?;
        let logits = linear_fwd(&self.params, "disc.head", &flat)?;
        Ok((logits, DiscTape { stages, flat }))
    }

    /// Train-mode P(fake/OOD).
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(sigmoid(&self.logits_train(x)?.0))
    }

    pub fn backward(&self, tape: &DiscTape<T>, d_logits: &Tensor<T>) -> Result<ParamSet<T>> {
        let mut grads = ParamSet::new();
        let d_flat = linear_bwd(&self.params, "disc.head", &tape.flat, d_logits, &mut grads)?;
        let s = self.cfg.bottleneck_spatial();
        let mut d =
            d_flat.reshape(&[tape.flat.shape()[0], self.cfg.bottleneck_channels(), s, s])?;
        for i in (0..self.cfg.depth).rev() {
            d = down_backward(
                &self.params,
                &format!("disc.conv{i}"),
                self.spec(i),
                &tape.stages[i],
                &d,
                &mut grads,
            )?;
        }
        Ok(grads)
    }
}
