//! Cascade generator: primary VAE plus a branch VAE fed by the concatenated
//! encoder/decoder feature taps.

use super::stages::{
    down_backward, down_eval, down_names, down_train, init_down, init_linear, init_up,
    is_trainable, linear_bwd, linear_fwd, linear_names, up_backward, up_eval, up_names, up_train,
    DownCache, UpCache,
};
use super::ArchConfig;
use crate::error::{Error, Result};
use crate::nn::{avg_pool2, avg_pool2_backward, sigmoid_scalar, ConvSpec, ParamSet};
use crate::rng::Rng;
use crate::tensor::{Element, Tensor};

/// One latent draw: z = mu + exp(0.5 * logvar) * eps for the recorded eps.
#[derive(Clone, Debug)]
pub struct LatentSample<T: Element = f32> {
    pub mu: Tensor<T>,
    pub logvar: Tensor<T>,
    pub z: Tensor<T>,
}

/// Full generator output. `x2_logits`/`latent2` are `None` when the branch is
/// disabled, in which case the branch reconstruction is identically zero and
/// `x_recon = sigmoid(x1_logits)`.
#[derive(Clone, Debug)]
pub struct GeneratorOutput<T: Element = f32> {
    pub x1_logits: Tensor<T>,
    pub x2_logits: Option<Tensor<T>>,
    pub x_recon: Tensor<T>,
    pub latent1: LatentSample<T>,
    pub latent2: Option<LatentSample<T>>,
}

/// z = mu + exp(0.5 * logvar) * eps. The noise is always supplied by the
/// caller; zero noise gives the deterministic posterior-mean mode.
pub fn reparameterize<T: Element>(
    mu: &Tensor<T>,
    logvar: &Tensor<T>,
    eps: &Tensor<T>,
) -> Tensor<T> {
    assert_eq!(mu.shape(), logvar.shape());
    assert_eq!(mu.shape(), eps.shape());
    let half = T::from_f64(0.5);
    let mut z = Tensor::zeros(mu.shape());
    for (((zv, &m), &lv), &e) in z
        .data_mut()
        .iter_mut()
        .zip(mu.data())
        .zip(logvar.data())
        .zip(eps.data())
    {
        *zv = m + (half * lv).exp() * e;
    }
    z
}

fn reparameterize_backward<T: Element>(
    dz: &Tensor<T>,
    logvar: &Tensor<T>,
    eps: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>) {
    let half = T::from_f64(0.5);
    let dmu = dz.clone();
    let mut dlv = Tensor::zeros(logvar.shape());
    for ((d, (&g, &lv)), &e) in dlv
        .data_mut()
        .iter_mut()
        .zip(dz.data().iter().zip(logvar.data()))
        .zip(eps.data())
    {
        *d = g * half * (half * lv).exp() * e;
    }
    (dmu, dlv)
}

/// Combined reconstruction used everywhere the two logit maps meet.
pub fn combine_logits<T: Element>(x1: &Tensor<T>, x2: Option<&Tensor<T>>) -> Tensor<T> {
    match x2 {
        Some(x2) => {
            assert_eq!(x1.shape(), x2.shape());
            let mut out = Tensor::zeros(x1.shape());
            for ((o, &a), &b) in out.data_mut().iter_mut().zip(x1.data()).zip(x2.data()) {
                *o = sigmoid_scalar(a + b);
            }
            out
        }
        None => x1.map(sigmoid_scalar),
    }
}

/// Upstream loss gradients feeding [`Generator::backward`].
pub struct GeneratorLossGrads<T: Element = f32> {
    pub d_x1_logits: Tensor<T>,
    pub d_mu1: Tensor<T>,
    pub d_logvar1: Tensor<T>,
    pub d_x2_logits: Option<Tensor<T>>,
    pub d_mu2: Option<Tensor<T>>,
    pub d_logvar2: Option<Tensor<T>>,
}

/// Forward activations recorded by the training pass.
pub struct GeneratorTape<T: Element = f32> {
    enc: Vec<DownCache<T>>,
    flat: Tensor<T>,
    eps1: Tensor<T>,
    logvar1: Tensor<T>,
    z1: Tensor<T>,
    dec: Vec<UpCache<T>>,
    branch: Option<BranchTape<T>>,
}

struct BranchTape<T: Element> {
    pool_shapes: Vec<Vec<usize>>,
    e2: DownCache<T>,
    e2_flat: Tensor<T>,
    eps2: Tensor<T>,
    logvar2: Tensor<T>,
    z2: Tensor<T>,
    dec: Vec<UpCache<T>>,
}

pub struct Generator<T: Element = f32> {
    pub cfg: ArchConfig,
    pub params: ParamSet<T>,
}

impl<T: Element> Generator<T> {
    pub fn init(cfg: ArchConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamSet::new();
        let enc = cfg.enc_channels();
        for i in 0..cfg.depth {
            init_down(
                &mut params,
                rng,
                &format!("gen.enc{i}"),
                ConvSpec::down(enc[i], enc[i + 1]),
            );
        }
        let feat = cfg.bottleneck_features();
        init_linear(&mut params, rng, "gen.mu", feat, cfg.latent_dim);
        init_linear(&mut params, rng, "gen.logvar", feat, cfg.latent_dim);
        init_linear(&mut params, rng, "gen.dec_in", cfg.latent_dim, feat);
        let dec = cfg.dec_channels();
        for i in 0..cfg.depth {
            let with_bn = i + 1 < cfg.depth;
            init_up(
                &mut params,
                rng,
                &format!("gen.dec{i}"),
                ConvSpec::up(dec[i], dec[i + 1]),
                with_bn,
            );
        }
        if cfg.branch_enabled {
            init_down(
                &mut params,
                rng,
                "gen.br_enc",
                ConvSpec::down(cfg.branch_in_channels(), cfg.branch_channels),
            );
            let bfeat = cfg.branch_flat_features();
            let bk = cfg.branch_latent_dim();
            init_linear(&mut params, rng, "gen.br_mu", bfeat, bk);
            init_linear(&mut params, rng, "gen.br_logvar", bfeat, bk);
            init_linear(&mut params, rng, "gen.br_dec_in", bk, feat);
            for i in 0..cfg.depth {
                let with_bn = i + 1 < cfg.depth;
                init_up(
                    &mut params,
                    rng,
                    &format!("gen.br_dec{i}"),
                    ConvSpec::up(dec[i], dec[i + 1]),
                    with_bn,
                );
            }
        }
        Ok(Generator { cfg, params })
    }

    /// Wrap an existing parameter directory, validating it is exactly the
    /// closed set the architecture expects.
    pub fn from_params(cfg: ArchConfig, params: ParamSet<T>) -> Result<Self> {
        cfg.validate()?;
        let names = Self::param_names(&cfg);
        params.check_directory(names.iter().map(|s| s.as_str()))?;
        Ok(Generator { cfg, params })
    }

    /// The closed parameter directory of this architecture.
    pub fn param_names(cfg: &ArchConfig) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..cfg.depth {
            down_names(&format!("gen.enc{i}"), &mut names);
        }
        linear_names("gen.mu", &mut names);
        linear_names("gen.logvar", &mut names);
        linear_names("gen.dec_in", &mut names);
        for i in 0..cfg.depth {
            up_names(&format!("gen.dec{i}"), i + 1 < cfg.depth, &mut names);
        }
        if cfg.branch_enabled {
            down_names("gen.br_enc", &mut names);
            linear_names("gen.br_mu", &mut names);
            linear_names("gen.br_logvar", &mut names);
            linear_names("gen.br_dec_in", &mut names);
            for i in 0..cfg.depth {
                up_names(&format!("gen.br_dec{i}"), i + 1 < cfg.depth, &mut names);
            }
        }
        names
    }

    /// Names of the optimized parameters (running stats excluded).
    pub fn trainable_names(cfg: &ArchConfig) -> Vec<String> {
        Self::param_names(cfg)
            .into_iter()
            .filter(|n| is_trainable(n))
            .collect()
    }

    fn check_input(&self, x: &Tensor<T>, op: &'static str) -> Result<()> {
        let [_, c, h, w] = x.dims4(op)?;
        let s = self.cfg.image_size;
        if c != self.cfg.in_channels || h != s || w != s {
            return Err(Error::dim(
                op,
                format!(
                    "input {:?} does not match configured {}x{}x{} (C x H x W)",
                    x.shape(),
                    self.cfg.in_channels,
                    s,
                    s
                ),
            ));
        }
        Ok(())
    }

    fn enc_spec(&self, i: usize) -> ConvSpec {
        let ch = self.cfg.enc_channels();
        ConvSpec::down(ch[i], ch[i + 1])
    }

    fn dec_spec(&self, i: usize) -> ConvSpec {
        let ch = self.cfg.dec_channels();
        ConvSpec::up(ch[i], ch[i + 1])
    }

    fn e2_spec(&self) -> ConvSpec {
        ConvSpec::down(self.cfg.branch_in_channels(), self.cfg.branch_channels)
    }

    /// Draw latent noise tensors for a batch of `n` samples.
    pub fn draw_eps(&self, n: usize, rng: &mut Rng) -> (Tensor<T>, Option<Tensor<T>>) {
        let mut eps1 = Tensor::zeros(&[n, self.cfg.latent_dim]);
        for v in eps1.data_mut() {
            *v = T::from_f64(rng.normal());
        }
        let eps2 = self.cfg.branch_enabled.then(|| {
            let mut e = Tensor::zeros(&[n, self.cfg.branch_latent_dim()]);
            for v in e.data_mut() {
                *v = T::from_f64(rng.normal());
            }
            e
        });
        (eps1, eps2)
    }

    // ---- eval-mode pieces -------------------------------------------------

    /// Primary encoder: latent statistics plus the E11 tap activation.
    pub fn encode_primary(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
        self.check_input(x, "encode_primary")?;
        let split = self.cfg.e11_stages();
        let mut h = x.clone();
        for i in 0..split {
            h = down_eval(&self.params, &format!("gen.enc{i}"), self.enc_spec(i), &h)?;
        }
        let e11 = h.clone();
        for i in split..self.cfg.depth {
            h = down_eval(&self.params, &format!("gen.enc{i}"), self.enc_spec(i), &h)?;
        }
        let n = x.shape()[0];
        let flat = h.reshape(&[n, self.cfg.bottleneck_features()])?;
        let mu = linear_fwd(&self.params, "gen.mu", &flat)?;
        let logvar = linear_fwd(&self.params, "gen.logvar", &flat)?;
        Ok((mu, logvar, e11))
    }

    /// Primary decoder: full-resolution logits plus the D11 tap activation.
    pub fn decode_primary(&self, z1: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let [n, k] = z1.dims2("decode_primary")?;
        if k != self.cfg.latent_dim {
            return Err(Error::dim(
                "decode_primary",
                format!("latent width {k}, configured K = {}", self.cfg.latent_dim),
            ));
        }
        let s = self.cfg.bottleneck_spatial();
        let flat = linear_fwd(&self.params, "gen.dec_in", z1)?;
        let mut h = flat.reshape(&[n, self.cfg.bottleneck_channels(), s, s])?;
        let split = self.cfg.d11_stages();
        for i in 0..split {
            h = up_eval(
                &self.params,
                &format!("gen.dec{i}"),
                self.dec_spec(i),
                &h,
                true,
            )?;
        }
        let d11 = h.clone();
        for i in split..self.cfg.depth {
            let with_bn = i + 1 < self.cfg.depth;
            h = up_eval(
                &self.params,
                &format!("gen.dec{i}"),
                self.dec_spec(i),
                &h,
                with_bn,
            )?;
        }
        Ok((h, d11))
    }

    /// Branch input f(x): pool the D11 feature down to the E11 extent, then
    /// concatenate along channels (E11 channels first).
    pub fn branch_input(&self, e11: &Tensor<T>, d11: &Tensor<T>) -> Result<Tensor<T>> {
        let [n, c1, h1, w1] = e11.dims4("branch_input")?;
        let [n2, _, h2, _] = d11.dims4("branch_input")?;
        if n != n2 {
            return Err(Error::dim("branch_input", "batch axes differ".to_string()));
        }
        let mut pooled = d11.clone();
        while pooled.shape()[2] > h1 {
            if !pooled.shape()[2].is_multiple_of(2) {
                break;
            }
            pooled = avg_pool2(&pooled)?;
        }
        if pooled.shape()[2] != h1 || pooled.shape()[3] != w1 {
            return Err(Error::dim(
                "branch_input",
                format!("cannot pool {h2} down to {h1} by factors of 2"),
            ));
        }
        let c2 = pooled.shape()[1];
        let mut f = Tensor::zeros(&[n, c1 + c2, h1, w1]);
        let plane = h1 * w1;
        for i in 0..n {
            let dst = &mut f.data_mut()[i * (c1 + c2) * plane..(i + 1) * (c1 + c2) * plane];
            dst[..c1 * plane].copy_from_slice(&e11.data()[i * c1 * plane..(i + 1) * c1 * plane]);
            dst[c1 * plane..].copy_from_slice(&pooled.data()[i * c2 * plane..(i + 1) * c2 * plane]);
        }
        Ok(f)
    }

    /// Branch encoder: one conv stage, flatten, linear heads of width 4K.
    pub fn encode_branch(&self, f: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        if !self.cfg.branch_enabled {
            return Err(Error::State(
                "branch is disabled in this configuration".into(),
            ));
        }
        let n = f.shape()[0];
        let h = down_eval(&self.params, "gen.br_enc", self.e2_spec(), f)?;
        let flat = h.reshape(&[n, self.cfg.branch_flat_features()])?;
        let mu = linear_fwd(&self.params, "gen.br_mu", &flat)?;
        let logvar = linear_fwd(&self.params, "gen.br_logvar", &flat)?;
        Ok((mu, logvar))
    }

    /// Branch decoder: its own linear head plus a full decoder stack.
    pub fn decode_branch(&self, z2: &Tensor<T>) -> Result<Tensor<T>> {
        if !self.cfg.branch_enabled {
            return Err(Error::State(
                "branch is disabled in this configuration".into(),
            ));
        }
        let [n, k] = z2.dims2("decode_branch")?;
        if k != self.cfg.branch_latent_dim() {
            return Err(Error::dim(
                "decode_branch",
                format!(
                    "latent width {k}, configured 4K = {}",
                    self.cfg.branch_latent_dim()
                ),
            ));
        }
        let s = self.cfg.bottleneck_spatial();
        let flat = linear_fwd(&self.params, "gen.br_dec_in", z2)?;
        let mut h = flat.reshape(&[n, self.cfg.bottleneck_channels(), s, s])?;
        for i in 0..self.cfg.depth {
            let with_bn = i + 1 < self.cfg.depth;
            h = up_eval(
                &self.params,
                &format!("gen.br_dec{i}"),
                self.dec_spec(i),
                &h,
                with_bn,
            )?;
        }
        Ok(h)
    }

    /// Deterministic-capable forward pass (batch-norm uses running stats).
    /// `None` noise selects posterior-mean mode (z = mu).
    pub fn forward_eval(
        &self,
        x: &Tensor<T>,
        eps1: Option<&Tensor<T>>,
        eps2: Option<&Tensor<T>>,
    ) -> Result<GeneratorOutput<T>> {
        let (mu1, logvar1, e11) = self.encode_primary(x)?;
        let z1 = match eps1 {
            Some(e) => reparameterize(&mu1, &logvar1, e),
            None => mu1.clone(),
        };
        let (x1_logits, d11) = self.decode_primary(&z1)?;
        let latent1 = LatentSample {
            mu: mu1,
            logvar: logvar1,
            z: z1,
        };

        if !self.cfg.branch_enabled {
            let x_recon = combine_logits(&x1_logits, None);
            return Ok(GeneratorOutput {
                x1_logits,
                x2_logits: None,
                x_recon,
                latent1,
                latent2: None,
            });
        }

        let f = self.branch_input(&e11, &d11)?;
        let (mu2, logvar2) = self.encode_branch(&f)?;
        let z2 = match eps2 {
            Some(e) => reparameterize(&mu2, &logvar2, e),
            None => mu2.clone(),
        };
        let x2_logits = self.decode_branch(&z2)?;
        let x_recon = combine_logits(&x1_logits, Some(&x2_logits));
        Ok(GeneratorOutput {
            x1_logits,
            x2_logits: Some(x2_logits),
            x_recon,
            latent1,
            latent2: Some(LatentSample {
                mu: mu2,
                logvar: logvar2,
                z: z2,
            }),
        })
    }

    // ---- training pass ------------------------------------------------------

    /// Train-mode forward: batch-norm uses batch statistics and updates
    /// running stats; all activations needed by [`Self::backward`] are taped.
    pub fn forward_train(
        &mut self,
        x: &Tensor<T>,
        eps1: &Tensor<T>,
        eps2: Option<&Tensor<T>>,
    ) -> Result<(GeneratorOutput<T>, GeneratorTape<T>)> {
        self.check_input(x, "generator_forward")?;
        let n = x.shape()[0];
        let depth = self.cfg.depth;
        let e11_split = self.cfg.e11_stages();
        let d11_split = self.cfg.d11_stages();

        let mut enc = Vec::with_capacity(depth);
        let mut h = x.clone();
        let mut e11 = None;
        for i in 0..depth {
            if i == e11_split {
                e11 = Some(h.clone());
            }
            let spec = self.enc_spec(i);
            let (out, cache) = down_train(&mut self.params, &format!("gen.enc{i}"), spec, h)?;
            enc.push(cache);
            h = out;
        }
        let flat = h.reshape(&[n, self.cfg.bottleneck_features()])?;
        let mu1 = linear_fwd(&self.params, "gen.mu", &flat)?;
        let logvar1 = linear_fwd(&self.params, "gen.logvar", &flat)?;
        let z1 = reparameterize(&mu1, &logvar1, eps1);

        let s = self.cfg.bottleneck_spatial();
        let dec_in = linear_fwd(&self.params, "gen.dec_in", &z1)?;
        let mut h = dec_in.reshape(&[n, self.cfg.bottleneck_channels(), s, s])?;
        let mut dec = Vec::with_capacity(depth);
        let mut d11 = None;
        for i in 0..depth {
            if i == d11_split {
                d11 = Some(h.clone());
            }
            let with_bn = i + 1 < depth;
            let spec = self.dec_spec(i);
            let (out, cache) =
                up_train(&mut self.params, &format!("gen.dec{i}"), spec, h, with_bn)?;
            dec.push(cache);
            h = out;
        }
        let x1_logits = h;
        let latent1 = LatentSample {
            mu: mu1,
            logvar: logvar1.clone(),
            z: z1.clone(),
        };

        if !self.cfg.branch_enabled {
            let x_recon = combine_logits(&x1_logits, None);
            let out = GeneratorOutput {
                x1_logits,
                x2_logits: None,
                x_recon,
                latent1,
                latent2: None,
            };
            let tape = GeneratorTape {
                enc,
                flat,
                eps1: eps1.clone(),
                logvar1,
                z1,
                dec,
                branch: None,
            };
            return Ok((out, tape));
        }

        let eps2 = eps2.ok_or_else(|| {
            Error::State("branch enabled but no branch noise supplied".to_string())
        })?;
        let e11 = e11.expect("e11 split below depth");
        let d11 = d11.expect("d11 split below depth");

        let mut pool_shapes = Vec::new();
        let mut pooled = d11;
        let target = self.cfg.e11_spatial();
        while pooled.shape()[2] > target {
            pool_shapes.push(pooled.shape().to_vec());
            pooled = avg_pool2(&pooled)?;
        }
        let f = self.branch_input(&e11, &pooled)?;

        let e2_spec = self.e2_spec();
        let (e2_out, e2_cache) = down_train(&mut self.params, "gen.br_enc", e2_spec, f)?;
        let e2_flat = e2_out.reshape(&[n, self.cfg.branch_flat_features()])?;
        let mu2 = linear_fwd(&self.params, "gen.br_mu", &e2_flat)?;
        let logvar2 = linear_fwd(&self.params, "gen.br_logvar", &e2_flat)?;
        let z2 = reparameterize(&mu2, &logvar2, eps2);

        let br_in = linear_fwd(&self.params, "gen.br_dec_in", &z2)?;
        let mut h = br_in.reshape(&[n, self.cfg.bottleneck_channels(), s, s])?;
        let mut br_dec = Vec::with_capacity(depth);
        for i in 0..depth {
            let with_bn = i + 1 < depth;
            let spec = self.dec_spec(i);
            let (out, cache) = up_train(
                &mut self.params,
                &format!("gen.br_dec{i}"),
                spec,
                h,
                with_bn,
            )?;
            br_dec.push(cache);
            h = out;
        }
        let x2_logits = h;

        let x_recon = combine_logits(&x1_logits, Some(&x2_logits));
        let out = GeneratorOutput {
            x1_logits,
            x2_logits: Some(x2_logits),
            x_recon,
            latent1,
            latent2: Some(LatentSample {
                mu: mu2,
                logvar: logvar2.clone(),
                z: z2.clone(),
            }),
        };
        let tape = GeneratorTape {
            enc,
            flat,
            eps1: eps1.clone(),
            logvar1,
            z1,
            dec,
            branch: Some(BranchTape {
                pool_shapes,
                e2: e2_cache,
                e2_flat,
                eps2: eps2.clone(),
                logvar2,
                z2,
                dec: br_dec,
            }),
        };
        Ok((out, tape))
    }

    /// Backprop through the taped forward pass. Returns gradients for every
    /// trainable parameter; the gradient with respect to the input image is
    /// discarded.
    pub fn backward(
        &self,
        tape: &GeneratorTape<T>,
        up: &GeneratorLossGrads<T>,
    ) -> Result<ParamSet<T>> {
        let depth = self.cfg.depth;
        let e11_split = self.cfg.e11_stages();
        let d11_split = self.cfg.d11_stages();
        let n = tape.flat.shape()[0];
        let s = self.cfg.bottleneck_spatial();
        let mut grads = ParamSet::new();

        // Branch first: its gradient enters the main path at the two taps.
        let (mut d_e11_branch, mut d_d11_branch) = (None, None);
        if let Some(branch) = &tape.branch {
            let d_x2 = up
                .d_x2_logits
                .as_ref()
                .ok_or_else(|| Error::State("missing branch logit gradient".into()))?;
            let mut d = d_x2.clone();
            for i in (0..depth).rev() {
                d = up_backward(
                    &self.params,
                    &format!("gen.br_dec{i}"),
                    self.dec_spec(i),
                    &branch.dec[i],
                    &d,
                    &mut grads,
                )?;
            }
            let d_flat = d.reshape(&[n, self.cfg.bottleneck_features()])?;
            let d_z2 = linear_bwd(
                &self.params,
                "gen.br_dec_in",
                &branch.z2,
                &d_flat,
                &mut grads,
            )?;
            let (dmu_z, dlv_z) = reparameterize_backward(&d_z2, &branch.logvar2, &branch.eps2);
            let mut d_mu2 = dmu_z;
            let mut d_lv2 = dlv_z;
            if let Some(dm) = &up.d_mu2 {
                d_mu2.add_assign_tensor(dm);
            }
            if let Some(dl) = &up.d_logvar2 {
                d_lv2.add_assign_tensor(dl);
            }
            let mut d_e2_flat = linear_bwd(
                &self.params,
                "gen.br_mu",
                &branch.e2_flat,
                &d_mu2,
                &mut grads,
            )?;
            let d_from_lv = linear_bwd(
                &self.params,
                "gen.br_logvar",
                &branch.e2_flat,
                &d_lv2,
                &mut grads,
            )?;
            d_e2_flat.add_assign_tensor(&d_from_lv);
            let sp = self.cfg.e11_spatial() / 2;
            let d_e2_out = d_e2_flat.reshape(&[n, self.cfg.branch_channels, sp, sp])?;
            let d_f = down_backward(
                &self.params,
                "gen.br_enc",
                self.e2_spec(),
                &branch.e2,
                &d_e2_out,
                &mut grads,
            )?;

            // Split concat: E11 channels first, pooled D11 channels after.
            let c1 = self.cfg.e11_channels();
            let c2 = self.cfg.d11_channels();
            let hw = self.cfg.e11_spatial();
            let plane = hw * hw;
            let mut d_e11 = Tensor::zeros(&[n, c1, hw, hw]);
            let mut d_pooled = Tensor::zeros(&[n, c2, hw, hw]);
            for i in 0..n {
                let src = &d_f.data()[i * (c1 + c2) * plane..(i + 1) * (c1 + c2) * plane];
                d_e11.data_mut()[i * c1 * plane..(i + 1) * c1 * plane]
                    .copy_from_slice(&src[..c1 * plane]);
                d_pooled.data_mut()[i * c2 * plane..(i + 1) * c2 * plane]
                    .copy_from_slice(&src[c1 * plane..]);
            }
            for shape in branch.pool_shapes.iter().rev() {
                d_pooled = avg_pool2_backward(shape, &d_pooled);
            }
            d_e11_branch = Some(d_e11);
            d_d11_branch = Some(d_pooled);
        }

        // Main decoder, injecting the branch gradient at the D11 tap.
        let mut d = up.d_x1_logits.clone();
        for i in (d11_split..depth).rev() {
            d = up_backward(
                &self.params,
                &format!("gen.dec{i}"),
                self.dec_spec(i),
                &tape.dec[i],
                &d,
                &mut grads,
            )?;
        }
        if let Some(db) = &d_d11_branch {
            d.add_assign_tensor(db);
        }
        for i in (0..d11_split).rev() {
            d = up_backward(
                &self.params,
                &format!("gen.dec{i}"),
                self.dec_spec(i),
                &tape.dec[i],
                &d,
                &mut grads,
            )?;
        }
        let d_dec_in = d.reshape(&[n, self.cfg.bottleneck_features()])?;
        let d_z1 = linear_bwd(&self.params, "gen.dec_in", &tape.z1, &d_dec_in, &mut grads)?;
        let (dmu_z, dlv_z) = reparameterize_backward(&d_z1, &tape.logvar1, &tape.eps1);
        let mut d_mu1 = dmu_z;
        let mut d_lv1 = dlv_z;
        d_mu1.add_assign_tensor(&up.d_mu1);
        d_lv1.add_assign_tensor(&up.d_logvar1);

        // Latent heads back into the encoder bottleneck.
        let mut d_flat = linear_bwd(&self.params, "gen.mu", &tape.flat, &d_mu1, &mut grads)?;
        let d_from_lv = linear_bwd(&self.params, "gen.logvar", &tape.flat, &d_lv1, &mut grads)?;
        d_flat.add_assign_tensor(&d_from_lv);
        let mut d = d_flat.reshape(&[n, self.cfg.bottleneck_channels(), s, s])?;
        for i in (e11_split..depth).rev() {
            d = down_backward(
                &self.params,
                &format!("gen.enc{i}"),
                self.enc_spec(i),
                &tape.enc[i],
                &d,
                &mut grads,
            )?;
        }
        if let Some(db) = &d_e11_branch {
            d.add_assign_tensor(db);
        }
        for i in (0..e11_split).rev() {
            d = down_backward(
                &self.params,
                &format!("gen.enc{i}"),
                self.enc_spec(i),
                &tape.enc[i],
                &d,
                &mut grads,
            )?;
        }

        Ok(grads)
    }
}
