//! Two-stage training: first the generator on ID data only, then the binary
//! discriminator against frozen-generator reconstructions, plus calibration
//! of the score-normalization statistics.

mod checkpoint;

pub use checkpoint::{Calibration, Checkpoint, Stage, CKPT_MAGIC, CKPT_VERSION};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::{ImageSet, Role};
use crate::error::{Error, Result};
use crate::losses::{
    bce_with_logits_scalar, generator_loss, generator_loss_grads, LossWeights, PerSampleLoss,
};
use crate::models::{Discriminator, Generator};
use crate::nn::{adam_step, sigmoid_scalar, AdamState};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs_stage1 < 1 || self.epochs_stage2 < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch_size must be >= 2 (batch norm), got {}",
                self.batch_size
            )));
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::Config(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        Ok(())
    }

    pub fn weights(&self) -> Result<LossWeights> {
        LossWeights::new(self.alpha1, self.alpha2)
    }
}

/// One row of the training log CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub split: String,
    pub loss_total: f64,
    pub recon1: f64,
    pub kl1: f64,
    pub recon2: f64,
    pub kl2: f64,
    pub disc_acc: Option<f64>,
}

pub const LOG_HEADER: &str = "epoch,split,loss_total,recon1,kl1,recon2,kl2,disc_acc";

pub fn write_log_csv(path: &Path, rows: &[TrainLogRow], config_hash: &str) -> Result<()> {
    let mut out = format!("# config_hash={config_hash}\n{LOG_HEADER}\n");
    for r in rows {
        let acc = r.disc_acc.map_or(String::new(), |a| a.to_string());
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.epoch, r.split, r.loss_total, r.recon1, r.kl1, r.recon2, r.kl2, acc
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_log_csv(path: &Path) -> Result<Vec<TrainLogRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for line in text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
    {
        if line == LOG_HEADER {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(Error::Dataset(format!("bad log row `{line}`")));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Dataset(format!("bad number `{s}`")))
        };
        rows.push(TrainLogRow {
            epoch: f[0]
                .parse()
                .map_err(|_| Error::Dataset(format!("bad epoch `{}`", f[0])))?,
            split: f[1].to_string(),
            loss_total: num(f[2])?,
            recon1: num(f[3])?,
            kl1: num(f[4])?,
            recon2: num(f[5])?,
            kl2: num(f[6])?,
            disc_acc: if f[7].is_empty() {
                None
            } else {
                Some(num(f[7])?)
            },
        });
    }
    Ok(rows)
}

/// Neither training stage may ever read an OOD-labeled sample.
fn audit_id_only(set: &ImageSet, what: &str) -> Result<()> {
    if set.is_empty() {
        return Err(Error::Dataset(format!("{what} set is empty")));
    }
    for (role, label) in set.roles.iter().zip(&set.labels) {
        if *role != Role::Id || *label != 0 {
            return Err(Error::Dataset(format!(
                "{what} set contains an OOD-labeled sample (role {role}); training reads ID data only"
            )));
        }
    }
    Ok(())
}

fn mean_components(losses: &[PerSampleLoss<f32>], counts: &[usize]) -> (f64, f64, f64, f64, f64) {
    let n: usize = counts.iter().sum();
    let mut sums = [0.0f64; 5];
    for loss in losses {
        for i in 0..loss.total.len() {
            sums[0] += loss.total[i] as f64;
            sums[1] += loss.recon1[i] as f64;
            sums[2] += loss.kl1[i] as f64;
            sums[3] += loss.recon2[i] as f64;
            sums[4] += loss.kl2[i] as f64;
        }
    }
    let n = n as f64;
    (
        sums[0] / n,
        sums[1] / n,
        sums[2] / n,
        sums[3] / n,
        sums[4] / n,
    )
}

/// Mean posterior-mean (eval-mode) loss components over a set.
pub fn eval_loss(
    gen: &Generator<f32>,
    set: &ImageSet,
    weights: &LossWeights,
    batch_size: usize,
) -> Result<(f64, f64, f64, f64, f64)> {
    let mut losses = Vec::new();
    let mut counts = Vec::new();
    let mut start = 0;
    while start < set.len() {
        let count = batch_size.min(set.len() - start);
        let x = set.batch(start, count);
        let out = gen.forward_eval(&x, None, None)?;
        losses.push(generator_loss(&out, &x, weights)?);
        counts.push(count);
        start += count;
    }
    Ok(mean_components(&losses, &counts))
}

const TAG_GEN_INIT: u64 = 0x11;
const TAG_DISC_INIT: u64 = 0x12;
const TAG_SHUFFLE: u64 = 0x21;
const TAG_EPS: u64 = 0x22;

/// Stage 1: train the cascade generator on the ID training split.
/// `progress` is invoked once per emitted log row as epochs finish.
pub fn train_generator(
    train: &ImageSet,
    val: &ImageSet,
    cfg: &RunConfig,
    mut progress: impl FnMut(&TrainLogRow),
) -> Result<(Checkpoint, Vec<TrainLogRow>)> {
    cfg.validate()?;
    audit_id_only(train, "train")?;
    audit_id_only(val, "val")?;
    let tc = &cfg.train;
    let weights = tc.weights()?;
    let mut init_rng = Rng::stream(tc.seed, &[TAG_GEN_INIT]);
    let mut gen: Generator<f32> = Generator::init(cfg.arch.clone(), &mut init_rng)?;
    let mut adam: AdamState<f32> = AdamState::new(tc.lr);
    let mut rows = Vec::new();

    for epoch in 0..tc.epochs_stage1 {
        let mut order: Vec<usize> = (0..train.len()).collect();
        Rng::stream(tc.seed, &[TAG_SHUFFLE, epoch as u64]).shuffle(&mut order);
        let mut eps_rng = Rng::stream(tc.seed, &[TAG_EPS, epoch as u64]);

        let mut batch_losses = Vec::new();
        let mut batch_counts = Vec::new();
        let mut start = 0;
        let mut batch_idx = 0;
        while start < order.len() {
            let count = tc.batch_size.min(order.len() - start);
            if count < 2 {
                break; // batch norm needs at least 2 samples
            }
            let x = train.gather(&order[start..start + count]);
            let (eps1, eps2) = gen.draw_eps(count, &mut eps_rng);
            let (out, tape) = gen.forward_train(&x, &eps1, eps2.as_ref())?;
            let loss = generator_loss(&out, &x, &weights)?;
            if !loss.mean_total().is_finite() {
                return Err(Error::Diverged {
                    stage: "generator",
                    epoch,
                    batch: batch_idx,
                });
            }
            let upstream = generator_loss_grads(&out, &x, &weights)?;
            let grads = gen.backward(&tape, &upstream)?;
            adam_step(&mut gen.params, &grads, &mut adam)?;
            batch_losses.push(loss);
            batch_counts.push(count);
            start += count;
            batch_idx += 1;
        }

        let (t, r1, k1, r2, k2) = mean_components(&batch_losses, &batch_counts);
        rows.push(TrainLogRow {
            epoch,
            split: "train".into(),
            loss_total: t,
            recon1: r1,
            kl1: k1,
            recon2: r2,
            kl2: k2,
            disc_acc: None,
        });
        progress(rows.last().unwrap());
        let (t, r1, k1, r2, k2) = eval_loss(&gen, val, &weights, tc.batch_size)?;
        rows.push(TrainLogRow {
            epoch,
            split: "val".into(),
            loss_total: t,
            recon1: r1,
            kl1: k1,
            recon2: r2,
            kl2: k2,
            disc_acc: None,
        });
        progress(rows.last().unwrap());
    }

    let ckpt = Checkpoint {
        arch: cfg.arch.clone(),
        train: tc.clone(),
        stage: Stage::Generator,
        epoch: tc.epochs_stage1,
        seed: tc.seed,
        config_hash: cfg.hash(),
        calibration: None,
        tensors: gen.params,
    };
    ckpt.validate()?;
    Ok((ckpt, rows))
}

/// Stage 2: train the discriminator against frozen-generator posterior-mean
/// reconstructions (real -> 0, reconstruction -> 1).
pub fn train_discriminator(
    ckpt: &Checkpoint,
    train: &ImageSet,
    cfg: &RunConfig,
    mut progress: impl FnMut(&TrainLogRow),
) -> Result<(Checkpoint, Vec<TrainLogRow>)> {
    cfg.validate()?;
    audit_id_only(train, "train")?;
    let tc = &cfg.train;
    let gen = ckpt.generator()?;
    let mut init_rng = Rng::stream(tc.seed, &[TAG_DISC_INIT]);
    let mut disc: Discriminator<f32> = Discriminator::init(cfg.arch.clone(), &mut init_rng)?;
    let mut adam: AdamState<f32> = AdamState::new(tc.lr);
    let mut rows = Vec::new();

    for epoch in 0..tc.epochs_stage2 {
        let mut order: Vec<usize> = (0..train.len()).collect();
        Rng::stream(tc.seed, &[TAG_SHUFFLE, 0x1000 + epoch as u64]).shuffle(&mut order);

        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        let mut seen = 0usize;
        let mut start = 0;
        let mut batch_idx = 0;
        while start < order.len() {
            let count = tc.batch_size.min(order.len() - start);
            if count < 2 {
                break;
            }
            let real = train.gather(&order[start..start + count]);
            let fake = gen.forward_eval(&real, None, None)?.x_recon;

            // Reals and fakes share one batch (and one set of batch-norm
            // statistics): training-time normalization then matches the
            // blended running statistics eval mode will use.
            let per = cfg.arch.in_channels * cfg.arch.image_size * cfg.arch.image_size;
            let mut mixed = Vec::with_capacity(2 * count * per);
            mixed.extend_from_slice(real.data());
            mixed.extend_from_slice(fake.data());
            let x = Tensor::from_vec(
                &[
                    2 * count,
                    cfg.arch.in_channels,
                    cfg.arch.image_size,
                    cfg.arch.image_size,
                ],
                mixed,
            )?;
            let (logits, tape) = disc.logits_train(&x)?;
            let total = (2 * count) as f32;
            let mut loss = 0.0f64;
            let mut d = Tensor::zeros(logits.shape());
            for i in 0..2 * count {
                let target = if i < count { 0.0 } else { 1.0 };
                let logit = logits.data()[i];
                loss += bce_with_logits_scalar(logit, target) as f64;
                let p = sigmoid_scalar(logit);
                d.data_mut()[i] = (p - target) / total;
                if (p >= 0.5) == (target == 1.0) {
                    correct += 1;
                }
            }
            loss /= total as f64;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    stage: "discriminator",
                    epoch,
                    batch: batch_idx,
                });
            }
            let grads = disc.backward(&tape, &d)?;
            adam_step(&mut disc.params, &grads, &mut adam)?;

            loss_sum += loss * (2 * count) as f64;
            seen += 2 * count;
            start += count;
            batch_idx += 1;
        }

        rows.push(TrainLogRow {
            epoch,
            split: "disc".into(),
            loss_total: loss_sum / seen as f64,
            recon1: 0.0,
            kl1: 0.0,
            recon2: 0.0,
            kl2: 0.0,
            disc_acc: Some(correct as f64 / seen as f64),
        });
        progress(rows.last().unwrap());
    }

    let mut tensors = gen.params; // generator byte-identical, frozen throughout
    tensors.merge(disc.params);
    let full = Checkpoint {
        arch: cfg.arch.clone(),
        train: tc.clone(),
        stage: Stage::Full,
        epoch: tc.epochs_stage2,
        seed: tc.seed,
        config_hash: cfg.hash(),
        calibration: ckpt.calibration,
        tensors,
    };
    full.validate()?;
    Ok((full, rows))
}

/// Store min/max of the per-sample generator loss over the validation ID set.
pub fn calibrate(ckpt: &mut Checkpoint, val: &ImageSet) -> Result<()> {
    if ckpt.stage != Stage::Full {
        return Err(Error::State(
            "calibration requires a stage=full checkpoint".to_string(),
        ));
    }
    if val.is_empty() {
        return Err(Error::Dataset("calibration set is empty".to_string()));
    }
    let gen = ckpt.generator()?;
    let weights = ckpt.train.weights()?;
    let lg = crate::scoring::reconstruction_error(&gen, val, &weights, ckpt.train.batch_size)?;
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in &lg {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    ckpt.calibration = Some(Calibration {
        lg_min: lo,
        lg_max: hi,
    });
    Ok(())
}

/// Held-out real-vs-reconstruction accuracy of the discriminator (eval mode,
/// threshold 0.5 under the real -> 0 convention).
pub fn discriminator_accuracy(
    gen: &Generator<f32>,
    disc: &Discriminator<f32>,
    set: &ImageSet,
    batch_size: usize,
) -> Result<f64> {
    let mut correct = 0usize;
    let mut seen = 0usize;
    let mut start = 0;
    while start < set.len() {
        let count = batch_size.min(set.len() - start);
        let real = set.batch(start, count);
        let fake = gen.forward_eval(&real, None, None)?.x_recon;
        let p_real = disc.forward_eval(&real)?;
        let p_fake = disc.forward_eval(&fake)?;
        correct += p_real.data().iter().filter(|&&p| p < 0.5).count();
        correct += p_fake.data().iter().filter(|&&p| p >= 0.5).count();
        seen += 2 * count;
        start += count;
    }
    Ok(correct as f64 / seen as f64)
}
