//! Anomaly scores.
//!
//! Per sample: L_G is the posterior-mean generator loss, S_G its min-max
//! normalization into [0, 1], S_D the discriminator's OOD probability, and
//! S = 0.5 * (S_G + S_D). Dataset mode computes the normalization bounds over
//! the scored set itself in a first pass; calibrated mode reuses the bounds
//! stored in the checkpoint and clamps.

use std::fs;
use std::path::Path;

use crate::data::ImageSet;
use crate::error::{Error, Result};
use crate::losses::{generator_loss, LossWeights};
use crate::models::Generator;
use crate::training::Checkpoint;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreMode {
    /// Normalize L_G by the min/max of the scored set (two passes).
    Dataset,
    /// Normalize by the calibration stored in the checkpoint, clamped to [0, 1].
    Calibrated,
}

impl ScoreMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreMode::Dataset => "dataset",
            ScoreMode::Calibrated => "calibrated",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dataset" => Ok(ScoreMode::Dataset),
            "calibrated" => Ok(ScoreMode::Calibrated),
            other => Err(Error::Config(format!("unknown score mode `{other}`"))),
        }
    }
}

/// Label value used for samples without ground truth (bare-folder scoring).
pub const LABEL_UNKNOWN: u8 = 255;

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRecord {
    pub sample_id: String,
    pub label: u8,
    pub role: String,
    pub l_g: f32,
    pub s_g: f32,
    pub s_d: f32,
    pub s: f32,
}

/// Per-sample generator loss in deterministic posterior-mean mode.
pub fn reconstruction_error(
    gen: &Generator<f32>,
    set: &ImageSet,
    weights: &LossWeights,
    batch_size: usize,
) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(set.len());
    let mut start = 0;
    while start < set.len() {
        let count = batch_size.min(set.len() - start);
        let x = set.batch(start, count);
        let fwd = gen.forward_eval(&x, None, None)?;
        out.extend(generator_loss(&fwd, &x, weights)?.total);
        start += count;
    }
    Ok(out)
}

fn normalize(lg: &[f32], lo: f32, hi: f32, clamp: bool) -> Vec<f32> {
    let span = hi - lo;
    lg.iter()
        .map(|&v| {
            if span <= 0.0 {
                // Degenerate min == max: every sample equally in-distribution.
                0.0
            } else {
                let n = (v - lo) / span;
                if clamp {
                    n.clamp(0.0, 1.0)
                } else {
                    n
                }
            }
        })
        .collect()
}

/// Score every sample of `set` with the full checkpoint.
pub fn score_set(ckpt: &Checkpoint, set: &ImageSet, mode: ScoreMode) -> Result<Vec<ScoreRecord>> {
    let gen = ckpt.generator()?;
    let disc = ckpt.discriminator()?;
    let weights = ckpt.train.weights()?;
    let batch = ckpt.train.batch_size;

    let lg = reconstruction_error(&gen, set, &weights, batch)?;
    let s_g = match mode {
        ScoreMode::Dataset => {
            let lo = lg.iter().copied().fold(f32::INFINITY, f32::min);
            let hi = lg.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            normalize(&lg, lo, hi, false)
        }
        ScoreMode::Calibrated => {
            let cal = ckpt.calibration.ok_or_else(|| {
                Error::State("calibrated scoring requires a calibrated checkpoint".to_string())
            })?;
            normalize(&lg, cal.lg_min, cal.lg_max, true)
        }
    };

    let mut s_d = Vec::with_capacity(set.len());
    let mut start = 0;
    while start < set.len() {
        let count = batch.min(set.len() - start);
        let x = set.batch(start, count);
        s_d.extend_from_slice(disc.forward_eval(&x)?.data());
        start += count;
    }

    Ok((0..set.len())
        .map(|i| ScoreRecord {
            sample_id: set.paths[i].clone(),
            label: set.labels[i],
            role: set.roles[i].as_str().to_string(),
            l_g: lg[i],
            s_g: s_g[i],
            s_d: s_d[i],
            s: 0.5 * (s_g[i] + s_d[i]),
        })
        .collect())
}

/// The ablation views: generator-only, discriminator-only, combined.
pub fn ablation_scores(records: &[ScoreRecord]) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    (
        records.iter().map(|r| r.s_g).collect(),
        records.iter().map(|r| r.s_d).collect(),
        records.iter().map(|r| r.s).collect(),
    )
}

pub const SCORE_HEADER: &str = "sample_id,label,role,L_G,S_G,S_D,S";

pub fn write_score_csv(path: &Path, records: &[ScoreRecord], config_hash: &str) -> Result<()> {
    let mut out = format!("# config_hash={config_hash}\n{SCORE_HEADER}\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.sample_id, r.label, r.role, r.l_g, r.s_g, r.s_d, r.s
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_score_csv(path: &Path) -> Result<Vec<ScoreRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for line in text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
    {
        if line == SCORE_HEADER {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(Error::Dataset(format!("bad score row `{line}`")));
        }
        let num = |s: &str| {
            s.parse::<f32>()
                .map_err(|_| Error::Dataset(format!("bad score value `{s}`")))
        };
        records.push(ScoreRecord {
            sample_id: f[0].to_string(),
            label: f[1]
                .parse()
                .map_err(|_| Error::Dataset(format!("bad label `{}`", f[1])))?,
            role: f[2].to_string(),
            l_g: num(f[3])?,
            s_g: num(f[4])?,
            s_d: num(f[5])?,
            s: num(f[6])?,
        });
    }
    Ok(records)
}
