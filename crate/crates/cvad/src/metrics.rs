//! ROC / AUROC, G-Mean threshold selection and bootstrap uncertainty.
//!
//! Decision rule throughout: `score >= threshold` classifies a sample as OOD
//! (label 1). Ties in AUROC receive the Mann-Whitney half credit.

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Scores paired with binary labels (0 = ID, 1 = OOD).
#[derive(Clone, Debug)]
pub struct LabeledScores {
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl LabeledScores {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Metric(format!(
                "{} scores vs {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Metric("labels must be 0 or 1".to_string()));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Metric("scores must be finite".to_string()));
        }
        Ok(LabeledScores { scores, labels })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        (self.labels.len() - pos, pos)
    }

    fn check_both_classes(&self) -> Result<(usize, usize)> {
        let (neg, pos) = self.class_counts();
        if neg == 0 || pos == 0 {
            return Err(Error::Metric(format!(
                "ROC needs both classes, got {neg} ID / {pos} OOD"
            )));
        }
        Ok((neg, pos))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Points ordered by ascending threshold, from the all-positive endpoint
/// (-inf, 1, 1) to the all-negative endpoint (+inf, 0, 0), one point per
/// distinct score in between.
#[derive(Clone, Debug)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

pub fn roc_curve(ls: &LabeledScores) -> Result<RocCurve> {
    let (neg, pos) = ls.check_both_classes()?;
    let mut order: Vec<usize> = (0..ls.len()).collect();
    order.sort_by(|&a, &b| ls.scores[a].partial_cmp(&ls.scores[b]).unwrap());

    let mut points = Vec::with_capacity(ls.len() + 2);
    points.push(RocPoint {
        threshold: f64::NEG_INFINITY,
        fpr: 1.0,
        tpr: 1.0,
    });

    // Walking thresholds upward: samples strictly below the threshold stop
    // being flagged. Ties share one curve point.
    let mut below_pos = 0usize;
    let mut below_neg = 0usize;
    let mut i = 0;
    while i < order.len() {
        let value = ls.scores[order[i]];
        let mut j = i;
        while j < order.len() && ls.scores[order[j]] == value {
            j += 1;
        }
        // Threshold equal to `value`: everything with score >= value is OOD.
        let tp = pos - below_pos;
        let fp = neg - below_neg;
        points.push(RocPoint {
            threshold: value,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
        for &idx in &order[i..j] {
            if ls.labels[idx] == 1 {
                below_pos += 1;
            } else {
                below_neg += 1;
            }
        }
        i = j;
    }
    points.push(RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    });
    Ok(RocCurve { points })
}

/// Trapezoidal area under the ROC curve. Equals the tie-aware pairwise
/// probability P(score_OOD > score_ID) + 0.5 P(equal).
pub fn auroc(ls: &LabeledScores) -> Result<f64> {
    let curve = roc_curve(ls)?;
    // Integrate TPR over FPR; points run from FPR 1 down to 0.
    let mut area = 0.0;
    for pair in curve.points.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        area += (a.fpr - b.fpr) * 0.5 * (a.tpr + b.tpr);
    }
    Ok(area)
}

/// Operating point maximizing sqrt(TPR * (1 - FPR)); ties broken by lower
/// FPR, then lower threshold.
pub fn gmean_threshold(curve: &RocCurve) -> RocPoint {
    let mut best = curve.points[0];
    let mut best_g = (best.tpr * (1.0 - best.fpr)).sqrt();
    for &p in &curve.points[1..] {
        let g = (p.tpr * (1.0 - p.fpr)).sqrt();
        let better = g > best_g
            || (g == best_g
                && (p.fpr < best.fpr || (p.fpr == best.fpr && p.threshold < best.threshold)));
        if better {
            best = p;
            best_g = g;
        }
    }
    best
}

/// Bootstrap mean and sample standard deviation of AUC and of the
/// G-Mean-selected TPR/FPR (the threshold is re-selected in every round).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BootstrapSummary {
    pub rounds: usize,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub tpr_mean: f64,
    pub tpr_std: f64,
    pub fpr_mean: f64,
    pub fpr_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn bootstrap(ls: &LabeledScores, rounds: usize, seed: u64) -> Result<BootstrapSummary> {
    ls.check_both_classes()?;
    if rounds == 0 {
        return Err(Error::Metric(
            "bootstrap needs at least one round".to_string(),
        ));
    }
    let n = ls.len();
    let mut rng = Rng::stream(seed, &[0x626f_6f74]);
    let mut aucs = Vec::with_capacity(rounds);
    let mut tprs = Vec::with_capacity(rounds);
    let mut fprs = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        // Resample the pooled set; re-draw if a round comes out single-class.
        let resampled = loop {
            let mut scores = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                let idx = rng.below(n as u64) as usize;
                scores.push(ls.scores[idx]);
                labels.push(ls.labels[idx]);
            }
            let candidate = LabeledScores::new(scores, labels)?;
            if candidate.check_both_classes().is_ok() {
                break candidate;
            }
        };
        aucs.push(auroc(&resampled)?);
        let point = gmean_threshold(&roc_curve(&resampled)?);
        tprs.push(point.tpr);
        fprs.push(point.fpr);
    }
    let (auc_mean, auc_std) = mean_std(&aucs);
    let (tpr_mean, tpr_std) = mean_std(&tprs);
    let (fpr_mean, fpr_std) = mean_std(&fprs);
    Ok(BootstrapSummary {
        rounds,
        auc_mean,
        auc_std,
        tpr_mean,
        tpr_std,
        fpr_mean,
        fpr_std,
    })
}
