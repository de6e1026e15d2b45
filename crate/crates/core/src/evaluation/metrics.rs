use serde::{Deserialize, Serialize};

use crate::datamodel::BinaryLabel;
use crate::error::{PalsyError, Result};

/// Confusion counts with Palsy as the positive class. Ratios with a zero
/// denominator are 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn safe_div(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

impl MetricsRecord {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let precision = safe_div(tp as f64, (tp + fp) as f64);
        let recall = safe_div(tp as f64, (tp + fn_) as f64);
        let f1 = safe_div(2.0 * precision * recall, precision + recall);
        MetricsRecord { tp, fp, fn_, tn, precision, recall, f1 }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn compute_metrics(predicted: &[BinaryLabel], truth: &[BinaryLabel]) -> Result<MetricsRecord> {
    if predicted.len() != truth.len() {
        return Err(PalsyError::Invalid(format!("{} predictions for {} labels", predicted.len(), truth.len())));
    }
    if predicted.is_empty() {
        return Err(PalsyError::Invalid("no predictions to score".into()));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (p, t) in predicted.iter().zip(truth) {
        match (p, t) {
            (BinaryLabel::Palsy, BinaryLabel::Palsy) => tp += 1,
            (BinaryLabel::Palsy, BinaryLabel::NoPalsy) => fp += 1,
            (BinaryLabel::NoPalsy, BinaryLabel::Palsy) => fn_ += 1,
            (BinaryLabel::NoPalsy, BinaryLabel::NoPalsy) => tn += 1,
        }
    }
    Ok(MetricsRecord::from_counts(tp, fp, fn_, tn))
}

/// Equal-weight mean of per-fold precision, recall and F1.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AverageMetrics {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub folds: usize,
}

pub fn average(records: &[MetricsRecord]) -> AverageMetrics {
    let n = records.len();
    if n == 0 {
        return AverageMetrics::default();
    }
    let mean = |f: fn(&MetricsRecord) -> f64| records.iter().map(f).sum::<f64>() / n as f64;
    AverageMetrics { f1: mean(|r| r.f1), precision: mean(|r| r.precision), recall: mean(|r| r.recall), folds: n }
}

/// Metrics of the summed confusion matrix over all folds.
pub fn pooled(records: &[MetricsRecord]) -> MetricsRecord {
    let sum = |f: fn(&MetricsRecord) -> usize| records.iter().map(f).sum();
    MetricsRecord::from_counts(sum(|r| r.tp), sum(|r| r.fp), sum(|r| r.fn_), sum(|r| r.tn))
}
