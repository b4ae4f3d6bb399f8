//! Brier score, calibration (reliability) curves, ROC curves and AUC.
//!
//! The Brier score is the mean squared difference between the predicted
//! positive-class probability and the realized 0/1 label — the quantity a
//! class-probability estimator is judged by. A calibration curve bins
//! predictions by value and compares each bin's mean prediction with its
//! empirical positive fraction; a well-calibrated estimator hugs the
//! diagonal. ROC curves sweep a threshold over the predictions; the area
//! under the curve equals the probability that a random positive outranks a
//! random negative, ties counted one half.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {pred} predictions vs {labels} labels")]
    LengthMismatch { pred: usize, labels: usize },
    #[error("empty input")]
    Empty,
    #[error("both classes must be present")]
    SingleClass,
    #[error("bad configuration: {0}")]
    Config(String),
    #[error("prediction {0} outside [0, 1]")]
    Domain(f64),
}

fn check_inputs(pred: &[f64], y: &[bool]) -> Result<(), EvalError> {
    if pred.len() != y.len() {
        return Err(EvalError::LengthMismatch { pred: pred.len(), labels: y.len() });
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some(&bad) = pred.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(EvalError::Domain(bad));
    }
    Ok(())
}

/// Mean squared error of probabilities against 0/1 outcomes.
pub fn brier(pred: &[f64], y: &[bool]) -> Result<f64, EvalError> {
    check_inputs(pred, y)?;
    let sum: f64 = pred
        .iter()
        .zip(y)
        .map(|(&p, &label)| {
            let d = p - f64::from(label);
            d * d
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

/// One equal-width bin of a calibration curve. Empty bins carry `count = 0`
/// and no statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lo: f64,
    pub hi: f64,
    pub mean_predicted: Option<f64>,
    pub empirical_positive_fraction: Option<f64>,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub bins: Vec<CalibrationBin>,
    pub n_bins: usize,
    pub min_count: u64,
    /// Largest |mean prediction − empirical fraction| over bins with at
    /// least `min_count` samples; 0 when no bin qualifies.
    pub max_gap: f64,
}

/// Bin predictions into `n_bins` equal-width bins over [0, 1] (the top bin
/// includes 1.0) and compare per-bin means against empirical fractions.
pub fn calibration_curve(
    pred: &[f64],
    y: &[bool],
    n_bins: usize,
    min_count: u64,
) -> Result<CalibrationReport, EvalError> {
    check_inputs(pred, y)?;
    if n_bins < 2 {
        return Err(EvalError::Config(format!("n_bins {n_bins} must be at least 2")));
    }
    let mut sums = vec![0.0f64; n_bins];
    let mut positives = vec![0u64; n_bins];
    let mut counts = vec![0u64; n_bins];
    for (&p, &label) in pred.iter().zip(y) {
        let bin = ((p * n_bins as f64) as usize).min(n_bins - 1);
        sums[bin] += p;
        positives[bin] += u64::from(label);
        counts[bin] += 1;
    }
    let mut bins = Vec::with_capacity(n_bins);
    let mut max_gap = 0.0f64;
    for i in 0..n_bins {
        let (mean_predicted, fraction) = if counts[i] > 0 {
            let mean = sums[i] / counts[i] as f64;
            let frac = positives[i] as f64 / counts[i] as f64;
            if counts[i] >= min_count {
                max_gap = max_gap.max((mean - frac).abs());
            }
            (Some(mean), Some(frac))
        } else {
            (None, None)
        };
        bins.push(CalibrationBin {
            lo: i as f64 / n_bins as f64,
            hi: (i + 1) as f64 / n_bins as f64,
            mean_predicted,
            empirical_positive_fraction: fraction,
            count: counts[i],
        });
    }
    Ok(CalibrationReport { bins, n_bins, min_count, max_gap })
}

impl CalibrationReport {
    /// CSV point list: `lo,hi,mean_predicted,empirical_positive_fraction,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lo,hi,mean_predicted,empirical_positive_fraction,count\n");
        for b in &self.bins {
            let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                b.lo,
                b.hi,
                fmt(b.mean_predicted),
                fmt(b.empirical_positive_fraction),
                b.count
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocReport {
    /// Points ordered by threshold descending, from (0, 0) to (1, 1).
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// Sweep a threshold over every distinct prediction value (ties grouped)
/// and integrate the curve by the trapezoidal rule.
pub fn roc(pred: &[f64], y: &[bool]) -> Result<RocReport, EvalError> {
    check_inputs(pred, y)?;
    let pos_total = y.iter().filter(|&&l| l).count() as f64;
    let neg_total = y.len() as f64 - pos_total;
    if pos_total == 0.0 || neg_total == 0.0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..pred.len()).collect();
    order.sort_by(|&a, &b| pred[b].partial_cmp(&pred[a]).expect("finite predictions"));

    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0 }];
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut i = 0;
    while i < order.len() {
        let value = pred[order[i]];
        while i < order.len() && pred[order[i]] == value {
            if y[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint { fpr: fp as f64 / neg_total, tpr: tp as f64 / pos_total });
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) / 2.0)
        .sum();
    Ok(RocReport { points, auc })
}

impl RocReport {
    /// CSV point list: `fpr,tpr`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,tpr\n");
        for p in &self.points {
            out.push_str(&format!("{},{}\n", p.fpr, p.tpr));
        }
        out
    }
}
